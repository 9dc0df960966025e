#ifndef RVM_MODEL_HPP
#define RVM_MODEL_HPP

// Market/model configuration: per-asset Volterra CIR parameters, the rate
// curve, the simulation grid and the utility specification.

#include "rvm/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvm {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct AssetParams {
  double alpha = 0.9;
  double lambda = 1.0;
  double nu = 0.0;
  double theta = 0.0;
  double rho = 0.0;
  double mu0 = 0.0;
  double c = 0.0;  ///< variance scale: Var(V_0) = c nu^2 x_inf

  KernelSpec kernel() const { return {alpha, lambda}; }
  double x_inf() const { return mu0 / lambda; }
  double v0_mean() const { return x_inf(); }
  double v0_var() const { return c * nu * nu * x_inf(); }

  void validate(std::size_t index) const {
    const std::string who = "asset[" + std::to_string(index) + "].";
    auto fail = [&](const std::string& field, const std::string& rule) {
      throw ConfigError(who + field + " must satisfy " + rule);
    };
    if (!(alpha > 0.5) || alpha > 1.0) fail("alpha", "1/2 < alpha <= 1");
    if (!(lambda > 0.0)) fail("lambda", "lambda > 0");
    if (!(nu >= 0.0)) fail("nu", "nu >= 0");
    if (!(theta >= 0.0)) fail("theta", "theta >= 0");
    if (!(std::fabs(rho) <= 1.0)) fail("rho", "|rho| <= 1");
    if (!(mu0 >= 0.0)) fail("mu0", "mu0 >= 0");
    if (!(c >= 0.0)) fail("c", "c >= 0");
  }
};

/// Piecewise-constant short rate: rates[i] on [knots[i], knots[i+1]), the last
/// rate extending to infinity. knots[0] must be 0.
class RateCurve {
 public:
  RateCurve() : knots_{0.0}, rates_{0.0} {}
  explicit RateCurve(double constant) : knots_{0.0}, rates_{constant} { validate(); }
  RateCurve(std::vector<double> knots, std::vector<double> rates) : knots_(std::move(knots)), rates_(std::move(rates)) {
    validate();
  }

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& rates() const { return rates_; }

  double rate(double t) const {
    std::size_t i = 0;
    while (i + 1 < knots_.size() && t >= knots_[i + 1]) ++i;
    return rates_[i];
  }

  /// int_a^b r(s) ds for a <= b.
  double integral(double a, double b) const {
    double total = 0.0;
    for (std::size_t i = 0; i < knots_.size(); ++i) {
      const double lo = std::max(a, knots_[i]);
      const double hi = (i + 1 < knots_.size()) ? std::min(b, knots_[i + 1]) : b;
      if (hi > lo) total += rates_[i] * (hi - lo);
    }
    return total;
  }

  bool is_zero() const {
    for (double r : rates_) {
      if (r != 0.0) return false;
    }
    return true;
  }

  void validate() const {
    if (knots_.empty() || knots_.size() != rates_.size()) throw ConfigError("rate_curve: knots and rates must have equal non-zero length");
    if (knots_.front() != 0.0) throw ConfigError("rate_curve: first knot must be 0");
    for (std::size_t i = 1; i < knots_.size(); ++i) {
      if (!(knots_[i] > knots_[i - 1])) throw ConfigError("rate_curve: knots must be strictly increasing");
    }
    for (double r : rates_) {
      if (!(r >= 0.0)) throw ConfigError("rate_curve: rates must be >= 0");
    }
  }

 private:
  std::vector<double> knots_;
  std::vector<double> rates_;
};

struct ModelParams {
  std::vector<AssetParams> assets;
  RateCurve rate;
  double horizon = 1.0;
  double x0 = 1.0;

  std::size_t d() const { return assets.size(); }

  void validate() const {
    if (assets.empty()) throw ConfigError("model.assets must contain at least one asset");
    for (std::size_t i = 0; i < assets.size(); ++i) assets[i].validate(i);
    if (!(horizon > 0.0)) throw ConfigError("model.horizon must be > 0");
    if (!std::isfinite(x0)) throw ConfigError("model.x0 must be finite");
    rate.validate();
  }
};

/// Two-asset rough parameter set used throughout the samples and tests.
inline ModelParams reference_two_asset_model() {
  ModelParams p;
  p.assets = {
      AssetParams{0.9, 0.2, 0.4, 0.1, -0.7, 0.2, 0.01},
      AssetParams{0.6, 0.6, 0.2, 0.1, -0.55, 0.25, 0.03},
  };
  p.horizon = 1.0;
  p.x0 = 1.0;
  return p;
}

struct SimGrid {
  int n = 600;
  double horizon = 1.0;

  SimGrid() = default;
  SimGrid(int steps, double t_end) : n(steps), horizon(t_end) {
    if (n < 1) throw ConfigError("grid: n_steps must be >= 1");
    if (!(horizon > 0.0)) throw ConfigError("grid: horizon must be > 0");
  }

  double step() const { return horizon / n; }
  double time(int k) const { return k == n ? horizon : horizon * k / n; }
  std::vector<double> times() const { return uniform_grid(horizon, n); }
};

enum class UtilityKind { power, exponential };

inline const char* to_string(UtilityKind kind) { return kind == UtilityKind::power ? "power" : "exponential"; }

inline UtilityKind parse_utility_kind(const std::string& s) {
  if (s == "power") return UtilityKind::power;
  if (s == "exponential") return UtilityKind::exponential;
  throw ConfigError("utility.kind must be 'power' or 'exponential', got '" + s + "'");
}

struct UtilitySpec {
  UtilityKind kind = UtilityKind::power;
  double gamma = 0.5;

  void validate() const {
    if (kind == UtilityKind::power && !(gamma > 0.0 && gamma < 1.0)) {
      throw ConfigError("utility.gamma must lie in (0, 1) for power utility, got " + std::to_string(gamma));
    }
    if (kind == UtilityKind::exponential && !(gamma > 0.0)) {
      throw ConfigError("utility.gamma must be > 0 for exponential utility, got " + std::to_string(gamma));
    }
  }

  double operator()(double x) const {
    if (kind == UtilityKind::power) return std::pow(x, gamma) / gamma;
    return -std::exp(-gamma * x) / gamma;
  }
};

}  // namespace rvm

#endif
