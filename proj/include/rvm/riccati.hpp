#ifndef RVM_RICCATI_HPP
#define RVM_RICCATI_HPP

// Riccati-Volterra equations for the hedging term psi,
//   psi_i(t) = int_0^t K_i(t-s) (a_i + F_i(T-s, psi(s))) ds,
//   F_i(u, x) = kappa theta_i rho_i nu_i sigma_i(u) x - lambda_i x + (nu_i^2/2) eta_i sigma_i(u)^2 x^2,
// solved with the fractional Adams predictor-corrector. The drift matrix is
// diagonal, so the components are decoupled and each uses its own alpha_i.

#include "rvm/kernels.hpp"
#include "rvm/model.hpp"
#include "rvm/stabilizer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvm {

enum class RiccatiVariant { power_general, power_degenerate, exponential_general, exponential_degenerate };

inline const char* to_string(RiccatiVariant v) {
  switch (v) {
    case RiccatiVariant::power_general: return "power_general";
    case RiccatiVariant::power_degenerate: return "power_degenerate";
    case RiccatiVariant::exponential_general: return "exponential_general";
    case RiccatiVariant::exponential_degenerate: return "exponential_degenerate";
  }
  return "?";
}

inline bool is_power(RiccatiVariant v) {
  return v == RiccatiVariant::power_general || v == RiccatiVariant::power_degenerate;
}

inline bool is_degenerate(RiccatiVariant v) {
  return v == RiccatiVariant::power_degenerate || v == RiccatiVariant::exponential_degenerate;
}

/// General-correlation variant for a utility kind.
inline RiccatiVariant general_variant(UtilityKind kind) {
  return kind == UtilityKind::power ? RiccatiVariant::power_general : RiccatiVariant::exponential_general;
}

/// Raised when the power-utility solution explodes before the horizon.
class RiccatiBlowup : public std::runtime_error {
 public:
  RiccatiBlowup(double last_valid, double t_max)
      : std::runtime_error("Riccati solution blows up before the horizon: last valid time " + std::to_string(last_valid) +
                           ", estimated T_max " + std::to_string(t_max)),
        last_valid_time(last_valid),
        t_max(t_max) {}
  double last_valid_time;
  double t_max;
};

using SigmaFunction = std::function<double(double)>;

struct RiccatiSpec {
  RiccatiVariant variant = RiccatiVariant::power_general;
  ModelParams params;
  double gamma = 0.5;  ///< power utility only
  std::vector<SigmaFunction> sigma;  ///< stabilizer per asset, sigma_i(u) for u in [0, T]
  int n = 200;
  double psi_cap = 1e6;

  /// Spec with the stabilizers taken from tables (copied into the closures).
  static RiccatiSpec from_tables(RiccatiVariant variant, const ModelParams& params, double gamma,
                                 const std::vector<StabilizerTable>& stabs, int n = 200) {
    RiccatiSpec spec;
    spec.variant = variant;
    spec.params = params;
    spec.gamma = gamma;
    spec.n = n;
    for (const auto& st : stabs) spec.sigma.emplace_back([st](double u) { return st.value(u); });
    return spec;
  }

  double horizon() const { return params.horizon; }

  void validate() const {
    params.validate();
    if (sigma.size() != params.d()) throw ConfigError("riccati: one stabilizer per asset is required");
    if (n < 1) throw ConfigError("riccati: n must be >= 1");
    if (!(psi_cap > 0.0)) throw ConfigError("riccati: psi_cap must be > 0");
    if (is_power(variant) && !(gamma > 0.0 && gamma < 1.0)) {
      throw ConfigError("riccati: power variants require 0 < gamma < 1, got " + std::to_string(gamma));
    }
    if (is_degenerate(variant)) {
      for (const auto& a : params.assets) {
        if (a.rho != params.assets.front().rho) throw ConfigError("riccati: degenerate variants require equal rho");
      }
    }
  }

  /// Distortion coefficient delta = (1-gamma)/(1-gamma+gamma rho^2) (power degenerate), else 1.
  double delta() const {
    if (variant != RiccatiVariant::power_degenerate) return 1.0;
    const double rho = params.assets.front().rho;
    return (1.0 - gamma) / (1.0 - gamma + gamma * rho * rho);
  }

  /// Coefficients of the right-hand side for asset i.
  struct Coefficients {
    double forcing;  ///< a_i
    double linear;   ///< kappa theta rho nu (multiplies sigma(u) x)
    double lambda;
    double quad;     ///< (nu^2/2) eta (multiplies sigma(u)^2 x^2)
  };

  Coefficients coefficients(std::size_t i) const {
    const auto& a = params.assets[i];
    const double th2 = a.theta * a.theta;
    Coefficients c{};
    c.lambda = a.lambda;
    switch (variant) {
      case RiccatiVariant::power_general: {
        const double k = gamma / (1.0 - gamma);
        c.forcing = k * th2 / 2.0;
        c.linear = k * a.theta * a.rho * a.nu;
        c.quad = 0.5 * a.nu * a.nu * (1.0 + k * a.rho * a.rho);
        break;
      }
      case RiccatiVariant::power_degenerate: {
        const double k = gamma / (1.0 - gamma);
        c.forcing = k * th2 / (2.0 * delta());
        c.linear = k * a.theta * a.rho * a.nu;
        c.quad = 0.5 * a.nu * a.nu;
        break;
      }
      case RiccatiVariant::exponential_general:
      case RiccatiVariant::exponential_degenerate:
        c.forcing = -th2 / 2.0;
        c.linear = -a.theta * a.rho * a.nu;
        c.quad = 0.5 * a.nu * a.nu * (1.0 - a.rho * a.rho);
        break;
    }
    return c;
  }
};

/// F_i(u, x) for asset i (without the forcing constant).
inline double riccati_F(const RiccatiSpec& spec, std::size_t i, double u, double x) {
  const auto c = spec.coefficients(i);
  const double s = spec.sigma[i](u);
  return c.linear * s * x - c.lambda * x + c.quad * s * s * x * x;
}

/// a_i + F_i(T - s, psi_i): the integrand of the Volterra equation at time s.
inline double riccati_rhs(const RiccatiSpec& spec, std::size_t i, double s, const std::vector<double>& psi) {
  const auto c = spec.coefficients(i);
  return c.forcing + riccati_F(spec, i, spec.horizon() - s, psi.at(i));
}

struct RiccatiSolution {
  RiccatiVariant variant = RiccatiVariant::power_general;
  std::vector<double> times;
  std::vector<std::vector<double>> psi;  ///< [asset][k]
  std::vector<double> forcing;
  double delta = 1.0;
  bool blowup = false;
  double last_valid_time = 0.0;
  double t_max = 0.0;  ///< estimate when blowup is set

  std::size_t d() const { return psi.size(); }
  int n() const { return static_cast<int>(times.size()) - 1; }
  double horizon() const { return times.back(); }

  /// Piecewise-linear interpolation of psi_i at t in [0, T].
  double at(std::size_t i, double t) const {
    const int n_ = n();
    const double h = horizon() / n_;
    if (t <= 0.0) return psi[i].front();
    if (t >= horizon()) return psi[i].back();
    const int k = std::min(n_ - 1, static_cast<int>(t / h));
    const double w = (t - times[k]) / (times[k + 1] - times[k]);
    return (1.0 - w) * psi[i][k] + w * psi[i][k + 1];
  }
};

namespace detail {

struct AdamsResult {
  std::vector<double> y;
  int failed_step = -1;  ///< first step with |y| > cap or non-finite, -1 if none
};

// Fractional Adams predictor-corrector for y(t) = int_0^t K(t-s) g(s, y(s)) ds on
// a uniform grid with n steps.
template <class G>
AdamsResult fractional_adams(double alpha, double horizon, int n, double cap, G&& g) {
  const double h = horizon / n;
  const double ca = std::pow(h, alpha) / std::tgamma(alpha + 2.0);
  const double cb = std::pow(h, alpha) / std::tgamma(alpha + 1.0);
  std::vector<double> bw(n), aw(n);
  for (int m = 0; m < n; ++m) {
    bw[m] = cb * (std::pow(m + 1.0, alpha) - std::pow(static_cast<double>(m), alpha));
    aw[m] = ca * (std::pow(m + 2.0, alpha + 1.0) + std::pow(static_cast<double>(m), alpha + 1.0) -
                  2.0 * std::pow(m + 1.0, alpha + 1.0));
  }
  AdamsResult out;
  out.y.assign(n + 1, 0.0);
  std::vector<double> f(n + 1, 0.0);
  f[0] = g(0, 0.0);
  for (int k = 0; k < n; ++k) {
    double pred = 0.0;
    for (int j = 0; j <= k; ++j) pred += bw[k - j] * f[j];
    const double kd = static_cast<double>(k);
    double corr = ca * (std::pow(kd, alpha + 1.0) - (kd - alpha) * std::pow(kd + 1.0, alpha)) * f[0];
    for (int j = 1; j <= k; ++j) corr += aw[k - j] * f[j];
    const double y = corr + ca * g(k + 1, pred);
    if (!std::isfinite(y) || std::fabs(y) > cap) {
      out.failed_step = k + 1;
      out.y.resize(k + 1);
      return out;
    }
    out.y[k + 1] = y;
    f[k + 1] = g(k + 1, y);
  }
  return out;
}

}  // namespace detail

/// Solves one asset on a grid with n steps; returns the Adams result.
inline detail::AdamsResult solve_riccati_component(const RiccatiSpec& spec, std::size_t i, int n) {
  const auto c = spec.coefficients(i);
  const double T = spec.horizon();
  const double h = T / n;
  const auto& sig = spec.sigma[i];
  // sigma(T - t_k) is tabulated once per grid point
  std::vector<double> s(n + 1);
  for (int k = 0; k <= n; ++k) s[k] = sig(k == n ? 0.0 : T - k * h);
  auto g = [&](int k, double x) {
    return c.forcing + c.linear * s[k] * x - c.lambda * x + c.quad * s[k] * s[k] * x * x;
  };
  return detail::fractional_adams(spec.params.assets[i].alpha, T, n, spec.psi_cap, g);
}

/// Solves all components. For power utility an explosion before T raises
/// RiccatiBlowup unless allow_blowup is set, in which case the solution is
/// truncated at the last valid step and blowup/t_max are filled in.
inline RiccatiSolution solve_riccati(const RiccatiSpec& spec, bool allow_blowup = false) {
  spec.validate();
  const int n = spec.n;
  const double T = spec.horizon();
  RiccatiSolution sol;
  sol.variant = spec.variant;
  sol.delta = spec.delta();
  sol.times = uniform_grid(T, n);
  sol.last_valid_time = T;
  sol.t_max = T;
  int valid = n;
  for (std::size_t i = 0; i < spec.params.d(); ++i) {
    sol.forcing.push_back(spec.coefficients(i).forcing);
    auto res = solve_riccati_component(spec, i, n);
    if (res.failed_step >= 0) {
      // refine the explosion time on finer grids until the step is below 1e-3 T
      int fine_n = n;
      int step = res.failed_step;
      while (T / fine_n > 1e-3 * T) {
        fine_n *= 2;
        step = solve_riccati_component(spec, i, fine_n).failed_step;
        if (step < 0) {
          step = fine_n;
          break;
        }
      }
      const double estimate = (step - 0.5) * T / fine_n;
      sol.blowup = true;
      sol.t_max = std::min(sol.t_max, estimate);
      // keep only grid points before the refined explosion time
      const int below = static_cast<int>(std::ceil(estimate / (T / n))) - 1;
      valid = std::min({valid, res.failed_step - 1, std::max(below, 0)});
    }
    sol.psi.push_back(std::move(res.y));
  }
  if (sol.blowup) {
    sol.last_valid_time = sol.times[valid];
    if (!allow_blowup) throw RiccatiBlowup(sol.last_valid_time, sol.t_max);
    sol.times.resize(valid + 1);
    for (auto& p : sol.psi) p.resize(valid + 1);
  }
  return sol;
}

struct PsiBoundReport {
  struct Asset {
    bool applicable = false;  ///< false when lambda_bar <= 0
    double lambda_bar = 0.0;
    double bound = 0.0;
    double sup_abs_psi = 0.0;
    bool pass = false;
  };
  std::vector<Asset> assets;
  bool pass() const {
    for (const auto& a : assets) {
      if (a.applicable && !a.pass) return false;
    }
    return true;
  }
};

/// sup|psi_i| <= theta_i^2/(2 lambda_bar_i) (1 - R_{lambda_bar_i}(T)) for the
/// exponential variants, with lambda_bar_i = lambda_i + nu_i rho_i theta_i
/// ||sigma_i||_inf when rho_i <= 0. sigma_sup holds ||sigma_i||_inf.
inline PsiBoundReport psi_bound_check(const RiccatiSolution& sol, const ModelParams& params,
                                      const std::vector<double>& sigma_sup) {
  if (is_power(sol.variant)) throw ConfigError("psi_bound_check applies to exponential variants only");
  if (sigma_sup.size() != params.d()) throw ConfigError("psi_bound_check: one sigma bound per asset is required");
  PsiBoundReport rep;
  for (std::size_t i = 0; i < params.d(); ++i) {
    const auto& a = params.assets[i];
    PsiBoundReport::Asset r;
    r.lambda_bar = a.lambda + (a.rho <= 0.0 ? a.nu * a.rho * a.theta * sigma_sup[i] : 0.0);
    for (double v : sol.psi[i]) r.sup_abs_psi = std::max(r.sup_abs_psi, std::fabs(v));
    if (r.lambda_bar > 0.0) {
      r.applicable = true;
      const Resolvent res({a.alpha, r.lambda_bar});
      r.bound = a.theta * a.theta / (2.0 * r.lambda_bar) * (1.0 - res.value(sol.horizon()));
      r.pass = r.sup_abs_psi <= r.bound * (1.0 + 1e-12);
    }
    rep.assets.push_back(r);
  }
  return rep;
}

/// sup over the grid of the stabilizer values.
inline double sigma_sup_norm(const SigmaFunction& sigma, double horizon, int n = 2000) {
  double m = 0.0;
  for (int k = 0; k <= n; ++k) m = std::max(m, sigma(horizon * k / n));
  return m;
}

/// a(p) = max[p(2+|S|), 2(8p^2-2p)(1+|S|^2), p(1+|S|^2)] with |S| = sum rho_i^2.
inline double assumption_constant(double p, const ModelParams& params) {
  double s = 0.0;
  for (const auto& a : params.assets) s += a.rho * a.rho;
  return std::max({p * (2.0 + s), 2.0 * (8.0 * p * p - 2.0 * p) * (1.0 + s * s), p * (1.0 + s * s)});
}

struct AssumptionReport {
  double p = 2.0;
  double a_p = 0.0;
  double lhs = 0.0;  ///< max_i sup_t (theta_i^2 + nu_i^2 sigma_i(t)^2 psi_i(T-t)^2)
  double a = 0.0;
  bool pass = false;
};

/// Boundedness condition lhs <= a / a(p). A non-positive a selects the default
/// a = 2 a(p) lhs.
inline AssumptionReport assumption_gate(const ModelParams& params, const RiccatiSolution& sol,
                                        const std::vector<SigmaFunction>& sigma, double p = 2.0, double a = 0.0) {
  if (!(p > 1.0)) throw ConfigError("assumption_gate: p must be > 1");
  AssumptionReport rep;
  rep.p = p;
  rep.a_p = assumption_constant(p, params);
  const double T = sol.horizon();
  for (std::size_t i = 0; i < params.d(); ++i) {
    const auto& as = params.assets[i];
    for (std::size_t k = 0; k < sol.times.size(); ++k) {
      const double t = sol.times[k];
      const double s = sigma[i](t);
      const double psi = sol.at(i, T - t);
      rep.lhs = std::max(rep.lhs, as.theta * as.theta + as.nu * as.nu * s * s * psi * psi);
    }
  }
  rep.a = a > 0.0 ? a : 2.0 * rep.a_p * rep.lhs;
  rep.pass = rep.lhs <= rep.a / rep.a_p;
  return rep;
}

}  // namespace rvm

#endif
