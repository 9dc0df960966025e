#ifndef RVM_KERNELS_HPP
#define RVM_KERNELS_HPP

// Fractional kernels K(t) = t^{alpha-1}/Gamma(alpha), their lambda-resolvents
// R = E_alpha(-lambda t^alpha) and resolvent densities f = -R'.

#include "rvm/special.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvm {

/// Fractional kernel exponent together with the mean-reversion rate that
/// defines its resolvent.
struct KernelSpec {
  double alpha = 1.0;   ///< in (1/2, 1]
  double lambda = 1.0;  ///< > 0

  void validate() const {
    if (!(alpha > 0.5) || alpha > 1.0) {
      throw std::domain_error("KernelSpec: alpha must lie in (1/2, 1], got " + std::to_string(alpha));
    }
    if (!(lambda > 0.0)) {
      throw std::domain_error("KernelSpec: lambda must be positive, got " + std::to_string(lambda));
    }
  }
};

inline double kernel_eval(const KernelSpec& spec, double t) {
  if (!(t > 0.0)) throw std::domain_error("kernel_eval: t must be positive, got " + std::to_string(t));
  return std::pow(t, spec.alpha - 1.0) / gamma_fn(spec.alpha);
}

/// int_a^b K(x) dx for 0 <= a <= b.
inline double kernel_integral(double alpha, double a, double b) {
  return (std::pow(b, alpha) - std::pow(a, alpha)) / gamma_fn(alpha + 1.0);
}

/// R_{alpha,lambda} and f_{alpha,lambda} with cached series coefficients.
///
/// Short times use the power series in lambda t^alpha (long double); once
/// lambda^{1/alpha} t exceeds detail::kSeriesReach the Laplace representation
/// of the Mittag-Leffler function is integrated instead.
class Resolvent {
 public:
  Resolvent() = default;

  explicit Resolvent(KernelSpec spec) : spec_(spec) {
    spec_.validate();
    time_scale_ = std::pow(spec_.lambda, 1.0 / spec_.alpha);
    inv_gamma_r_.resize(kTerms);
    inv_gamma_f_.resize(kTerms);
    for (int k = 0; k < kTerms; ++k) {
      const long double a = static_cast<long double>(spec_.alpha);
      inv_gamma_r_[k] = std::exp(-std::lgamma(a * k + 1.0L));
      inv_gamma_f_[k] = std::exp(-std::lgamma(a * (k + 1)));
    }
  }

  const KernelSpec& spec() const { return spec_; }

  /// lambda^{1/alpha}: R(t) = E_alpha(-(lambda^{1/alpha} t)^alpha).
  double time_scale() const { return time_scale_; }

  double value(double t) const {
    if (t < 0.0) throw std::domain_error("Resolvent::value: negative time");
    if (t == 0.0) return 1.0;
    if (spec_.alpha == 1.0) return std::exp(-spec_.lambda * t);
    const double s = time_scale_ * t;
    if (s <= detail::kSeriesReach) return static_cast<double>(series(inv_gamma_r_, spec_.lambda * std::pow(t, spec_.alpha)));
    return detail::ml_laplace(spec_.alpha, s);
  }

  /// f(t) = -R'(t); +infinity at t = 0 when alpha < 1.
  double density(double t) const {
    if (t < 0.0) throw std::domain_error("Resolvent::density: negative time");
    if (spec_.alpha == 1.0) return spec_.lambda * std::exp(-spec_.lambda * t);
    if (t == 0.0) return std::numeric_limits<double>::infinity();
    const double s = time_scale_ * t;
    if (s <= detail::kSeriesReach) return std::pow(t, spec_.alpha - 1.0) * density_regular(t);
    return time_scale_ * detail::ml_laplace_density(spec_.alpha, s);
  }

  /// t^{1-alpha} f(t), bounded near zero (equal to lambda/Gamma(alpha) at t = 0).
  double density_regular(double t) const {
    if (spec_.alpha == 1.0) return density(t);
    const double s = time_scale_ * t;
    if (s <= detail::kSeriesReach) {
      return static_cast<double>(spec_.lambda * series(inv_gamma_f_, spec_.lambda * std::pow(t, spec_.alpha)));
    }
    return std::pow(t, 1.0 - spec_.alpha) * density(t);
  }

  /// ||f||_{L^2(0,infinity)}.
  double l2_norm() const {
    if (spec_.alpha == 1.0) return std::sqrt(spec_.lambda / 2.0);
    return std::sqrt(time_scale_ * unit_l2_squared(spec_.alpha));
  }

  /// int_0^inf f_{alpha,1}(s)^2 ds; ||f_{alpha,lambda}||^2 = lambda^{1/alpha} times this.
  static double unit_l2_squared(double alpha) {
    if (!(alpha > 0.5) || alpha >= 1.0) {
      if (alpha == 1.0) return 0.5;
      throw std::domain_error("unit_l2_squared: alpha must lie in (1/2, 1]; the L2 norm diverges at 1/2");
    }
    const Resolvent unit(KernelSpec{alpha, 1.0});
    using boost::math::quadrature::gauss_kronrod;
    // [0, 1]: s = w^p with p = 1/(2 alpha - 1) absorbs the s^{2 alpha - 2} singularity.
    const double p = 1.0 / (2.0 * alpha - 1.0);
    auto head_integrand = [&](double w) {
      const double s = std::pow(w, p);
      const double g = unit.density_regular(s);
      return p * g * g;
    };
    const double head = gauss_kronrod<double, 61>::integrate(head_integrand, 0.0, 1.0, 15, 1e-14);
    // [1, T_cut] in log time.
    auto body_integrand = [&](double y) {
      const double s = std::exp(y);
      const double f = unit.density(s);
      return f * f * s;
    };
    const double tail_coef = alpha / gamma_fn(1.0 - alpha);
    const double tail_weight = tail_coef * tail_coef / (2.0 * alpha + 1.0);
    double t_cut = std::pow(tail_weight / (1e-10 * head), 1.0 / (2.0 * alpha + 1.0));
    t_cut = std::clamp(t_cut, 20.0, 1e7);
    const double split = std::log(detail::kSeriesReach);
    double body = gauss_kronrod<double, 61>::integrate(body_integrand, 0.0, split, 15, 1e-13);
    const double log_cut = std::log(t_cut);
    const int panels = static_cast<int>(std::ceil(log_cut - split));
    for (int i = 0; i < panels; ++i) {
      const double a = split + (log_cut - split) * i / panels;
      const double b = split + (log_cut - split) * (i + 1) / panels;
      body += gauss_kronrod<double, 31>::integrate(body_integrand, a, b, 10, 1e-12);
    }
    // f(s) ~ alpha s^{-alpha-1} / Gamma(1-alpha) beyond t_cut.
    const double tail = tail_weight * std::pow(t_cut, -(2.0 * alpha + 1.0));
    return head + body + tail;
  }

 private:
  static constexpr int kTerms = 320;

  static long double series(const std::vector<long double>& inv_gamma, double x) {
    long double sum = 0.0L;
    long double power = 1.0L;
    const long double xl = x;
    for (int k = 0; k < kTerms; ++k) {
      const long double term = power * inv_gamma[k];
      sum += (k % 2 == 0) ? term : -term;
      if (k > 8 && term < 1e-22L * std::fabs(sum) && term < power * inv_gamma[k - 1]) break;
      power *= xl;
    }
    return sum;
  }

  KernelSpec spec_{};
  double time_scale_ = 1.0;
  std::vector<long double> inv_gamma_r_;  // 1/Gamma(alpha k + 1)
  std::vector<long double> inv_gamma_f_;  // 1/Gamma(alpha (k + 1))
};

/// R and f tabulated on a time grid together with ||f||_{L2}.
struct ResolventTable {
  KernelSpec spec;
  std::vector<double> grid;
  std::vector<double> r_values;
  std::vector<double> f_values;  ///< f(0) holds +infinity when alpha < 1
  double l2_norm_f = 0.0;

  bool density_singular_at_zero() const { return spec.alpha < 1.0; }
};

inline ResolventTable resolvent_table(const KernelSpec& spec, std::span<const double> grid) {
  spec.validate();
  if (grid.empty() || grid.front() != 0.0) throw std::invalid_argument("resolvent_table: grid must start at 0");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("resolvent_table: grid must be strictly increasing");
  }
  const Resolvent res(spec);
  ResolventTable table{spec, {grid.begin(), grid.end()}, {}, {}, res.l2_norm()};
  table.r_values.reserve(grid.size());
  table.f_values.reserve(grid.size());
  for (double t : grid) {
    table.r_values.push_back(res.value(t));
    table.f_values.push_back(res.density(t));
  }
  return table;
}

/// Uniform grid {0, T/n, ..., T}.
inline std::vector<double> uniform_grid(double horizon, int n) {
  if (n < 1 || !(horizon > 0.0)) throw std::invalid_argument("uniform_grid: need n >= 1 and a positive horizon");
  std::vector<double> grid(n + 1);
  for (int k = 0; k <= n; ++k) grid[k] = horizon * k / n;
  grid[n] = horizon;
  return grid;
}

/// (K * R)(t) = int_0^t K(t-s) R(s) ds by tanh-sinh quadrature after u = (t-s)^alpha.
inline double kernel_convolve_resolvent(const Resolvent& res, double t) {
  if (t == 0.0) return 0.0;
  const double alpha = res.spec().alpha;
  if (alpha == 1.0) return (1.0 - std::exp(-res.spec().lambda * t)) / res.spec().lambda;
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double upper = std::pow(t, alpha);
  auto integrand = [&](double u) { return res.value(std::max(0.0, t - std::pow(u, 1.0 / alpha))); };
  return integrator.integrate(integrand, 0.0, upper, 1e-14) / gamma_fn(alpha + 1.0);
}

/// |R(t) + lambda (K*R)(t) - 1|.
inline double resolvent_residual(const Resolvent& res, double t) {
  return std::fabs(res.value(t) + res.spec().lambda * kernel_convolve_resolvent(res, t) - 1.0);
}

/// |(K_alpha * r)(t) - 1| with r(s) = s^{-alpha}/Gamma(1-alpha) the resolvent of
/// the first kind of K_alpha. Diagnostic for the quadrature machinery.
inline double first_kind_resolvent_check(const KernelSpec& spec, double t) {
  spec.validate();
  if (!(spec.alpha < 1.0)) throw std::domain_error("first_kind_resolvent_check: requires alpha < 1");
  if (!(t > 0.0)) throw std::domain_error("first_kind_resolvent_check: requires t > 0");
  const double alpha = spec.alpha;
  boost::math::quadrature::tanh_sinh<double> integrator;
  // s = t u; the t-dependence cancels analytically but is kept in the integrand.
  auto integrand = [&](double u, double uc) {
    const double one_minus_u = (u > 0.5) ? uc : 1.0 - u;
    const double s = t * u;
    const double lag = t * one_minus_u;
    return t * std::pow(lag, alpha - 1.0) / gamma_fn(alpha) * std::pow(s, -alpha) / gamma_fn(1.0 - alpha);
  };
  const double conv = integrator.integrate(integrand, 0.0, 1.0, 1e-15);
  return std::fabs(conv - 1.0);
}

}  // namespace rvm

#endif
