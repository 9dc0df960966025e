#ifndef RVM_SPECIAL_HPP
#define RVM_SPECIAL_HPP

// Special functions shared by the kernel, stabilizer and Riccati modules:
// Gamma/Beta wrappers and the Mittag-Leffler function on the negative axis.

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvm {

inline double gamma_fn(double x) { return std::tgamma(x); }

inline double beta_fn(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::domain_error("beta_fn: arguments must be positive, got (" + std::to_string(a) + ", " +
                            std::to_string(b) + ")");
  }
  return boost::math::beta(a, b);
}

namespace detail {

/// Above this value of (-z)^(1/alpha) the alternating series loses too many
/// digits even in long double; the Laplace representation takes over.
inline constexpr double kSeriesReach = 10.0;

/// Generalised Mittag-Leffler series sum_k (-x)^k / Gamma(alpha k + beta),
/// accumulated in long double.
inline long double ml_series(double alpha, double beta, long double x) {
  long double sum = 0.0L;
  if (x == 0.0L) return 1.0L / std::tgamma(static_cast<long double>(beta));
  const long double log_x = std::log(x);
  for (int k = 0; k < 2000; ++k) {
    const long double arg = static_cast<long double>(alpha) * k + beta;
    long double mag = std::exp(k * log_x - std::lgamma(arg));
    // 1/Gamma vanishes at non-positive integers; lgamma returns +inf there.
    if (!std::isfinite(mag)) mag = 0.0L;
    const long double term = (k % 2 == 0) ? mag : -mag;
    sum += term;
    if (alpha * k > 2.0 * std::pow(static_cast<double>(x), 1.0 / alpha) + 4.0 &&
        mag < 1e-22L * std::fabs(sum)) {
      break;
    }
  }
  return sum;
}

/// Spectral weight of E_alpha(-t^alpha) = int_0^inf e^{-rt} w(r) dr, 0 < alpha < 1.
inline double ml_spectral_weight(double alpha, double r) {
  const double ra = std::pow(r, alpha);
  const double a_pi = alpha * std::numbers::pi;
  return std::sin(a_pi) / std::numbers::pi * std::pow(r, alpha - 1.0) / (ra * ra + 2.0 * ra * std::cos(a_pi) + 1.0);
}

/// E_alpha(-s^alpha) via its Laplace representation; accurate for large s.
inline double ml_laplace(double alpha, double s) {
  boost::math::quadrature::exp_sinh<double> integrator;
  auto integrand = [&](double v) {
    if (v == 0.0) return 0.0;
    return std::exp(-v) * ml_spectral_weight(alpha, v / s) / s;
  };
  return integrator.integrate(integrand, 0.0, std::numeric_limits<double>::infinity(), 1e-14);
}

/// -d/ds E_alpha(-s^alpha) via the same representation.
inline double ml_laplace_density(double alpha, double s) {
  boost::math::quadrature::exp_sinh<double> integrator;
  auto integrand = [&](double v) {
    if (v == 0.0) return 0.0;
    return v * std::exp(-v) * ml_spectral_weight(alpha, v / s) / (s * s);
  };
  return integrator.integrate(integrand, 0.0, std::numeric_limits<double>::infinity(), 1e-14);
}

}  // namespace detail

/// Mittag-Leffler function E_alpha(z) for 0 < alpha <= 1 and real z <= 0.
inline double mittag_leffler(double alpha, double z) {
  if (!(alpha > 0.0) || alpha > 1.0) {
    throw std::domain_error("mittag_leffler: alpha must lie in (0, 1], got " + std::to_string(alpha));
  }
  if (z > 0.0) throw std::domain_error("mittag_leffler: only z <= 0 is supported");
  if (z == 0.0) return 1.0;
  if (alpha == 1.0) return std::exp(z);
  const double x = -z;
  const double s = std::pow(x, 1.0 / alpha);
  if (s <= detail::kSeriesReach) return static_cast<double>(detail::ml_series(alpha, 1.0, x));
  return detail::ml_laplace(alpha, s);
}

}  // namespace rvm

#endif
