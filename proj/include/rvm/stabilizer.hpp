#ifndef RVM_STABILIZER_HPP
#define RVM_STABILIZER_HPP

// Stabilizer sigma_{alpha,lambda,c}: the deterministic diffusion modulation that
// keeps the variance of the Volterra CIR process constant. For fractional kernels
//   sigma^2(t) = c lambda^{2-1/alpha} s_alpha^2(lambda^{1/alpha} t),
//   s_alpha^2(s) = 2 s^{1-alpha} sum_k (-1)^k c_k s^{alpha k},
// with c_k given by a triangular recurrence in Gamma/Beta values.

#include "rvm/kernels.hpp"
#include "rvm/model.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvm {

class NumericalInstability : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Series coefficients c_0..c_K of the unit stabilizer. The bracket in the
/// recurrence cancels heavily for large k, so it is run in 50-digit arithmetic;
/// only O(K) distinct log-Gamma values are needed.
inline std::vector<long double> stabilizer_coefficients_ld(double alpha, int count) {
  if (!(alpha > 0.5) || !(alpha < 1.0)) {
    throw std::domain_error("stabilizer_coefficients: alpha must lie in (1/2, 1), got " + std::to_string(alpha));
  }
  if (count < 0) throw std::invalid_argument("stabilizer_coefficients: K must be non-negative");
  using mp = boost::multiprecision::cpp_bin_float_50;
  using boost::multiprecision::exp;
  using boost::multiprecision::lgamma;
  const mp a = alpha;
  const int n = count + 1;
  // lgamma(a j + shift) for the few shifts the recurrence uses.
  auto table = [&](mp shift, int len) {
    std::vector<mp> out(len);
    for (int j = 0; j < len; ++j) out[j] = lgamma(a * j + shift);
    return out;
  };
  auto exp_table = [](const std::vector<mp>& logs) {
    std::vector<mp> out(logs.size());
    for (std::size_t j = 0; j < logs.size(); ++j) out[j] = exp(logs[j]);
    return out;
  };
  const std::vector<mp> lg_a1 = table(1, n + 2);      // Gamma(a j + 1)
  const std::vector<mp> lg_a0 = table(0, n + 2);      // Gamma(a j), j >= 1
  const std::vector<mp> lg_am1 = table(-1, n + 3);    // Gamma(a j - 1), j >= 2
  const std::vector<mp> lg_a2 = table(2, n + 2);      // Gamma(a j + 2)
  const std::vector<mp> lg_2ma = table(2 - a, n + 2); // Gamma(a j + 2 - a)
  std::vector<mp> ak(n), bk(n), ab(n), bb(n), c(n);
  for (int k = 0; k < n; ++k) {
    ak[k] = exp(-lg_a1[k]);
    bk[k] = exp(-lg_a0[k + 1]);
  }
  for (int k = 0; k < n; ++k) {
    mp s_ab = 0;
    mp s_bb = 0;
    for (int l = 0; l <= k; ++l) {
      s_ab += ak[l] * bk[k - l];
      s_bb += bk[l] * bk[k - l];
    }
    ab[k] = s_ab;
    bb[k] = s_bb;
  }
  const mp lg_alpha = lg_a0[1];
  const mp lg_2a1 = lg_am1[2];
  const std::vector<mp> g_am1 = exp_table(lg_am1);
  const std::vector<mp> g_a2 = exp_table(lg_a2);
  const mp g_2ma = exp(lg_2ma[0]);
  c[0] = exp(2 * lg_alpha - lg_2a1 - lg_2ma[0]);
  for (int k = 1; k < n; ++k) {
    // B(a(l+2) - 1, a(k-l-1) + 2); both arguments sum to a(k+1) + 1.
    mp acc = 0;
    for (int l = 1; l <= k; ++l) {
      const mp& second = (k - l - 1 >= 0) ? g_a2[k - l - 1] : g_2ma;
      acc += g_am1[l + 2] * second * bb[l] * c[k - l];
    }
    acc /= exp(lg_a1[k + 1]);
    const mp bracket = ab[k] - a * (k + 1) * acc;
    c[k] = exp(2 * lg_alpha + lg_a0[k + 1] - lg_2a1 - lg_2ma[k]) * bracket;
  }
  std::vector<long double> out(n);
  for (int k = 0; k < n; ++k) out[k] = static_cast<long double>(c[k]);
  return out;
}

inline std::vector<double> stabilizer_coefficients(double alpha, int count) {
  const auto ld = stabilizer_coefficients_ld(alpha, count);
  return {ld.begin(), ld.end()};
}

/// Stabilizer for one asset: series inside a trust radius, asymptotic limit
/// beyond it, with a linear blend in between.
class StabilizerTable {
 public:
  static constexpr int kMaxTerms = 200;

  StabilizerTable() = default;

  StabilizerTable(KernelSpec spec, double c, std::span<const double> grid) : spec_(spec), c_(c) {
    spec_.validate();
    if (!(c >= 0.0)) throw std::domain_error("StabilizerTable: c must be non-negative");
    const Resolvent res(spec_);
    l2_norm_f_ = res.l2_norm();
    limit_ = std::sqrt(c_) * spec_.lambda / l2_norm_f_;
    time_scale_ = res.time_scale();
    scale_sq_ = c_ * std::pow(spec_.lambda, 2.0 - 1.0 / spec_.alpha);
    if (spec_.alpha < 1.0) {
      coeffs_ld_ = stabilizer_coefficients_ld(spec_.alpha, kMaxTerms);
      locate_trust_radius();
    } else {
      trust_radius_ = std::numeric_limits<double>::infinity();
    }
    grid_.assign(grid.begin(), grid.end());
    values_.reserve(grid_.size());
    for (double t : grid_) values_.push_back(value(t));
  }

  const KernelSpec& spec() const { return spec_; }
  double c() const { return c_; }
  double limit() const { return limit_; }
  double l2_norm_f() const { return l2_norm_f_; }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double> coeffs() const { return {coeffs_ld_.begin(), coeffs_ld_.end()}; }

  /// Largest t (not rescaled) where the truncated series is trusted.
  double trust_radius() const { return trust_radius_ / time_scale_; }

  /// sigma^2(t).
  double squared(double t) const {
    if (t < 0.0) throw std::domain_error("StabilizerTable: negative time");
    if (c_ == 0.0 || t == 0.0) return 0.0;
    if (spec_.alpha == 1.0) return 2.0 * c_ * spec_.lambda;
    const double s = time_scale_ * t;
    if (s <= trust_radius_) return scale_sq_ * unit_squared(s);
    const double edge = scale_sq_ * unit_squared(trust_radius_);
    const double lim = limit_ * limit_;
    const double w = std::min(1.0, (s - trust_radius_) / (kBlendWidth * trust_radius_));
    return (1.0 - w) * edge + w * lim;
  }

  double value(double t) const { return std::sqrt(squared(t)); }

  /// s_alpha^2(s) for the unit stabilizer (alpha < 1, s inside the trust radius).
  double unit_squared(double s) const {
    if (s == 0.0) return 0.0;
    const SeriesSum sum = series(s);
    if (sum.value < -1e-14L * sum.max_term) {
      throw NumericalInstability("stabilizer series negative at s = " + std::to_string(s) +
                                 "; increase the term count or reduce t");
    }
    return static_cast<double>(2.0L * std::pow(static_cast<long double>(s), 1.0L - spec_.alpha) *
                               std::max(sum.value, 0.0L));
  }

 private:
  static constexpr double kBlendWidth = 0.1;

  struct SeriesSum {
    long double value = 0.0L;
    long double max_term = 0.0L;
    long double last_term = 0.0L;
    long double prev_partial = 0.0L;
  };

  SeriesSum series(double s) const {
    SeriesSum out;
    const long double x = std::pow(static_cast<long double>(s), static_cast<long double>(spec_.alpha));
    long double power = 1.0L;
    for (std::size_t k = 0; k < coeffs_ld_.size(); ++k) {
      const long double term = coeffs_ld_[k] * power;
      out.prev_partial = out.value;
      out.value += (k % 2 == 0) ? term : -term;
      out.max_term = std::max(out.max_term, std::fabs(term));
      out.last_term = std::fabs(term);
      if (k > 4 && out.last_term < 1e-21L * std::fabs(out.value) && out.last_term < 1e-21L * out.max_term) break;
      power *= x;
    }
    return out;
  }

  // Scan outward in s; stop at the first point where the partial sums are not
  // converged, turn negative, or have lost more than 8 digits to cancellation.
  void locate_trust_radius() {
    constexpr long double kEps = std::numeric_limits<long double>::epsilon();
    double good = 0.0;
    for (double s = 1e-3; s < 1e3; s *= 1.02) {
      const SeriesSum sum = series(s);
      const bool positive = sum.value > 0.0L;
      const bool converged = sum.last_term < 1e-12L * std::fabs(sum.value);
      const bool stable = kEps * sum.max_term * kMaxTerms < 1e-8L * std::fabs(sum.value);
      const bool settled = std::fabs(sum.value - sum.prev_partial) < 1e-8L * std::fabs(sum.value);
      if (!(positive && converged && stable && settled)) break;
      good = s;
    }
    if (good == 0.0) throw NumericalInstability("stabilizer series not trusted even at s = 1e-3");
    trust_radius_ = good;
  }

  KernelSpec spec_{};
  double c_ = 0.0;
  double l2_norm_f_ = 0.0;
  double limit_ = 0.0;
  double time_scale_ = 1.0;
  double scale_sq_ = 0.0;
  double trust_radius_ = 0.0;  // in rescaled time s = lambda^{1/alpha} t
  std::vector<long double> coeffs_ld_;
  std::vector<double> grid_;
  std::vector<double> values_;
};

/// (f^2 * sigma^2)(t) with the substitution w = (t-s)^{2 alpha - 1} at the
/// singular end of f^2.
inline double stabilized_variance_convolution(const StabilizerTable& stab, const Resolvent& res, double t) {
  if (t == 0.0 || stab.c() == 0.0) return 0.0;
  const double alpha = res.spec().alpha;
  boost::math::quadrature::tanh_sinh<double> integrator;
  if (alpha == 1.0) {
    auto integrand = [&](double u) {
      const double f = res.density(u);
      return f * f * stab.squared(t - u);
    };
    return integrator.integrate(integrand, 0.0, t, 1e-13);
  }
  const double p = 1.0 / (2.0 * alpha - 1.0);
  const double upper = std::pow(t, 2.0 * alpha - 1.0);
  auto integrand = [&](double w) {
    const double u = std::min(t, std::pow(w, p));
    const double g = res.density_regular(u);
    return p * g * g * stab.squared(t - u);
  };
  return integrator.integrate(integrand, 0.0, upper, 1e-13);
}

/// sup over the grid of |c lambda^2 (1 - R(t)^2) - (f^2 * sigma^2)(t)|.
inline double functional_equation_residual(const StabilizerTable& stab, const ResolventTable& table) {
  const Resolvent res(table.spec);
  const double c = stab.c();
  const double lambda = table.spec.lambda;
  double worst = 0.0;
  for (std::size_t i = 0; i < table.grid.size(); ++i) {
    const double t = table.grid[i];
    const double r = table.r_values[i];
    const double lhs = c * lambda * lambda * (1.0 - r * r);
    worst = std::max(worst, std::fabs(lhs - stabilized_variance_convolution(stab, res, t)));
  }
  return worst;
}

/// Builds one stabilizer table per asset on the given grid.
inline std::vector<StabilizerTable> make_stabilizers(const ModelParams& params, std::span<const double> grid) {
  std::vector<StabilizerTable> out;
  for (const auto& a : params.assets) out.emplace_back(a.kernel(), a.c, grid);
  return out;
}

}  // namespace rvm

#endif
