#ifndef RVM_STRATEGY_HPP
#define RVM_STRATEGY_HPP

// Optimal investment rules and value functions built from the Riccati solution.
// The rule is deterministic; the strategy on a path is rule_i(t) sqrt(V^i_t).

#include "rvm/riccati.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace rvm {

/// g_0^i(s) = E[V_0^i] + mu0_i s^alpha_i / Gamma(alpha_i + 1).
inline double g0_curve(const AssetParams& a, double s) {
  return a.v0_mean() + a.mu0 * std::pow(s, a.alpha) / std::tgamma(a.alpha + 1.0);
}

inline std::vector<double> g0_curve(const ModelParams& params, double s) {
  std::vector<double> out;
  for (const auto& a : params.assets) out.push_back(g0_curve(a, s));
  return out;
}

namespace detail {

inline void check_compatible(const UtilitySpec& util, const RiccatiSolution& sol) {
  util.validate();
  if (is_power(sol.variant) != (util.kind == UtilityKind::power)) {
    throw ConfigError(std::string("Riccati variant ") + to_string(sol.variant) + " does not match " +
                      to_string(util.kind) + " utility");
  }
  if (sol.blowup) throw RiccatiBlowup(sol.last_valid_time, sol.t_max);
}

// a_i + F_i(u, x) for the general-correlation equation of the given utility.
inline double general_rhs(const UtilitySpec& util, const AssetParams& a, double sigma, double x) {
  if (util.kind == UtilityKind::power) {
    const double k = util.gamma / (1.0 - util.gamma);
    return k * a.theta * a.theta / 2.0 + k * a.theta * a.rho * a.nu * sigma * x - a.lambda * x +
           0.5 * a.nu * a.nu * (1.0 + k * a.rho * a.rho) * sigma * sigma * x * x;
  }
  return -a.theta * a.theta / 2.0 - a.theta * a.rho * a.nu * sigma * x - a.lambda * x +
         0.5 * a.nu * a.nu * (1.0 - a.rho * a.rho) * sigma * sigma * x * x;
}

// Composite Simpson on a uniform grid (3/8 rule on the last three panels when n is odd).
inline double simpson(const std::vector<double>& y, double h) {
  const int n = static_cast<int>(y.size()) - 1;
  if (n < 1) return 0.0;
  if (n == 1) return 0.5 * h * (y[0] + y[1]);
  int m = (n % 2 == 0) ? n : n - 3;
  double s = 0.0;
  for (int k = 0; k + 2 <= m; k += 2) s += h / 3.0 * (y[k] + 4.0 * y[k + 1] + y[k + 2]);
  if (m != n) s += 3.0 * h / 8.0 * (y[m] + 3.0 * y[m + 1] + 3.0 * y[m + 2] + y[m + 3]);
  return s;
}

}  // namespace detail

/// psi of the general-correlation equation: delta * psi for the power degenerate
/// variant (the two coincide under the distortion identity), psi otherwise.
inline double general_psi(const RiccatiSolution& sol, std::size_t i, double t) { return sol.delta * sol.at(i, t); }

/// Deterministic multipliers of sqrt(V^i_t):
///   power:       (theta_i + rho_i nu_i sigma_i(t) psi_i(T-t)) / (1-gamma)
///   exponential: exp(-int_t^T r) (theta_i + rho_i nu_i sigma_i(t) psi_i(T-t)) / gamma
inline std::vector<double> optimal_rule(const UtilitySpec& util, const ModelParams& params, const RiccatiSolution& sol,
                                        const std::vector<SigmaFunction>& sigma, double t) {
  detail::check_compatible(util, sol);
  const double T = params.horizon;
  std::vector<double> out;
  for (std::size_t i = 0; i < params.d(); ++i) {
    const auto& a = params.assets[i];
    const double core = a.theta + a.rho * a.nu * sigma[i](t) * general_psi(sol, i, T - t);
    if (util.kind == UtilityKind::power) {
      out.push_back(core / (1.0 - util.gamma));
    } else {
      out.push_back(std::exp(-params.rate.integral(t, T)) * core / util.gamma);
    }
  }
  return out;
}

/// Rule table on the simulation grid: row k holds the multipliers at t_k, k = 0..n.
inline Eigen::MatrixXd rule_table(const UtilitySpec& util, const ModelParams& params, const RiccatiSolution& sol,
                                  const std::vector<SigmaFunction>& sigma, const SimGrid& grid) {
  Eigen::MatrixXd out(grid.n + 1, static_cast<Eigen::Index>(params.d()));
  for (int k = 0; k <= grid.n; ++k) {
    const auto r = optimal_rule(util, params, sol, sigma, grid.time(k));
    for (std::size_t i = 0; i < r.size(); ++i) out(k, static_cast<Eigen::Index>(i)) = r[i];
  }
  return out;
}

/// Myopic rule theta_i/(1-gamma) or exp(-int_t^T r) theta_i/gamma.
inline std::vector<double> myopic_rule(const UtilitySpec& util, const ModelParams& params, double t) {
  std::vector<double> out;
  for (const auto& a : params.assets) {
    out.push_back(util.kind == UtilityKind::power ? a.theta / (1.0 - util.gamma)
                                                  : std::exp(-params.rate.integral(t, params.horizon)) * a.theta /
                                                        util.gamma);
  }
  return out;
}

/// sum_i int_0^T (a_i + F_i(s, psi(T-s))) g_0^i(s) ds by Simpson on the psi grid.
inline double value_exponent(const UtilitySpec& util, const ModelParams& params, const RiccatiSolution& sol,
                             const std::vector<SigmaFunction>& sigma) {
  detail::check_compatible(util, sol);
  const int n = sol.n();
  const double T = sol.horizon();
  const double h = T / n;
  double total = 0.0;
  for (std::size_t i = 0; i < params.d(); ++i) {
    const auto& a = params.assets[i];
    std::vector<double> y(n + 1);
    for (int k = 0; k <= n; ++k) {
      const double s = sol.times[k];
      const double psi = sol.delta * sol.psi[i][n - k];
      y[k] = detail::general_rhs(util, a, sigma[i](s), psi) * g0_curve(a, s);
    }
    total += detail::simpson(y, h);
  }
  return total;
}

/// Value function at (x0, V_0 = E[V_0]).
inline double value_function(const UtilitySpec& util, const ModelParams& params, const RiccatiSolution& sol,
                             const std::vector<SigmaFunction>& sigma, double x0) {
  const double expo = value_exponent(util, params, sol, sigma);
  const double rint = params.rate.integral(0.0, params.horizon);
  if (util.kind == UtilityKind::power) {
    if (!(x0 > 0.0)) throw ConfigError("power utility requires x0 > 0");
    return std::pow(x0, util.gamma) / util.gamma * std::exp(util.gamma * rint + expo);
  }
  return -std::exp(-util.gamma * std::exp(rint) * x0 + expo) / util.gamma;
}

/// Weights c~_i on the simulation grid such that
///   int_t^T c_i(s) g_t^i(s) ds = int_t^T c~_i(u) xi^i_t(u) du,  c_i(s) = a_i + F_i(s, psi(T-s)),
///   c~_i(u) = c_i(u) + lambda_i int_u^T c_i(s) K_i(s-u) ds,
/// where xi_t(u) = E[V_u | F_t]. The kernel integral uses product-trapezoid
/// weights for c_i piecewise linear on the grid.
inline std::vector<std::vector<double>> forward_weights(const UtilitySpec& util, const ModelParams& params,
                                                        const RiccatiSolution& sol,
                                                        const std::vector<SigmaFunction>& sigma, const SimGrid& grid) {
  detail::check_compatible(util, sol);
  const int n = grid.n;
  const double h = grid.step();
  const double T = grid.horizon;
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < params.d(); ++i) {
    const auto& a = params.assets[i];
    std::vector<double> c(n + 1);
    for (int k = 0; k <= n; ++k) {
      const double s = grid.time(k);
      c[k] = detail::general_rhs(util, a, sigma[i](s), general_psi(sol, i, T - s));
    }
    // lag-cell weights: B_j = int_{jh}^{(j+1)h} K, W_j = int K(tau) (tau - jh)/h
    const double scale = std::pow(h, a.alpha) / std::tgamma(a.alpha + 1.0);
    std::vector<double> bw(n), ww(n);
    for (int j = 0; j < n; ++j) {
      const double p0 = std::pow(static_cast<double>(j), a.alpha);
      const double p1 = std::pow(j + 1.0, a.alpha);
      const double q0 = std::pow(static_cast<double>(j), a.alpha + 1.0);
      const double q1 = std::pow(j + 1.0, a.alpha + 1.0);
      bw[j] = scale * (p1 - p0);
      ww[j] = scale * (a.alpha * (q1 - q0) / (a.alpha + 1.0) - j * (p1 - p0));
    }
    std::vector<double> ct(n + 1);
    for (int m = 0; m <= n; ++m) {
      double conv = 0.0;
      for (int j = 0; m + j < n; ++j) conv += c[m + j] * (bw[j] - ww[j]) + c[m + j + 1] * ww[j];
      ct[m] = c[m] + a.lambda * conv;
    }
    out.push_back(std::move(ct));
  }
  return out;
}

}  // namespace rvm

#endif
