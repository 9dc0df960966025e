#ifndef RVM_SIMULATE_HPP
#define RVM_SIMULATE_HPP

// f_lambda-integrated Euler scheme for the stabilized Volterra CIR variance
//   V_k = h(t_k) + (nu/lambda) sum_{l<=k} sigma(t_l) sqrt(V_{l-1}) I^l_k,
//   I^l_k = int_{t_{l-1}}^{t_l} f(t_k - s) dW_s,
// drawn jointly with the Brownian increment dW_l.
//
// On a uniform grid the law of (I^l_{l+j})_{j>=0} together with dW_l does not
// depend on l, so a single (n+1)x(n+1) covariance is factored per asset. The
// factor is truncated to numerical rank, after which each step for a block of
// paths is one dense matrix product.

#include "rvm/model.hpp"
#include "rvm/parallel.hpp"
#include "rvm/stabilizer.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvm {

namespace detail {

// int_0^step f(j1 step + u) f(j2 step + u) du for j1 <= j2. Tanh-sinh copes with
// the u^{alpha-1} (or u^{2 alpha-2}) endpoint singularity when j1 = 0.
inline double covariance_entry_adaptive(const Resolvent& res, double step, int j1, int j2) {
  boost::math::quadrature::tanh_sinh<double> integrator;
  auto integrand = [&](double u) {
    if (j1 == 0 && u <= 0.0) return 0.0;
    return res.density(j1 * step + u) * res.density(j2 * step + u);
  };
  return integrator.integrate(integrand, 0.0, step, 1e-13);
}

/// Engine for the stream (seed, block, asset, kind). seed_seq keeps 32 bits per
/// entry, so the seed enters as two words.
inline std::mt19937_64 stream_engine(std::uint64_t seed, std::size_t block, std::size_t asset, unsigned kind) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(asset), kind};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Cov(I^l_{k1}, I^l_{k2}) = int_{t_{l-1}}^{t_l} f(t_{k1} - s) f(t_{k2} - s) ds.
inline double gaussian_integral_covariance(const KernelSpec& spec, const SimGrid& grid, int ell, int k1, int k2) {
  if (ell < 1 || ell > grid.n || k1 < ell || k2 < ell || k1 > grid.n || k2 > grid.n) {
    throw std::out_of_range("gaussian_integral_covariance: need 1 <= ell <= k1, k2 <= n");
  }
  if (k1 > k2) std::swap(k1, k2);
  const Resolvent res(spec);
  return detail::covariance_entry_adaptive(res, grid.step(), k1 - ell, k2 - ell);
}

/// Joint covariance of (I_0, ..., I_{n-1}, dW) for one step and a truncated
/// factor L with L L^T ~ covariance (rows indexed like the covariance).
class GaussianIntegralFactor {
 public:
  GaussianIntegralFactor() = default;

  GaussianIntegralFactor(const KernelSpec& spec, const SimGrid& grid, double rank_tol = 1e-15) : n_(grid.n) {
    spec.validate();
    const Resolvent res(spec);
    const double step = grid.step();
    const int dim = n_ + 1;
    cov_ = Eigen::MatrixXd::Zero(dim, dim);

    // Lags j >= 1 by a shared 30-point Gauss-Legendre rule on each cell.
    constexpr int kNodes = 30;
    using rule = boost::math::quadrature::gauss<double, kNodes>;
    std::vector<double> nodes;
    std::vector<double> weights;
    for (std::size_t i = 0; i < rule::abscissa().size(); ++i) {
      const double x = rule::abscissa()[i];
      const double w = rule::weights()[i];
      nodes.push_back(0.5 * step * (1.0 + x));
      weights.push_back(0.5 * step * w);
      if (x != 0.0) {
        nodes.push_back(0.5 * step * (1.0 - x));
        weights.push_back(0.5 * step * w);
      }
    }
    const int q = static_cast<int>(nodes.size());
    Eigen::MatrixXd fvals(n_, q);
    for (int j = 1; j < n_; ++j) {
      for (int i = 0; i < q; ++i) fvals(j, i) = res.density(j * step + nodes[i]);
    }
    if (n_ > 1) {
      const Eigen::Map<const Eigen::VectorXd> wv(weights.data(), q);
      const Eigen::MatrixXd scaled = fvals.bottomRows(n_ - 1) * wv.asDiagonal();
      Eigen::MatrixXd lagged = scaled * fvals.bottomRows(n_ - 1).transpose();
      cov_.block(1, 1, n_ - 1, n_ - 1) = 0.5 * (lagged + lagged.transpose());
    }
    for (int j = 0; j < n_; ++j) {
      const double v = detail::covariance_entry_adaptive(res, step, 0, j);
      cov_(0, j) = v;
      cov_(j, 0) = v;
    }
    for (int j = 0; j < n_; ++j) {
      const double v = res.value(j * step) - res.value((j + 1) * step);
      cov_(j, n_) = v;
      cov_(n_, j) = v;
    }
    cov_(n_, n_) = step;

    factorize(rank_tol);
  }

  int n() const { return n_; }
  int rank() const { return static_cast<int>(factor_.cols()); }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  const Eigen::MatrixXd& factor() const { return factor_; }
  /// smallest eigenvalue of the assembled covariance, before any jitter
  double min_eigenvalue() const { return min_eigenvalue_; }
  double jitter() const { return jitter_; }
  /// sum of |discarded eigenvalues| relative to the trace
  double truncation_error() const { return truncation_error_; }

 private:
  // Eigen-decomposition of the (symmetric) covariance; the factor keeps the
  // eigenpairs above rank_tol * trace, which is the optimal low-rank
  // approximation in every unitarily invariant norm.
  void factorize(double rank_tol) {
    const int dim = n_ + 1;
    const double trace = cov_.trace();
    Eigen::MatrixXd work = cov_;
    for (int attempt = 0; attempt <= 3; ++attempt) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(work);
      if (eig.info() != Eigen::Success) break;
      const Eigen::VectorXd& ev = eig.eigenvalues();  // ascending
      if (attempt == 0) min_eigenvalue_ = ev(0);
      if (ev(0) >= -1e-10 * trace) {
        int keep = 0;
        while (keep < dim && ev(dim - 1 - keep) > rank_tol * trace) ++keep;
        keep = std::max(keep, 1);
        double tail = 0.0;
        for (int i = 0; i < dim - keep; ++i) tail += std::fabs(ev(i));
        truncation_error_ = tail / trace;
        factor_.resize(dim, keep);
        for (int c = 0; c < keep; ++c) {
          factor_.col(c) = eig.eigenvectors().col(dim - 1 - c) * std::sqrt(ev(dim - 1 - c));
        }
        return;
      }
      jitter_ += 1e-12 * trace / dim;
      work.diagonal().array() += 1e-12 * trace / dim;
    }
    throw ConfigError("gaussian integral covariance not positive semi-definite (min eigenvalue " +
                      std::to_string(min_eigenvalue_) + ", dimension " + std::to_string(dim) +
                      ") after jitter; refine the grid or check the kernel parameters");
  }

  int n_ = 0;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd factor_;
  double min_eigenvalue_ = 0.0;
  double jitter_ = 0.0;
  double truncation_error_ = 0.0;
};

enum class V0Mode { mean, gaussian };

struct SimOptions {
  std::size_t n_paths = 10000;
  std::uint64_t seed = 42;
  int block_size = 256;
  V0Mode v0_mode = V0Mode::gaussian;
  bool keep_diagonal_integrals = false;
  double rank_tol = 1e-15;
  /// Forward functionals Phi_k = int_{t_k}^T sum_i w_i(u) xi^i_{t_k}(u) du with
  /// xi_t(u) = E[V_u | F_t] under the scheme; indexed [functional][asset][m].
  std::vector<std::vector<std::vector<double>>> forward_weights;
};

/// One block of simulated paths. Matrices are paths x time (column k = t_k for
/// V and Phi; column l-1 = step l for increments).
struct PathBlock {
  std::size_t first_path = 0;
  std::size_t block_index = 0;
  int n_paths = 0;
  std::vector<Eigen::MatrixXd> V;
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::MatrixXd> dB;
  std::vector<Eigen::MatrixXd> dBperp;
  std::vector<Eigen::MatrixXd> I_diag;  ///< I^l_l per step, if requested
  std::vector<Eigen::MatrixXd> phi;     ///< one per forward functional
};

/// Everything that is fixed across paths: resolvent values, stabilizer values
/// at the grid points and the covariance factors.
class VarianceSimulator {
 public:
  VarianceSimulator(const ModelParams& params, const std::vector<StabilizerTable>& stabs, const SimGrid& grid,
                    double rank_tol = 1e-15)
      : params_(params), grid_(grid) {
    params_.validate();
    if (stabs.size() != params_.d()) throw ConfigError("simulate: one stabilizer table per asset is required");
    if (std::fabs(grid_.horizon - params_.horizon) > 1e-12 * params_.horizon) {
      throw ConfigError("simulate: grid horizon differs from model horizon");
    }
    for (std::size_t i = 0; i < params_.d(); ++i) {
      const auto& a = params_.assets[i];
      if (stabs[i].spec().alpha != a.alpha || stabs[i].spec().lambda != a.lambda) {
        throw ConfigError("simulate: stabilizer table " + std::to_string(i) + " does not match the asset kernel");
      }
      const Resolvent res(a.kernel());
      std::vector<double> r(grid_.n + 1), sig(grid_.n + 1);
      for (int k = 0; k <= grid_.n; ++k) {
        r[k] = res.value(grid_.time(k));
        sig[k] = stabs[i].value(grid_.time(k));
      }
      resolvent_.push_back(std::move(r));
      sigma_.push_back(std::move(sig));
      factors_.emplace_back(a.kernel(), grid_, rank_tol);
    }
  }

  const SimGrid& grid() const { return grid_; }
  const ModelParams& params() const { return params_; }
  const GaussianIntegralFactor& factor(std::size_t asset) const { return factors_[asset]; }
  const std::vector<double>& resolvent_values(std::size_t asset) const { return resolvent_[asset]; }
  const std::vector<double>& sigma_values(std::size_t asset) const { return sigma_[asset]; }

  /// Simulates one block. Streams are keyed by (seed, block, asset) so the
  /// result does not depend on how blocks are scheduled.
  PathBlock simulate_block(const SimOptions& opt, std::size_t block_index) const {
    const std::size_t first = block_index * static_cast<std::size_t>(opt.block_size);
    if (first >= opt.n_paths) throw std::out_of_range("simulate_block: block index beyond path count");
    const int p = static_cast<int>(std::min<std::size_t>(opt.block_size, opt.n_paths - first));
    const int n = grid_.n;
    const double step = grid_.step();
    const double sqrt_step = std::sqrt(step);
    const std::size_t d = params_.d();
    const std::size_t n_phi = opt.forward_weights.size();
    for (const auto& fw : opt.forward_weights) {
      if (fw.size() != d) throw ConfigError("forward_weights: need one weight vector per asset");
      for (const auto& w : fw) {
        if (static_cast<int>(w.size()) != n + 1) throw ConfigError("forward_weights: weight vectors must have n+1 entries");
      }
    }

    PathBlock out;
    out.first_path = first;
    out.block_index = block_index;
    out.n_paths = p;
    out.phi.assign(n_phi, Eigen::MatrixXd::Zero(p, n + 1));

    Eigen::MatrixXd acc(p, n + 1);
    Eigen::MatrixXd g;
    Eigen::VectorXd sigma(p);
    for (std::size_t i = 0; i < d; ++i) {
      const auto& a = params_.assets[i];
      const auto& lf = factors_[i].factor();
      const int rank = factors_[i].rank();
      const double scale = a.nu / a.lambda;
      const double rho = a.rho;
      const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));

      std::mt19937_64 eng_main = detail::stream_engine(opt.seed, block_index, i, 0);
      std::mt19937_64 eng_aux = detail::stream_engine(opt.seed, block_index, i, 1);
      boost::random::normal_distribution<double> normal;

      Eigen::MatrixXd V(p, n + 1), dW(p, n), dB(p, n), dBp(p, n);
      Eigen::MatrixXd idiag;
      if (opt.keep_diagonal_integrals) idiag.resize(p, n);

      // initial variance and deterministic part h_k = x_inf + (V0 - x_inf) R(t_k)
      Eigen::VectorXd v0(p);
      const double x_inf = a.x_inf();
      const double sd0 = std::sqrt(a.v0_var());
      for (int j = 0; j < p; ++j) {
        double v = x_inf;
        if (opt.v0_mode == V0Mode::gaussian) v = std::max(x_inf + sd0 * normal(eng_aux), 1e-12);
        v0(j) = v;
      }
      const Eigen::Map<const Eigen::VectorXd> r_vec(resolvent_[i].data(), n + 1);
      V.col(0) = v0;
      acc.setZero();

      // Forward functionals: trapezoid sums over m >= ell of w_m xi_{t_ell}(t_m). The
      // deterministic part uses suffix sums; the stochastic part keeps a running
      // full-weight sum u_f = sum_{m >= ell} w_m acc_m per path.
      std::vector<Eigen::VectorXd> phi_weights, det_w, det_wr;
      std::vector<Eigen::VectorXd> running(n_phi, Eigen::VectorXd::Zero(p));
      for (std::size_t f = 0; f < n_phi; ++f) {
        const Eigen::Map<const Eigen::VectorXd> w(opt.forward_weights[f][i].data(), n + 1);
        phi_weights.emplace_back(w);
        Eigen::VectorXd sw = Eigen::VectorXd::Zero(n + 1), swr = Eigen::VectorXd::Zero(n + 1);
        double tw = 0.0, twr = 0.0;
        for (int m = n; m >= 0; --m) {
          tw += w(m);
          twr += w(m) * r_vec(m);
          if (m < n) {
            sw(m) = step * (tw - 0.5 * w(m) - 0.5 * w(n));
            swr(m) = step * (twr - 0.5 * w(m) * r_vec(m) - 0.5 * w(n) * r_vec(n));
          }
        }
        for (int j = 0; j < p; ++j) out.phi[f](j, 0) += x_inf * sw(0) + (v0(j) - x_inf) * swr(0);
        det_w.push_back(std::move(sw));
        det_wr.push_back(std::move(swr));
      }

      g.resize(p, rank);
      for (int ell = 1; ell <= n; ++ell) {
        for (int c = 0; c < rank; ++c) {
          for (int j = 0; j < p; ++j) g(j, c) = normal(eng_main);
        }
        const double sig = sigma_[i][ell];
        for (int j = 0; j < p; ++j) sigma(j) = sig * std::sqrt(std::max(V(j, ell - 1), 0.0));
        const int len = n - ell + 1;
        const Eigen::MatrixXd sg = sigma.asDiagonal() * g;
        acc.middleCols(ell, len).noalias() += sg * lf.topRows(len).transpose();
        for (std::size_t f = 0; f < n_phi; ++f) {
          const auto& w = phi_weights[f];
          running[f] -= w(ell - 1) * acc.col(ell - 1);
          running[f].noalias() += sg * (lf.topRows(len).transpose() * w.segment(ell, len));
        }
        dW.col(ell - 1).noalias() = g * lf.row(n).transpose();
        if (opt.keep_diagonal_integrals) idiag.col(ell - 1).noalias() = g * lf.row(0).transpose();
        for (int j = 0; j < p; ++j) {
          const double z = sqrt_step * normal(eng_aux);
          const double w = dW(j, ell - 1);
          dB(j, ell - 1) = rho * w + rho_c * z;
          dBp(j, ell - 1) = rho_c * w - rho * z;
          const double hk = x_inf + (v0(j) - x_inf) * r_vec(ell);
          V(j, ell) = std::max(hk + scale * acc(j, ell), 0.0);
        }
        if (ell < n) {
          for (std::size_t f = 0; f < n_phi; ++f) {
            const auto& w = phi_weights[f];
            for (int j = 0; j < p; ++j) {
              const double stoch = running[f](j) - 0.5 * w(ell) * acc(j, ell) - 0.5 * w(n) * acc(j, n);
              out.phi[f](j, ell) += x_inf * det_w[f](ell) + (v0(j) - x_inf) * det_wr[f](ell) + scale * step * stoch;
            }
          }
        }
      }
      out.V.push_back(std::move(V));
      out.dW.push_back(std::move(dW));
      out.dB.push_back(std::move(dB));
      out.dBperp.push_back(std::move(dBp));
      if (opt.keep_diagonal_integrals) out.I_diag.push_back(std::move(idiag));
    }
    return out;
  }

  std::size_t block_count(const SimOptions& opt) const {
    if (opt.block_size < 1) throw ConfigError("mc.block_size must be >= 1");
    return (opt.n_paths + opt.block_size - 1) / opt.block_size;
  }

  /// Simulates all blocks (in parallel) and hands each to visit(block). visit
  /// may run concurrently for distinct blocks and must only write per-path outputs.
  template <class Visitor>
  void for_each_block(const SimOptions& opt, Visitor&& visit) const {
    const std::size_t blocks = block_count(opt);
    parallel_for(blocks, [&](std::size_t b) {
      const PathBlock block = simulate_block(opt, b);
      visit(block);
    });
  }

 private:
  ModelParams params_;
  SimGrid grid_;
  std::vector<std::vector<double>> resolvent_;
  std::vector<std::vector<double>> sigma_;
  std::vector<GaussianIntegralFactor> factors_;
};

/// All simulated paths in memory (paths x time per asset).
struct PathBundle {
  std::uint64_t seed = 0;
  SimGrid grid;
  std::vector<Eigen::MatrixXd> V;
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::MatrixXd> dB;
  std::vector<Eigen::MatrixXd> dBperp;
  std::vector<Eigen::MatrixXd> I_diag;
  std::vector<Eigen::MatrixXd> phi;

  std::size_t n_paths() const { return V.empty() ? 0 : static_cast<std::size_t>(V.front().rows()); }
  std::size_t d() const { return V.size(); }
};

inline PathBundle simulate_variance(const VarianceSimulator& sim, const SimOptions& opt) {
  PathBundle bundle;
  bundle.seed = opt.seed;
  bundle.grid = sim.grid();
  const int n = sim.grid().n;
  const std::size_t d = sim.params().d();
  const auto rows = static_cast<Eigen::Index>(opt.n_paths);
  bundle.V.assign(d, Eigen::MatrixXd(rows, n + 1));
  bundle.dW.assign(d, Eigen::MatrixXd(rows, n));
  bundle.dB.assign(d, Eigen::MatrixXd(rows, n));
  bundle.dBperp.assign(d, Eigen::MatrixXd(rows, n));
  if (opt.keep_diagonal_integrals) bundle.I_diag.assign(d, Eigen::MatrixXd(rows, n));
  bundle.phi.assign(opt.forward_weights.size(), Eigen::MatrixXd(rows, n + 1));
  sim.for_each_block(opt, [&](const PathBlock& b) {
    const auto r0 = static_cast<Eigen::Index>(b.first_path);
    for (std::size_t i = 0; i < d; ++i) {
      bundle.V[i].middleRows(r0, b.n_paths) = b.V[i];
      bundle.dW[i].middleRows(r0, b.n_paths) = b.dW[i];
      bundle.dB[i].middleRows(r0, b.n_paths) = b.dB[i];
      bundle.dBperp[i].middleRows(r0, b.n_paths) = b.dBperp[i];
      if (opt.keep_diagonal_integrals) bundle.I_diag[i].middleRows(r0, b.n_paths) = b.I_diag[i];
    }
    for (std::size_t f = 0; f < b.phi.size(); ++f) bundle.phi[f].middleRows(r0, b.n_paths) = b.phi[f];
  });
  return bundle;
}

inline PathBundle simulate_variance(const ModelParams& params, const std::vector<StabilizerTable>& stabs,
                                    const SimGrid& grid, const SimOptions& opt) {
  const VarianceSimulator sim(params, stabs, grid, opt.rank_tol);
  return simulate_variance(sim, opt);
}

/// Initial variance draws V_0^i ~ N(x_inf, c nu^2 x_inf), clipped at 1e-12.
/// Column i holds asset i. Uses the same streams as the simulator.
inline Eigen::MatrixXd sample_v0(const ModelParams& params, std::size_t n_paths, std::uint64_t seed, int block_size = 256) {
  params.validate();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n_paths), static_cast<Eigen::Index>(params.d()));
  const std::size_t blocks = (n_paths + block_size - 1) / block_size;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t first = b * block_size;
    const std::size_t p = std::min<std::size_t>(block_size, n_paths - first);
    for (std::size_t i = 0; i < params.d(); ++i) {
      const auto& a = params.assets[i];
      std::mt19937_64 eng = detail::stream_engine(seed, b, i, 1);
      boost::random::normal_distribution<double> normal;
      const double sd = std::sqrt(a.v0_var());
      for (std::size_t j = 0; j < p; ++j) {
        out(static_cast<Eigen::Index>(first + j), static_cast<Eigen::Index>(i)) =
            std::max(a.x_inf() + sd * normal(eng), 1e-12);
      }
    }
  }
  return out;
}

}  // namespace rvm

#endif
