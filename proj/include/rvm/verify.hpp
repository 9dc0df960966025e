#ifndef RVM_VERIFY_HPP
#define RVM_VERIFY_HPP

// Monte Carlo verification: wealth under deterministic rules, paired
// comparisons against perturbed rules, the martingale profile of the value
// process and the fake-stationarity statistics of the variance paths.

#include "rvm/parallel.hpp"
#include "rvm/simulate.hpp"
#include "rvm/strategy.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvm {

/// Mean and standard error of a sample (pairwise summation, order fixed by index).
struct SampleStats {
  double mean = 0.0;
  double se = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};

inline SampleStats sample_stats(const std::vector<double>& x) {
  SampleStats s;
  s.count = x.size();
  if (x.empty()) return s;
  s.mean = pairwise_sum(x.begin(), x.end()) / static_cast<double>(x.size());
  if (x.size() > 1) {
    std::vector<double> sq(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) sq[k] = (x[k] - s.mean) * (x[k] - s.mean);
    s.sd = std::sqrt(pairwise_sum(sq.begin(), sq.end()) / static_cast<double>(x.size() - 1));
    s.se = s.sd / std::sqrt(static_cast<double>(x.size()));
  }
  return s;
}

/// A deterministic rule on the simulation grid: row k (k = 0..n) holds the
/// multipliers of sqrt(V^i_{t_k}); the step from t_k to t_{k+1} uses row k.
struct WealthJob {
  std::string tag;
  UtilitySpec util;
  Eigen::MatrixXd rule;
  double x0 = 1.0;
};

struct WealthRun {
  std::string tag;
  UtilitySpec util;
  std::vector<double> terminal_wealth;
  std::vector<double> utility;
  double mean = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

class WealthError : public std::runtime_error {
 public:
  WealthError(const std::string& tag, std::size_t path)
      : std::runtime_error("wealth: non-finite value for strategy '" + tag + "' on path " + std::to_string(path)),
        path_index(path) {}
  std::size_t path_index;
};

namespace detail {

struct RateCache {
  std::vector<double> step;       ///< int_{t_k}^{t_{k+1}} r
  std::vector<double> from_zero;  ///< int_0^{t_k} r
};

inline RateCache rate_cache(const RateCurve& rate, const SimGrid& grid) {
  RateCache rc;
  rc.from_zero.assign(grid.n + 1, 0.0);
  for (int k = 0; k < grid.n; ++k) {
    rc.step.push_back(rate.integral(grid.time(k), grid.time(k + 1)));
    rc.from_zero[k + 1] = rc.from_zero[k] + rc.step.back();
  }
  return rc;
}

inline void check_job(const WealthJob& job, const SimGrid& grid, std::size_t d) {
  job.util.validate();
  if (job.rule.rows() != grid.n + 1 || job.rule.cols() != static_cast<Eigen::Index>(d)) {
    throw ConfigError("wealth: rule table for '" + job.tag + "' must be (n+1) x d");
  }
  if (!job.rule.allFinite()) throw ConfigError("wealth: rule table for '" + job.tag + "' is not finite");
  if (job.util.kind == UtilityKind::power && !(job.x0 > 0.0)) throw ConfigError("wealth: power utility requires x0 > 0");
}

// Wealth along one path. Writes X_{t_k}, k = 0..n, into path when non-null and returns X_T.
//   power:       log-Euler, log X += int r + (a.lam - |a|^2/2) dt + a.dB, a = rule sqrt(V)
//   exponential: Euler on the discounted wealth, X~ += e^{-int_0^t r}(a.lam dt + a.dB)
inline double wealth_path(const std::vector<Eigen::MatrixXd>& V, const std::vector<Eigen::MatrixXd>& dB,
                          Eigen::Index row, const WealthJob& job, const ModelParams& params, const SimGrid& grid,
                          const RateCache& rc, double* path) {
  const int n = grid.n;
  const double dt = grid.step();
  const std::size_t d = params.d();
  const bool power = job.util.kind == UtilityKind::power;
  double state = power ? std::log(job.x0) : job.x0;
  if (path) path[0] = job.x0;
  for (int k = 0; k < n; ++k) {
    double drift = 0.0, quad = 0.0, noise = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double sv = std::sqrt(std::max(V[i](row, k), 0.0));
      const double a = job.rule(k, static_cast<Eigen::Index>(i)) * sv;
      drift += a * params.assets[i].theta * sv;
      quad += a * a;
      noise += a * dB[i](row, k);
    }
    if (power) {
      state += rc.step[k] + (drift - 0.5 * quad) * dt + noise;
    } else {
      state += std::exp(-rc.from_zero[k]) * (drift * dt + noise);
    }
    if (path) path[k + 1] = power ? std::exp(state) : std::exp(rc.from_zero[k + 1]) * state;
  }
  return power ? std::exp(state) : std::exp(rc.from_zero[n]) * state;
}

inline WealthRun finish_run(const WealthJob& job, std::vector<double> xt, std::vector<double> ut) {
  WealthRun run;
  run.tag = job.tag;
  run.util = job.util;
  run.terminal_wealth = std::move(xt);
  run.utility = std::move(ut);
  const auto st = sample_stats(run.utility);
  run.mean = st.mean;
  run.se = st.se;
  run.ci_low = st.mean - 1.96 * st.se;
  run.ci_high = st.mean + 1.96 * st.se;
  return run;
}

template <class Paths>
void wealth_rows(const Paths& p, std::size_t first_path, Eigen::Index rows, const std::vector<WealthJob>& jobs,
                 const ModelParams& params, const SimGrid& grid, const RateCache& rc,
                 std::vector<std::vector<double>>& xt, std::vector<std::vector<double>>& ut) {
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      const std::size_t idx = first_path + static_cast<std::size_t>(r);
      const double x = wealth_path(p.V, p.dB, r, jobs[j], params, grid, rc, nullptr);
      const double u = jobs[j].util(x);
      if (!std::isfinite(x) || !std::isfinite(u)) throw WealthError(jobs[j].tag, idx);
      xt[j][idx] = x;
      ut[j][idx] = u;
    }
  }
}

}  // namespace detail

/// Terminal wealth and utility for several rules on the same simulated paths
/// (common random numbers). Paths are streamed block by block.
inline std::vector<WealthRun> evaluate_wealth(const VarianceSimulator& sim, const SimOptions& opt,
                                              const std::vector<WealthJob>& jobs) {
  const auto& grid = sim.grid();
  const auto& params = sim.params();
  for (const auto& job : jobs) detail::check_job(job, grid, params.d());
  const auto rc = detail::rate_cache(params.rate, grid);
  std::vector<std::vector<double>> xt(jobs.size(), std::vector<double>(opt.n_paths));
  std::vector<std::vector<double>> ut(jobs.size(), std::vector<double>(opt.n_paths));
  sim.for_each_block(opt, [&](const PathBlock& b) {
    detail::wealth_rows(b, b.first_path, b.n_paths, jobs, params, grid, rc, xt, ut);
  });
  std::vector<WealthRun> out;
  for (std::size_t j = 0; j < jobs.size(); ++j) out.push_back(detail::finish_run(jobs[j], std::move(xt[j]), std::move(ut[j])));
  return out;
}

/// Wealth under one rule on paths held in memory.
inline WealthRun simulate_wealth(const PathBundle& bundle, const UtilitySpec& util, const Eigen::MatrixXd& rule,
                                 const ModelParams& params, double x0, const std::string& tag = "rule") {
  if (bundle.d() != params.d()) throw ConfigError("wealth: bundle and model disagree on the number of assets");
  const std::vector<WealthJob> jobs{WealthJob{tag, util, rule, x0}};
  detail::check_job(jobs[0], bundle.grid, params.d());
  const auto rc = detail::rate_cache(params.rate, bundle.grid);
  const std::size_t m = bundle.n_paths();
  std::vector<std::vector<double>> xt(1, std::vector<double>(m)), ut(1, std::vector<double>(m));
  detail::wealth_rows(bundle, 0, static_cast<Eigen::Index>(m), jobs, params, bundle.grid, rc, xt, ut);
  return detail::finish_run(jobs[0], std::move(xt[0]), std::move(ut[0]));
}

/// Rule from a callable t -> d-vector, tabulated on the grid.
inline Eigen::MatrixXd tabulate_rule(const std::function<std::vector<double>(double)>& rule, const SimGrid& grid,
                                     std::size_t d) {
  Eigen::MatrixXd out(grid.n + 1, static_cast<Eigen::Index>(d));
  for (int k = 0; k <= grid.n; ++k) {
    const auto r = rule(grid.time(k));
    if (r.size() != d) throw ConfigError("rule: expected " + std::to_string(d) + " components");
    for (std::size_t i = 0; i < d; ++i) out(k, static_cast<Eigen::Index>(i)) = r[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Perturbations

struct PerturbationSpec {
  std::string name;
  double epsilon = 0.0;
  std::function<std::vector<double>(double)> direction;  ///< h(t)

  static PerturbationSpec constant(std::string name, double eps, std::vector<double> h) {
    return {std::move(name), eps, [h](double) { return h; }};
  }
};

struct PerturbationResult {
  std::string name;
  double epsilon = 0.0;
  double value_optimal = 0.0;
  double value_perturbed = 0.0;
  double delta = 0.0;     ///< E U(X*) - E U(X perturbed)
  double se = 0.0;        ///< paired standard error of delta
  double curvature = 0.0; ///< delta / epsilon^2
  double z() const { return se > 0.0 ? delta / se : (delta > 0.0 ? std::numeric_limits<double>::infinity() : 0.0); }
};

struct OptimalityReport {
  WealthRun optimal;
  std::vector<PerturbationResult> results;
};

namespace detail {

inline std::vector<WealthJob> perturbation_jobs(const WealthJob& optimal, const std::vector<PerturbationSpec>& perts,
                                                const SimGrid& grid) {
  std::vector<WealthJob> jobs{optimal};
  for (const auto& p : perts) {
    if (!(p.epsilon >= 0.0)) throw ConfigError("perturbation '" + p.name + "': epsilon must be >= 0");
    WealthJob j = optimal;
    j.tag = p.name;
    j.rule += p.epsilon * tabulate_rule(p.direction, grid, static_cast<std::size_t>(optimal.rule.cols()));
    jobs.push_back(std::move(j));
  }
  return jobs;
}

inline OptimalityReport paired_report(std::vector<WealthRun> runs, const std::vector<PerturbationSpec>& perts) {
  OptimalityReport rep;
  rep.optimal = std::move(runs.front());
  for (std::size_t q = 0; q < perts.size(); ++q) {
    const auto& pr = runs[q + 1];
    std::vector<double> diff(pr.utility.size());
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = rep.optimal.utility[k] - pr.utility[k];
    const auto st = sample_stats(diff);
    PerturbationResult r;
    r.name = perts[q].name;
    r.epsilon = perts[q].epsilon;
    r.value_optimal = rep.optimal.mean;
    r.value_perturbed = pr.mean;
    r.delta = st.mean;
    r.se = st.se;
    r.curvature = r.epsilon > 0.0 ? st.mean / (r.epsilon * r.epsilon) : 0.0;
    rep.results.push_back(r);
  }
  return rep;
}

}  // namespace detail

/// Paired comparison of the optimal rule against rule + epsilon h on common paths.
inline OptimalityReport optimality_test(const VarianceSimulator& sim, const SimOptions& opt, const WealthJob& optimal,
                                        const std::vector<PerturbationSpec>& perts) {
  auto jobs = detail::perturbation_jobs(optimal, perts, sim.grid());
  return detail::paired_report(evaluate_wealth(sim, opt, jobs), perts);
}

inline OptimalityReport optimality_test(const PathBundle& bundle, const ModelParams& params, const WealthJob& optimal,
                                        const std::vector<PerturbationSpec>& perts) {
  auto jobs = detail::perturbation_jobs(optimal, perts, bundle.grid);
  std::vector<WealthRun> runs;
  for (const auto& j : jobs) runs.push_back(simulate_wealth(bundle, j.util, j.rule, params, j.x0, j.tag));
  return detail::paired_report(std::move(runs), perts);
}

// ---------------------------------------------------------------------------
// Martingale profile

/// Sample mean of J_{t_k} along the optimal wealth, where
///   power:       J_t = (X_t^gamma/gamma) exp(gamma int_t^T r + Phi_t)
///   exponential: J_t = -(1/gamma) exp(-gamma e^{int_t^T r} X_t + Phi_t)
/// and Phi_t = sum_i int_t^T c~_i(u) xi^i_t(u) du is the pathwise exponent.
struct MartingaleProfile {
  std::vector<double> times;
  std::vector<double> mean;      ///< mean of J_{t_k}
  std::vector<double> se;        ///< standard error of mean J_{t_k}
  std::vector<double> se_diff;   ///< paired standard error of mean(J_{t_k} - J_0)
  std::vector<double> z;         ///< (mean_k - mean_0)/se_diff
  double flatness = 0.0;         ///< max_k |z_k|
  double terminal_utility = 0.0; ///< mean U(X_T)
  std::size_t n_paths = 0;
};

namespace detail {

// Count, mean and centred second moment; merged block by block in a fixed order.
struct RunningMoments {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    count += 1.0;
    const double d = x - mean;
    mean += d / count;
    m2 += d * (x - mean);
  }
  void merge(const RunningMoments& o) {
    if (o.count == 0.0) return;
    const double total = count + o.count;
    const double d = o.mean - mean;
    mean += d * o.count / total;
    m2 += o.m2 + d * d * count * o.count / total;
    count = total;
  }
  double variance() const { return count > 1.0 ? m2 / (count - 1.0) : 0.0; }
  double se() const { return count > 0.0 ? std::sqrt(variance() / count) : 0.0; }
};

struct ProfileSums {
  std::vector<RunningMoments> j, d;
  RunningMoments ut;
  explicit ProfileSums(int n = 0) : j(n + 1), d(n + 1) {}
};

template <class Paths>
ProfileSums profile_rows(const Paths& p, Eigen::Index rows, const Eigen::MatrixXd& phi, std::size_t first_path,
                         const WealthJob& job, const ModelParams& params, const SimGrid& grid, const RateCache& rc) {
  const int n = grid.n;
  ProfileSums s(n);
  std::vector<double> x(n + 1);
  const double g = job.util.gamma;
  const double rT = rc.from_zero[n];
  for (Eigen::Index r = 0; r < rows; ++r) {
    wealth_path(p.V, p.dB, r, job, params, grid, rc, x.data());
    double j0 = 0.0;
    for (int k = 0; k <= n; ++k) {
      const double rem = rT - rc.from_zero[k];
      double jk;
      if (job.util.kind == UtilityKind::power) {
        jk = std::pow(x[k], g) / g * std::exp(g * rem + phi(r, k));
      } else {
        jk = -std::exp(-g * std::exp(rem) * x[k] + phi(r, k)) / g;
      }
      if (!std::isfinite(jk)) throw WealthError(job.tag, first_path + static_cast<std::size_t>(r));
      if (k == 0) j0 = jk;
      s.j[k].add(jk);
      s.d[k].add(jk - j0);
    }
    s.ut.add(job.util(x[n]));
  }
  return s;
}

inline MartingaleProfile finish_profile(const std::vector<ProfileSums>& parts, const SimGrid& grid, std::size_t m) {
  const int n = grid.n;
  MartingaleProfile out;
  out.n_paths = m;
  out.times = grid.times();
  for (int k = 0; k <= n; ++k) {
    RunningMoments jm, dm;
    for (const auto& part : parts) {
      jm.merge(part.j[k]);
      dm.merge(part.d[k]);
    }
    out.mean.push_back(jm.mean);
    out.se.push_back(jm.se());
    out.se_diff.push_back(dm.se());
    const double z = dm.se() > 0.0 ? dm.mean / dm.se() : 0.0;
    out.z.push_back(z);
    out.flatness = std::max(out.flatness, std::fabs(z));
  }
  RunningMoments ut;
  for (const auto& part : parts) ut.merge(part.ut);
  out.terminal_utility = ut.mean;
  return out;
}

}  // namespace detail

/// Streams paths with the forward functional built from c~ and accumulates the
/// profile. opt.forward_weights is replaced by the weights of this rule.
inline MartingaleProfile martingale_profile(const VarianceSimulator& sim, SimOptions opt, const WealthJob& job,
                                            const std::vector<std::vector<double>>& weights) {
  const auto& grid = sim.grid();
  const auto& params = sim.params();
  detail::check_job(job, grid, params.d());
  opt.forward_weights = {weights};
  const auto rc = detail::rate_cache(params.rate, grid);
  std::vector<detail::ProfileSums> parts(sim.block_count(opt));
  sim.for_each_block(opt, [&](const PathBlock& b) {
    parts[b.block_index] = detail::profile_rows(b, b.n_paths, b.phi[0], b.first_path, job, params, grid, rc);
  });
  return detail::finish_profile(parts, grid, opt.n_paths);
}

/// Profile on paths held in memory; bundle.phi[functional] must come from the
/// forward weights of the same rule.
inline MartingaleProfile martingale_profile(const PathBundle& bundle, const ModelParams& params, const WealthJob& job,
                                            std::size_t functional = 0) {
  if (functional >= bundle.phi.size()) throw ConfigError("martingale_profile: bundle has no forward functional");
  detail::check_job(job, bundle.grid, params.d());
  const auto rc = detail::rate_cache(params.rate, bundle.grid);
  const std::vector<detail::ProfileSums> parts{detail::profile_rows(
      bundle, static_cast<Eigen::Index>(bundle.n_paths()), bundle.phi[functional], 0, job, params, bundle.grid, rc)};
  return detail::finish_profile(parts, bundle.grid, bundle.n_paths());
}

/// The optimal rule together with its forward weights, ready for the profile.
struct OptimalRuleData {
  WealthJob job;
  std::vector<std::vector<double>> weights;
};

inline OptimalRuleData optimal_rule_data(const UtilitySpec& util, const ModelParams& params, const RiccatiSolution& sol,
                                         const std::vector<SigmaFunction>& sigma, const SimGrid& grid, double x0,
                                         const std::string& tag = "optimal") {
  OptimalRuleData out;
  out.job = WealthJob{tag, util, rule_table(util, params, sol, sigma, grid), x0};
  out.weights = forward_weights(util, params, sol, sigma, grid);
  return out;
}

// ---------------------------------------------------------------------------
// Stationarity

struct StationarityAsset {
  std::vector<double> mean;  ///< per grid time
  std::vector<double> var;
  std::vector<double> mean_z;  ///< (mean_k - x_inf)/SE
  std::vector<double> var_z;   ///< (var_k - v0)/SE(var)
  double mean_stat = 0.0;      ///< max_k |mean_z|
  double var_stat = 0.0;       ///< max_k |var_z|
  double x_inf = 0.0;
  double v0 = 0.0;
};

struct StationarityReport {
  std::vector<double> times;
  std::vector<StationarityAsset> assets;
  std::size_t n_paths = 0;
};

namespace detail {

// Power sums of d = V - x_inf per grid time, orders 1..4.
struct MomentSums {
  std::vector<std::array<double, 4>> s;
};

inline MomentSums moment_sums(const Eigen::MatrixXd& V, double center) {
  MomentSums m;
  m.s.assign(static_cast<std::size_t>(V.cols()), {0.0, 0.0, 0.0, 0.0});
  for (Eigen::Index k = 0; k < V.cols(); ++k) {
    auto& a = m.s[static_cast<std::size_t>(k)];
    for (Eigen::Index r = 0; r < V.rows(); ++r) {
      const double d = V(r, k) - center;
      const double d2 = d * d;
      a[0] += d;
      a[1] += d2;
      a[2] += d2 * d;
      a[3] += d2 * d2;
    }
  }
  return m;
}

inline double safe_z(double dev, double se) {
  if (dev == 0.0) return 0.0;
  return se > 0.0 ? dev / se : std::numeric_limits<double>::infinity();
}

inline StationarityReport finish_stationarity(const ModelParams& params, const SimGrid& grid,
                                              const std::vector<std::vector<MomentSums>>& parts, std::size_t m) {
  StationarityReport rep;
  rep.times = grid.times();
  rep.n_paths = m;
  const double M = static_cast<double>(m);
  for (std::size_t i = 0; i < params.d(); ++i) {
    StationarityAsset as;
    as.x_inf = params.assets[i].x_inf();
    as.v0 = params.assets[i].v0_var();
    for (int k = 0; k <= grid.n; ++k) {
      std::array<double, 4> raw{};
      for (int o = 0; o < 4; ++o) {
        std::vector<double> v(parts.size());
        for (std::size_t b = 0; b < parts.size(); ++b) v[b] = parts[b][i].s[k][o];
        raw[o] = pairwise_sum(v.begin(), v.end()) / M;
      }
      const double mu = raw[0];
      const double c2 = raw[1] - mu * mu;
      const double c4 = raw[3] - 4.0 * mu * raw[2] + 6.0 * mu * mu * raw[1] - 3.0 * mu * mu * mu * mu;
      const double var = c2 * M / std::max(M - 1.0, 1.0);
      as.mean.push_back(as.x_inf + mu);
      as.var.push_back(var);
      as.mean_z.push_back(safe_z(mu, std::sqrt(std::max(var, 0.0) / M)));
      as.var_z.push_back(safe_z(var - as.v0, std::sqrt(std::max(c4 - c2 * c2, 0.0) / M)));
      as.mean_stat = std::max(as.mean_stat, std::fabs(as.mean_z.back()));
      as.var_stat = std::max(as.var_stat, std::fabs(as.var_z.back()));
    }
    rep.assets.push_back(std::move(as));
  }
  return rep;
}

}  // namespace detail

/// Flatness of the mean and variance of V over the grid, streamed.
inline StationarityReport stationarity_report(const VarianceSimulator& sim, const SimOptions& opt) {
  const auto& params = sim.params();
  std::vector<std::vector<detail::MomentSums>> parts(sim.block_count(opt));
  sim.for_each_block(opt, [&](const PathBlock& b) {
    for (std::size_t i = 0; i < params.d(); ++i) {
      parts[b.block_index].push_back(detail::moment_sums(b.V[i], params.assets[i].x_inf()));
    }
  });
  return detail::finish_stationarity(params, sim.grid(), parts, opt.n_paths);
}

inline StationarityReport stationarity_report(const PathBundle& bundle, const ModelParams& params) {
  if (bundle.d() != params.d()) throw ConfigError("stationarity: bundle and model disagree on the number of assets");
  std::vector<std::vector<detail::MomentSums>> parts(1);
  for (std::size_t i = 0; i < params.d(); ++i) {
    parts[0].push_back(detail::moment_sums(bundle.V[i], params.assets[i].x_inf()));
  }
  return detail::finish_stationarity(params, bundle.grid, parts, bundle.n_paths());
}

}  // namespace rvm

#endif
