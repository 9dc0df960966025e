#ifndef RVM_CLI_HPP
#define RVM_CLI_HPP

// Command-line front end. Every subcommand writes its files into the output
// directory and prints a JSON summary on stdout.
//
// Exit codes: 0 success, 1 failed verification, 2 configuration error,
// 3 Riccati blowup, 4 any other error.

#include "rvm/config.hpp"
#include "rvm/csv.hpp"
#include "rvm/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace rvm::cli {

using json = nlohmann::json;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"stabilizer", "riccati", "simulate", "strategy", "value", "verify", "all"};
  return names;
}

/// Command-line values that replace configuration entries.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::optional<std::size_t> paths;
  std::optional<int> steps;
  std::optional<std::string> utility;
};

/// Configuration used when no --config is given: the two-asset reference set.
inline RunConfig default_config() {
  RunConfig cfg;
  cfg.model = reference_two_asset_model();
  return cfg;
}

inline RunConfig resolve_config(const Overrides& o) {
  RunConfig cfg = o.config ? load_config(*o.config) : default_config();
  if (o.out) cfg.output_dir = *o.out;
  if (o.seed) cfg.mc.seed = *o.seed;
  if (o.gamma) cfg.utility.gammas = {*o.gamma};
  if (o.paths) cfg.mc.paths = *o.paths;
  if (o.steps) cfg.grids.n_sim = *o.steps;
  if (o.utility) cfg.utility.kind = parse_utility_kind(*o.utility);
  cfg.validate();
  return cfg;
}

class Runner {
 public:
  Runner(RunConfig cfg, std::ostream& out) : cfg_(std::move(cfg)), hash_(config_hash(cfg_)), out_(out) {
    std::filesystem::create_directories(cfg_.output_dir);
  }

  const RunConfig& config() const { return cfg_; }

  int dispatch(const std::string& sub) {
    json report;
    bool pass = true;
    if (sub == "stabilizer") {
      report = stabilizer();
    } else if (sub == "riccati") {
      report = riccati();
    } else if (sub == "simulate") {
      report = simulate();
    } else if (sub == "strategy") {
      report = strategy();
    } else if (sub == "value") {
      report = value();
    } else if (sub == "verify") {
      report = verify();
    } else if (sub == "all") {
      report = all();
    } else {
      throw ConfigError("unknown subcommand '" + sub + "'");
    }
    // subcommands that run invariant checks report them under "pass"
    if (report.contains("pass")) pass = report.at("pass").get<bool>();
    json doc = meta();
    doc["subcommand"] = sub;
    doc["report"] = report;
    out_ << doc.dump(2) << "\n";
    return pass ? 0 : 1;
  }

 private:
  json meta() const {
    return {{"rvm_version", kVersion}, {"config_hash", hash_}, {"seed", cfg_.mc.seed}};
  }

  CsvMeta csv_meta(const std::string& title) const { return {title, hash_, cfg_.mc.seed, kVersion}; }

  std::string path(const std::string& name) const { return (std::filesystem::path(cfg_.output_dir) / name).string(); }

  static std::string gamma_label(double g) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "g%g", g);
    return buf;
  }

  void write_json(const std::string& name, const json& j) const {
    std::ofstream f(path(name));
    if (!f) throw std::runtime_error("cannot write '" + path(name) + "'");
    json doc = meta();
    doc["report"] = j;
    f << doc.dump(2) << "\n";
  }

  const std::vector<StabilizerTable>& stabs() {
    if (stabs_.empty()) stabs_ = make_stabilizers(cfg_.model, cfg_.sim_grid().times());
    return stabs_;
  }

  const VarianceSimulator& simulator() {
    if (!sim_) sim_.emplace(cfg_.model, stabs(), cfg_.sim_grid());
    return *sim_;
  }

  RiccatiSpec riccati_spec(UtilityKind kind, double gamma) {
    return RiccatiSpec::from_tables(general_variant(kind), cfg_.model, gamma, stabs(), cfg_.grids.n_riccati);
  }

  std::vector<double> riccati_times() const { return uniform_grid(cfg_.model.horizon, cfg_.grids.n_riccati); }

  std::size_t d() const { return cfg_.model.d(); }

  // ---- subcommands -------------------------------------------------------

  json stabilizer() {
    const auto grid = cfg_.sim_grid().times();
    std::vector<std::pair<std::string, std::vector<double>>> cols{{"t", grid}};
    json assets = json::array();
    bool pass = true;
    const auto check_grid = uniform_grid(cfg_.model.horizon, 50);
    for (std::size_t i = 0; i < d(); ++i) {
      cols.emplace_back("sigma_" + std::to_string(i + 1), stabs()[i].values());
      const auto& a = cfg_.model.assets[i];
      const StabilizerTable coarse(a.kernel(), a.c, check_grid);
      const double scale = a.c * a.lambda * a.lambda;
      const double res = functional_equation_residual(coarse, resolvent_table(a.kernel(), check_grid));
      const double rel = scale > 0.0 ? res / scale : res;
      pass = pass && rel <= cfg_.tol.stabilizer_rel;
      assets.push_back({{"asset", i + 1}, {"residual_rel", rel}, {"limit", stabs()[i].limit()}});
    }
    write_csv(path("stabilizer.csv"), csv_meta("stabilizer sigma_i(t) on the simulation grid"), cols);
    return {{"files", {"stabilizer.csv"}}, {"assets", assets}, {"pass", pass}};
  }

  json riccati() {
    json files = json::array(), checks = json::array();
    bool pass = true;
    for (double g : cfg_.utility.gammas) {
      const auto spec = riccati_spec(cfg_.utility.kind, g);
      const auto sol = solve_riccati(spec);
      std::vector<std::pair<std::string, std::vector<double>>> cols{{"t", sol.times}};
      for (std::size_t i = 0; i < d(); ++i) cols.emplace_back("psi_" + std::to_string(i + 1), sol.psi[i]);
      const std::string name = std::string("riccati_") + to_string(cfg_.utility.kind) + "_" + gamma_label(g) + ".csv";
      write_csv(path(name), csv_meta(std::string("psi_i(t), ") + to_string(sol.variant) + ", gamma=" + gamma_label(g).substr(1)),
                cols);
      files.push_back(name);
      json c = {{"gamma", g}};
      if (!is_power(sol.variant)) {
        std::vector<double> sup;
        for (const auto& s : spec.sigma) sup.push_back(sigma_sup_norm(s, cfg_.model.horizon));
        const auto rep = psi_bound_check(sol, cfg_.model, sup);
        c["psi_bound_pass"] = rep.pass();
        pass = pass && rep.pass();
      }
      checks.push_back(c);
    }
    return {{"files", files}, {"checks", checks}, {"pass", pass}};
  }

  // Moments of V over the grid plus the first few paths, from one streamed pass.
  struct PathSummary {
    StationarityReport stationarity;
    std::vector<Eigen::MatrixXd> first_paths;
  };

  PathSummary summarize_paths(int keep) {
    const auto& sim = simulator();
    auto opt = cfg_.sim_options();
    opt.v0_mode = V0Mode::gaussian;  // the variance law is studied from the stationary start
    std::vector<std::vector<detail::MomentSums>> parts(sim.block_count(opt));
    PathSummary out;
    out.first_paths.assign(d(), Eigen::MatrixXd());
    sim.for_each_block(opt, [&](const PathBlock& b) {
      for (std::size_t i = 0; i < d(); ++i) {
        parts[b.block_index].push_back(detail::moment_sums(b.V[i], cfg_.model.assets[i].x_inf()));
      }
      if (b.block_index == 0) {
        for (std::size_t i = 0; i < d(); ++i) out.first_paths[i] = b.V[i].topRows(std::min(keep, b.n_paths));
      }
    });
    out.stationarity = detail::finish_stationarity(cfg_.model, sim.grid(), parts, opt.n_paths);
    return out;
  }

  std::vector<std::pair<std::string, std::vector<double>>> moment_columns(const StationarityReport& st) {
    std::vector<std::pair<std::string, std::vector<double>>> cols{{"t", st.times}};
    for (std::size_t i = 0; i < d(); ++i) {
      const auto& a = st.assets[i];
      const std::string s = std::to_string(i + 1);
      cols.emplace_back("mean_V_" + s, a.mean);
      cols.emplace_back("var_V_" + s, a.var);
      cols.emplace_back("x_inf_" + s, std::vector<double>(a.mean.size(), a.x_inf));
      cols.emplace_back("v0_" + s, std::vector<double>(a.mean.size(), a.v0));
      cols.emplace_back("mean_z_" + s, a.mean_z);
      cols.emplace_back("var_z_" + s, a.var_z);
    }
    return cols;
  }

  static json stationarity_json(const StationarityReport& st) {
    json a = json::array();
    for (std::size_t i = 0; i < st.assets.size(); ++i) {
      a.push_back({{"asset", i + 1}, {"mean_stat", st.assets[i].mean_stat}, {"var_stat", st.assets[i].var_stat}});
    }
    return a;
  }

  json simulate() {
    const auto summary = summarize_paths(30);
    write_csv(path("simulate_moments.csv"), csv_meta("sample mean and variance of V_i over the grid"),
              moment_columns(summary.stationarity));
    const auto t = cfg_.sim_grid().times();
    std::vector<std::pair<std::string, std::vector<double>>> cols{{"t", t}};
    for (std::size_t i = 0; i < d(); ++i) {
      const auto& P = summary.first_paths[i];
      for (Eigen::Index p = 0; p < P.rows(); ++p) {
        std::vector<double> row(P.cols());
        for (Eigen::Index k = 0; k < P.cols(); ++k) row[k] = P(p, k);
        cols.emplace_back("V" + std::to_string(i + 1) + "_path_" + std::to_string(p + 1), row);
      }
    }
    write_csv(path("simulate_paths.csv"), csv_meta("sample paths of V_i"), cols);
    return {{"files", {"simulate_moments.csv", "simulate_paths.csv"}},
            {"paths", cfg_.mc.paths},
            {"stationarity", stationarity_json(summary.stationarity)}};
  }

  std::vector<std::vector<double>> rule_columns(UtilityKind kind, double g) {
    const auto spec = riccati_spec(kind, g);
    const auto sol = solve_riccati(spec);
    const UtilitySpec u{kind, g};
    std::vector<std::vector<double>> cols(d());
    for (double t : riccati_times()) {
      const auto r = optimal_rule(u, cfg_.model, sol, spec.sigma, t);
      for (std::size_t i = 0; i < d(); ++i) cols[i].push_back(r[i]);
    }
    return cols;
  }

  json strategy() {
    json files = json::array();
    for (double g : cfg_.utility.gammas) {
      const auto rules = rule_columns(cfg_.utility.kind, g);
      std::vector<std::pair<std::string, std::vector<double>>> cols{{"t", riccati_times()}};
      for (std::size_t i = 0; i < d(); ++i) cols.emplace_back("rule_" + std::to_string(i + 1), rules[i]);
      const std::string name = std::string("strategy_") + to_string(cfg_.utility.kind) + "_" + gamma_label(g) + ".csv";
      write_csv(path(name), csv_meta("optimal multipliers of sqrt(V_i), gamma=" + gamma_label(g).substr(1)), cols);
      files.push_back(name);
    }
    return {{"files", files}};
  }

  double analytic_value(UtilityKind kind, double g) {
    const auto spec = riccati_spec(kind, g);
    const auto sol = solve_riccati(spec);
    return value_function({kind, g}, cfg_.model, sol, spec.sigma, cfg_.model.x0);
  }

  json value() {
    json values = json::array();
    for (double g : cfg_.utility.gammas) values.push_back({{"gamma", g}, {"value", analytic_value(cfg_.utility.kind, g)}});
    json rep = {{"utility", to_string(cfg_.utility.kind)}, {"x0", cfg_.model.x0}, {"v0", "mean"}, {"values", values}};
    write_json("value.json", rep);
    rep["files"] = {"value.json"};
    return rep;
  }

  json verify() {
    const auto kind = cfg_.utility.kind;
    const auto& tol = cfg_.tol;
    const auto& sim = simulator();
    const auto grid = cfg_.sim_grid();
    const auto opt = cfg_.sim_options();
    bool pass = true;
    json files = json::array();

    // value agreement, one pass for all gammas
    std::vector<WealthJob> jobs;
    std::vector<double> values;
    std::vector<OptimalRuleData> rules;
    for (double g : cfg_.utility.gammas) {
      const auto spec = riccati_spec(kind, g);
      const auto sol = solve_riccati(spec);
      const UtilitySpec u{kind, g};
      rules.push_back(optimal_rule_data(u, cfg_.model, sol, spec.sigma, grid, cfg_.model.x0, gamma_label(g)));
      jobs.push_back(rules.back().job);
      values.push_back(value_function(u, cfg_.model, sol, spec.sigma, cfg_.model.x0));
    }
    const auto runs = evaluate_wealth(sim, opt, jobs);
    json value_checks = json::array();
    for (std::size_t j = 0; j < runs.size(); ++j) {
      const double allowed = tol.value_se * runs[j].se + tol.value_rel * std::fabs(values[j]);
      const bool ok = std::fabs(runs[j].mean - values[j]) <= allowed;
      pass = pass && ok;
      value_checks.push_back({{"gamma", cfg_.utility.gammas[j]}, {"analytic", values[j]}, {"mc_mean", runs[j].mean},
                              {"mc_se", runs[j].se}, {"allowed", allowed}, {"pass", ok}});
    }

    // perturbations of the first rule
    std::vector<PerturbationSpec> perts;
    std::vector<double> ones(d(), 1.0), alternating(d()), first(d(), 0.0);
    for (std::size_t i = 0; i < d(); ++i) alternating[i] = i % 2 == 0 ? 1.0 : -1.0;
    first[0] = 1.0;
    const std::vector<std::pair<std::string, std::vector<double>>> dirs{
        {"ones", ones}, {"alternating", alternating}, {"first", first}};
    for (const auto& [name, h] : dirs) {
      for (double eps : {0.1, 0.2, 0.4}) perts.push_back(PerturbationSpec::constant(name, eps, h));
    }
    const auto opt_rep = optimality_test(sim, opt, rules.front().job, perts);
    json pert_checks = json::array();
    for (const auto& [name, h] : dirs) {
      std::vector<const PerturbationResult*> group;
      for (const auto& r : opt_rep.results) {
        if (r.name == name) group.push_back(&r);
      }
      double mean_curv = 0.0;
      for (const auto* r : group) mean_curv += r->curvature / static_cast<double>(group.size());
      json items = json::array();
      bool ok = true;
      for (const auto* r : group) {
        const bool sig = r->z() >= tol.optimality_z;
        const bool stable = std::fabs(r->curvature - mean_curv) <= tol.curvature_rel * std::fabs(mean_curv);
        ok = ok && sig && stable;
        items.push_back({{"epsilon", r->epsilon}, {"delta", r->delta}, {"se", r->se}, {"z", r->z()},
                         {"curvature", r->curvature}});
      }
      pass = pass && ok;
      pert_checks.push_back({{"direction", name}, {"h", h}, {"results", items}, {"pass", ok}});
    }

    // martingale profiles
    json profiles = json::array();
    for (std::size_t j = 0; j < rules.size(); ++j) {
      const auto prof = martingale_profile(sim, opt, rules[j].job, rules[j].weights);
      const bool flat = prof.flatness <= tol.profile_se;
      const double start_tol = std::max(3.0 * prof.se.front(), 1e-4 * std::fabs(values[j]));
      const bool start = std::fabs(prof.mean.front() - values[j]) <= start_tol;
      const bool end = std::fabs(prof.mean.back() - runs[j].mean) <= 1e-12 * std::fabs(runs[j].mean);
      pass = pass && flat && start && end;
      const std::string name =
          std::string("verify_profile_") + to_string(kind) + "_" + gamma_label(cfg_.utility.gammas[j]) + ".csv";
      write_csv(path(name), csv_meta("martingale profile of J_t under the optimal rule"),
                {{"t", prof.times}, {"mean_J", prof.mean}, {"se_J", prof.se}, {"se_diff", prof.se_diff}, {"z", prof.z}});
      files.push_back(name);
      profiles.push_back({{"gamma", cfg_.utility.gammas[j]}, {"flatness", prof.flatness}, {"J0", prof.mean.front()},
                          {"JT", prof.mean.back()}, {"value", values[j]}, {"pass", flat && start && end}});
    }

    // stationarity of the variance paths
    auto sopt = opt;
    sopt.v0_mode = V0Mode::gaussian;
    const auto st = stationarity_report(sim, sopt);
    bool st_ok = true;
    for (const auto& a : st.assets) st_ok = st_ok && a.mean_stat <= tol.stationarity_se && a.var_stat <= tol.stationarity_se;
    pass = pass && st_ok;

    json rep = {{"utility", to_string(kind)},
                {"paths", cfg_.mc.paths},
                {"steps", cfg_.grids.n_sim},
                {"value", value_checks},
                {"optimality", pert_checks},
                {"profile", profiles},
                {"stationarity", {{"assets", stationarity_json(st)}, {"pass", st_ok}}},
                {"pass", pass}};
    write_json("verify.json", rep);
    files.push_back("verify.json");
    rep["files"] = files;
    return rep;
  }

  json all() {
    const auto summary = summarize_paths(30);
    // fig1: stabilizer and 30 paths of V^1
    {
      const auto t = cfg_.sim_grid().times();
      std::vector<std::pair<std::string, std::vector<double>>> cols{{"t", t}};
      for (std::size_t i = 0; i < d(); ++i) cols.emplace_back("sigma_" + std::to_string(i + 1), stabs()[i].values());
      const auto& P = summary.first_paths[0];
      for (Eigen::Index p = 0; p < P.rows(); ++p) {
        std::vector<double> row(P.cols());
        for (Eigen::Index k = 0; k < P.cols(); ++k) row[k] = P(p, k);
        cols.emplace_back("V1_path_" + std::to_string(p + 1), row);
      }
      write_csv(path("fig1.csv"), csv_meta("stabilizers and sample paths of V_1"), cols);
    }
    // fig2: sample mean and variance of V over time
    write_csv(path("fig2.csv"), csv_meta("sample mean and variance of V_i over the grid"),
              moment_columns(summary.stationarity));
    // fig3: psi for both utilities at the first gamma of the sweep
    const std::vector<double> sweep{0.2, 0.5, 0.8};
    {
      std::vector<std::pair<std::string, std::vector<double>>> cols{{"t", riccati_times()}};
      for (UtilityKind kind : {UtilityKind::power, UtilityKind::exponential}) {
        const auto sol = solve_riccati(riccati_spec(kind, sweep.front()));
        for (std::size_t i = 0; i < d(); ++i) {
          cols.emplace_back(std::string(to_string(kind)) + "_psi_" + std::to_string(i + 1), sol.psi[i]);
        }
      }
      write_csv(path("fig3.csv"), csv_meta("psi_i(t), gamma=0.2, power and exponential"), cols);
    }
    // fig4: optimal rules over the gamma sweep
    json values = json::array();
    {
      std::vector<std::pair<std::string, std::vector<double>>> cols{{"t", riccati_times()}};
      for (double g : sweep) {
        for (UtilityKind kind : {UtilityKind::power, UtilityKind::exponential}) {
          const auto rules = rule_columns(kind, g);
          for (std::size_t i = 0; i < d(); ++i) {
            cols.emplace_back(std::string(to_string(kind)) + "_" + gamma_label(g) + "_rule_" + std::to_string(i + 1),
                              rules[i]);
          }
          values.push_back({{"utility", to_string(kind)}, {"gamma", g}, {"value", analytic_value(kind, g)}});
        }
      }
      write_csv(path("fig4.csv"), csv_meta("optimal multipliers of sqrt(V_i) for gamma in {0.2,0.5,0.8}"), cols);
    }
    return {{"files", {"fig1.csv", "fig2.csv", "fig3.csv", "fig4.csv"}},
            {"stationarity", stationarity_json(summary.stationarity)},
            {"values", values}};
  }

  RunConfig cfg_;
  std::string hash_;
  std::ostream& out_;
  std::vector<StabilizerTable> stabs_;
  std::optional<VarianceSimulator> sim_;
};

inline void print_error(std::ostream& err, const std::string& type, const std::string& message, json extra = {}) {
  json doc = {{"error", {{"type", type}, {"message", message}}}};
  if (!extra.is_null()) doc["error"].update(extra);
  err << doc.dump() << "\n";
}

/// Parses arguments and runs one subcommand.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Optimal investment under fake-stationary rough Heston volatility"};
  std::string sub;
  Overrides o;
  std::string seed_text, paths_text;
  app.add_option("subcommand", sub, "one of stabilizer, riccati, simulate, strategy, value, verify, all")
      ->required()
      ->check(CLI::IsMember(subcommands()));
  app.add_option("--config", o.config, "JSON configuration file");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--gamma", o.gamma, "risk aversion (replaces the configured list)");
  app.add_option("--paths", o.paths, "Monte Carlo paths");
  app.add_option("--steps", o.steps, "simulation time steps");
  app.add_option("--utility", o.utility, "power or exponential")->check(CLI::IsMember({"power", "exponential"}));
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage", e.what());
    return 2;
  }
  try {
    Runner runner(resolve_config(o), out);
    return runner.dispatch(sub);
  } catch (const ConfigError& e) {
    print_error(err, "config", e.what());
    return 2;
  } catch (const RiccatiBlowup& e) {
    print_error(err, "riccati_blowup", e.what(), {{"last_valid_time", e.last_valid_time}, {"t_max", e.t_max}});
    return 3;
  } catch (const std::exception& e) {
    print_error(err, "runtime", e.what());
    return 4;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace rvm::cli

#endif
