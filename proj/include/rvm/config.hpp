#ifndef RVM_CONFIG_HPP
#define RVM_CONFIG_HPP

// Run configuration: JSON in, validated structs out. Unknown keys are rejected
// and every error names the offending field.

#include "rvm/model.hpp"
#include "rvm/simulate.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace rvm {

inline constexpr const char* kVersion = "0.1.0";

struct GridConfig {
  int n_sim = 600;
  int n_riccati = 200;
};

struct McConfig {
  std::size_t paths = 10000;
  std::uint64_t seed = 42;
  int block_size = 256;
  V0Mode v0_mode = V0Mode::mean;
};

struct UtilityConfig {
  UtilityKind kind = UtilityKind::power;
  std::vector<double> gammas{0.2, 0.5, 0.8};
};

/// Thresholds used by the `verify` subcommand.
struct Tolerances {
  double value_se = 2.0;          ///< |MC - value| <= value_se SE + value_rel |value|
  double value_rel = 0.005;
  double profile_se = 3.0;        ///< max_k |mean J_k - mean J_0| / SE
  double stationarity_se = 3.0;
  double optimality_z = 3.0;      ///< Delta / paired SE
  double curvature_rel = 0.3;     ///< Delta/eps^2 within this fraction of its mean
  double stabilizer_rel = 5e-4;   ///< residual / (c lambda^2)
};

struct RunConfig {
  ModelParams model;
  GridConfig grids;
  McConfig mc;
  UtilityConfig utility;
  std::string output_dir = "out";
  Tolerances tol;

  SimOptions sim_options() const {
    SimOptions o;
    o.n_paths = mc.paths;
    o.seed = mc.seed;
    o.block_size = mc.block_size;
    o.v0_mode = mc.v0_mode;
    return o;
  }
  SimGrid sim_grid() const { return SimGrid(grids.n_sim, model.horizon); }

  void validate() const {
    model.validate();
    if (grids.n_sim < 1) throw ConfigError("grids.n_sim must be >= 1");
    if (grids.n_riccati < 2) throw ConfigError("grids.n_riccati must be >= 2");
    if (mc.paths < 2) throw ConfigError("mc.paths must be >= 2");
    if (mc.block_size < 1) throw ConfigError("mc.block_size must be >= 1");
    if (utility.gammas.empty()) throw ConfigError("utility.gamma must list at least one value");
    for (double g : utility.gammas) UtilitySpec{utility.kind, g}.validate();
    if (output_dir.empty()) throw ConfigError("outputs.directory must not be empty");
  }
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("unknown key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
    }
  }
}

template <class T>
void read(const json& obj, const std::string& key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

template <class T>
T require(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("missing required field " + where + "." + key);
  T v{};
  read(obj, key, where, v);
  return v;
}

inline AssetParams parse_asset(const json& a, const std::string& where) {
  reject_unknown(a, where, {"alpha", "lambda", "nu", "theta", "rho", "mu0", "c"});
  AssetParams p;
  p.alpha = require<double>(a, "alpha", where);
  p.lambda = require<double>(a, "lambda", where);
  p.nu = require<double>(a, "nu", where);
  p.theta = require<double>(a, "theta", where);
  p.rho = require<double>(a, "rho", where);
  p.mu0 = require<double>(a, "mu0", where);
  p.c = require<double>(a, "c", where);
  return p;
}

inline RateCurve parse_rate(const json& r) {
  if (r.is_number()) return RateCurve(r.get<double>());
  reject_unknown(r, "model.rate", {"knots", "rates"});
  const auto knots = require<std::vector<double>>(r, "knots", "model.rate");
  const auto rates = require<std::vector<double>>(r, "rates", "model.rate");
  return RateCurve(knots, rates);
}

inline json rate_to_json(const RateCurve& r) {
  if (r.rates().size() == 1) return r.rates().front();
  return json{{"knots", r.knots()}, {"rates", r.rates()}};
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& root) {
  using detail::read;
  using detail::reject_unknown;
  RunConfig cfg;
  reject_unknown(root, "", {"model", "grids", "mc", "utility", "outputs", "tolerances"});
  if (!root.contains("model")) throw ConfigError("missing required field model");
  const auto& m = root.at("model");
  reject_unknown(m, "model", {"horizon", "x0", "rate", "assets"});
  read(m, "horizon", "model", cfg.model.horizon);
  read(m, "x0", "model", cfg.model.x0);
  if (m.contains("rate")) cfg.model.rate = detail::parse_rate(m.at("rate"));
  if (!m.contains("assets") || !m.at("assets").is_array()) throw ConfigError("model.assets must be an array");
  for (std::size_t i = 0; i < m.at("assets").size(); ++i) {
    cfg.model.assets.push_back(detail::parse_asset(m.at("assets")[i], "model.assets[" + std::to_string(i) + "]"));
  }
  if (root.contains("grids")) {
    const auto& g = root.at("grids");
    reject_unknown(g, "grids", {"n_sim", "n_riccati"});
    read(g, "n_sim", "grids", cfg.grids.n_sim);
    read(g, "n_riccati", "grids", cfg.grids.n_riccati);
  }
  if (root.contains("mc")) {
    const auto& mc = root.at("mc");
    reject_unknown(mc, "mc", {"paths", "seed", "block_size", "v0"});
    read(mc, "paths", "mc", cfg.mc.paths);
    read(mc, "seed", "mc", cfg.mc.seed);
    read(mc, "block_size", "mc", cfg.mc.block_size);
    if (mc.contains("v0")) {
      const auto v0 = mc.at("v0").get<std::string>();
      if (v0 == "mean") {
        cfg.mc.v0_mode = V0Mode::mean;
      } else if (v0 == "gaussian") {
        cfg.mc.v0_mode = V0Mode::gaussian;
      } else {
        throw ConfigError("mc.v0 must be 'mean' or 'gaussian', got '" + v0 + "'");
      }
    }
  }
  if (root.contains("utility")) {
    const auto& u = root.at("utility");
    reject_unknown(u, "utility", {"kind", "gamma"});
    if (u.contains("kind")) cfg.utility.kind = parse_utility_kind(u.at("kind").get<std::string>());
    if (u.contains("gamma")) {
      const auto& g = u.at("gamma");
      if (g.is_number()) {
        cfg.utility.gammas = {g.get<double>()};
      } else {
        read(u, "gamma", "utility", cfg.utility.gammas);
      }
    }
  }
  if (root.contains("outputs")) {
    const auto& o = root.at("outputs");
    reject_unknown(o, "outputs", {"directory"});
    read(o, "directory", "outputs", cfg.output_dir);
  }
  if (root.contains("tolerances")) {
    const auto& t = root.at("tolerances");
    reject_unknown(t, "tolerances", {"value_se", "value_rel", "profile_se", "stationarity_se", "optimality_z",
                                     "curvature_rel", "stabilizer_rel"});
    read(t, "value_se", "tolerances", cfg.tol.value_se);
    read(t, "value_rel", "tolerances", cfg.tol.value_rel);
    read(t, "profile_se", "tolerances", cfg.tol.profile_se);
    read(t, "stationarity_se", "tolerances", cfg.tol.stationarity_se);
    read(t, "optimality_z", "tolerances", cfg.tol.optimality_z);
    read(t, "curvature_rel", "tolerances", cfg.tol.curvature_rel);
    read(t, "stabilizer_rel", "tolerances", cfg.tol.stabilizer_rel);
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(root);
}

/// The effective configuration (defaults filled in), with keys in sorted order.
inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json assets = nlohmann::json::array();
  for (const auto& a : cfg.model.assets) {
    assets.push_back({{"alpha", a.alpha}, {"lambda", a.lambda}, {"nu", a.nu}, {"theta", a.theta},
                      {"rho", a.rho}, {"mu0", a.mu0}, {"c", a.c}});
  }
  return {
      {"model",
       {{"horizon", cfg.model.horizon}, {"x0", cfg.model.x0}, {"rate", detail::rate_to_json(cfg.model.rate)},
        {"assets", assets}}},
      {"grids", {{"n_sim", cfg.grids.n_sim}, {"n_riccati", cfg.grids.n_riccati}}},
      {"mc",
       {{"paths", cfg.mc.paths}, {"seed", cfg.mc.seed}, {"block_size", cfg.mc.block_size},
        {"v0", cfg.mc.v0_mode == V0Mode::mean ? "mean" : "gaussian"}}},
      {"utility", {{"kind", to_string(cfg.utility.kind)}, {"gamma", cfg.utility.gammas}}},
      {"outputs", {{"directory", cfg.output_dir}}},
      {"tolerances",
       {{"value_se", cfg.tol.value_se}, {"value_rel", cfg.tol.value_rel}, {"profile_se", cfg.tol.profile_se},
        {"stationarity_se", cfg.tol.stationarity_se}, {"optimality_z", cfg.tol.optimality_z},
        {"curvature_rel", cfg.tol.curvature_rel}, {"stabilizer_rel", cfg.tol.stabilizer_rel}}},
  };
}

/// 64-bit FNV-1a hash of the effective configuration, as 16 hex digits.
/// The output directory is left out: it does not change any number.
inline std::string config_hash(const RunConfig& cfg) {
  auto j = config_to_json(cfg);
  j.erase("outputs");
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace rvm

#endif
