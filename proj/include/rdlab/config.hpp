#ifndef RDLAB_CONFIG_HPP
#define RDLAB_CONFIG_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rdlab/error.hpp"

namespace rdlab {

// ---------------------------------------------------------------------------
// experiment configuration

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = first + s.size();
  if (first != last && *first == '+') ++first;
  auto [p, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && p == last && std::isfinite(out);
}

inline bool parse_long(const std::string& s, long& out) {
  const char* first = s.data();
  const char* last = first + s.size();
  if (first != last && *first == '+') ++first;
  auto [p, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && p == last;
}

inline const KeyValues& common_defaults() {
  static const KeyValues d{
      {"experiment", ""},
      {"dim", "4"},
      {"points_per_axis", "16"},
      {"length", "1"},
      {"background", "flat"},
      {"background_eta", "0.2"},
      {"init", "constant"},
      {"init.cutoff", "0"},
      {"init.snapshot", ""},
      {"cfl", "0.2"},
      {"max_dt", "0.001"},
      {"integrator", "euler"},
      {"abort_factor", "400"},
      {"T", "0.0025"},
      {"K", "4"},
      {"monitor_r0", "0.125"},
      {"monitor_r1", "0.1875"},
      {"center_step", "2"},
      {"output", ""},
      {"seed", "1"},
      {"threads", "0"},
  };
  return d;
}

// initial-data parameters addressable as init.<name>
inline const std::set<std::string>& init_params() {
  static const std::set<std::string> s{
      "eps",  "r",    "c",    "eps0",   "eps1",     "eps2",      "eps3",   "r0",     "r1",
      "r2",   "r3",   "c0",   "c1",     "c2",       "c3",        "center", "cutoff_R", "cutoff_C",
      "sigma1", "sigma2", "amplitude", "mode", "scale", "diag0", "diag1", "diag2", "diag3"};
  return s;
}

inline const KeyValues loglog_preset() {
  return {{"init", "loglog"},         {"init.eps", "1"},     {"init.r", "1"},        {"mollify_scale", "0.0625"},
          {"cutoff_R", "0.2"},        {"cutoff_C", "2"}};
}

inline KeyValues merged(KeyValues a, const KeyValues& b) {
  for (const auto& [k, v] : b) a[k] = v;
  return a;
}

inline const std::map<std::string, KeyValues>& experiment_presets() {
  static const std::map<std::string, KeyValues> p{
      {"E1", {{"points_per_axis", "12"}, {"steps", "100"}}},
      {"E2", {{"init", "conformal"}, {"init.amplitude", "0.1"}, {"points_fine", "32"}}},
      {"E3", {{"init", "conformal"}, {"init.amplitude", "0.1"}, {"points_fine", "32"}}},
      {"E4", merged(loglog_preset(), {{"T", "0.0025"}, {"K", "10"}})},
      {"E5", merged(loglog_preset(), {{"T", "0.00125"}, {"K", "4"}, {"points_fine", "24"}})},
      {"E6", merged(loglog_preset(), {{"T", "0.00125"}, {"K", "4"}, {"mollify_scale", "0.125"},
                                      {"mollify_scale_b", "0.0625"}})},
      {"E7", {{"init", "conformal"}, {"init.amplitude", "0.05"}, {"points_fine", "32"}, {"intervals", "16"},
              {"dt_factor", "0.5"}, {"substeps", "4"}}},
      {"E8", {{"init", "conformal"}, {"init.amplitude", "0.1"}, {"T", "0.002"}, {"K", "4"},
              {"omega_radius", "0.25"}, {"substeps", "4"}}},
      {"E9", merged(loglog_preset(), {{"T", "0.0025"}, {"K", "6"}, {"probe_offset", "4"}, {"graph_k", "2"},
                                      {"d0_eps", "0.0625,0.03125,0.015625"}})},
      {"E10", {{"dim", "3"}, {"points_per_axis", "64"}, {"alphas", "1e-4,1e-6"}, {"slice_eps", "0.05"},
               {"modes", "4"}, {"control_excess", "3"}}},
      {"E11", {{"ensemble", "10000"}, {"spaces", "1000"}, {"space_points", "16"}, {"forcings", "100"},
               {"ode_eps", "0.5"}, {"ode_c", "2.5"}}},
      {"E12", {{"init", "conformal"}, {"init.amplitude", "0.1"}, {"points_fine", "32"}, {"T", "0.0002"},
               {"K", "3"}, {"floor", "-1"}, {"control_floor", "-2"}, {"rel_slack", "0.001"}}},
  };
  return p;
}

inline const std::set<std::string>& text_keys() {
  static const std::set<std::string> s{"experiment", "background", "init",  "init.snapshot",
                                       "integrator", "output",     "alphas", "d0_eps"};
  return s;
}

inline const std::set<std::string>& integer_keys() {
  static const std::set<std::string> s{"dim",       "points_per_axis", "points_fine", "K",        "steps",
                                       "seed",      "threads",         "center_step", "intervals", "substeps",
                                       "ensemble",  "spaces",          "space_points", "forcings", "probe_offset",
                                       "graph_k",   "modes",           "init.cutoff", "init.mode"};
  return s;
}

}  // namespace detail

/// Flat key=value configuration of one experiment, merged over the experiment's preset.
class ExperimentConfig {
 public:
  /// Lines are `key = value`; `#` starts a comment.
  static ExperimentConfig parse(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno), "expected key = value");
      c.given_[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
    return c;
  }

  static ExperimentConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse(os.str());
  }

  static ExperimentConfig preset(const std::string& id) {
    ExperimentConfig c;
    c.given_["experiment"] = id;
    c.finalize();
    return c;
  }

  /// Command-line override; takes effect at finalize().
  void set(const std::string& key, const std::string& value) {
    given_[key] = value;
    final_ = false;
  }

  /// Merges preset defaults under the given keys and validates everything.
  void finalize() {
    auto it = given_.find("experiment");
    if (it == given_.end() || it->second.empty()) throw ConfigError("experiment", "missing experiment id");
    const auto& presets = detail::experiment_presets();
    auto pre = presets.find(it->second);
    if (pre == presets.end()) throw ConfigError("experiment", "unknown experiment id '" + it->second + "'");
    values_ = detail::merged(detail::common_defaults(), pre->second);
    for (const auto& [k, v] : given_) {
      const bool init_param = k.rfind("init.", 0) == 0 && detail::init_params().count(k.substr(5));
      if (!values_.count(k) && !init_param) throw ConfigError(k, "unknown key");
      values_[k] = v;
    }
    if (values_["output"].empty()) values_["output"] = "runs/" + it->second;
    final_ = true;
    validate();
  }

  const std::string& id() const { return at("experiment"); }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const std::string& str(const std::string& key) const { return at(key); }

  double num(const std::string& key) const {
    double v;
    if (!detail::parse_double(at(key), v)) throw ConfigError(key, "not a number: '" + at(key) + "'");
    return v;
  }

  long integer(const std::string& key) const {
    long v;
    if (!detail::parse_long(at(key), v)) throw ConfigError(key, "not an integer: '" + at(key) + "'");
    return v;
  }

  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    std::istringstream in(at(key));
    std::string item;
    while (std::getline(in, item, ',')) {
      double v;
      if (!detail::parse_double(detail::trim(item), v)) throw ConfigError(key, "bad list entry '" + item + "'");
      out.push_back(v);
    }
    if (out.empty()) throw ConfigError(key, "empty list");
    return out;
  }

  /// Initial-data parameters (init.<name>, numeric).
  std::map<std::string, double> init_params() const {
    std::map<std::string, double> out;
    for (const auto& [k, v] : values_)
      if (k.rfind("init.", 0) == 0 && detail::init_params().count(k.substr(5))) out[k.substr(5)] = num(k);
    return out;
  }

  const KeyValues& values() const { return values_; }

  /// Sorted key=value text, one per line.
  std::string canonical() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
    return s;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }

 private:
  const std::string& at(const std::string& key) const {
    if (!final_) throw ConfigError(key, "configuration not finalized");
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(key, "key not defined for this experiment");
    return it->second;
  }

  void validate() const {
    for (const auto& [k, v] : values_) {
      if (detail::text_keys().count(k)) continue;
      if (detail::integer_keys().count(k))
        integer(k);
      else
        num(k);
    }
    const long dim = integer("dim");
    if (dim != 3 && dim != 4) throw ConfigError("dim", "must be 3 or 4");
    for (const char* k : {"points_per_axis", "points_fine"}) {
      if (!has(k)) continue;
      const long n = integer(k);
      if (n < 8 || n % 2 != 0) throw ConfigError(k, "must be even and >= 8, got " + std::to_string(n));
    }
    if (!(num("length") > 0.0)) throw ConfigError("length", "must be > 0");
    if (str("background") != "flat" && str("background") != "bump")
      throw ConfigError("background", "must be flat or bump");
    if (str("integrator") != "euler" && str("integrator") != "rk4")
      throw ConfigError("integrator", "must be euler or rk4");
    const double cfl = num("cfl");
    if (!(cfl > 0.0 && cfl <= 1.0)) throw ConfigError("cfl", "must be in (0, 1]");
    if (!(num("max_dt") > 0.0)) throw ConfigError("max_dt", "must be > 0");
    if (!(num("T") > 0.0)) throw ConfigError("T", "must be > 0");
    if (integer("K") < 1) throw ConfigError("K", "must be >= 1");
    if (integer("seed") < 0) throw ConfigError("seed", "must be >= 0");
    if (integer("threads") < 0) throw ConfigError("threads", "must be >= 0");
    if (integer("center_step") < 1) throw ConfigError("center_step", "must be >= 1");
    if (!(num("monitor_r0") > 0.0 && num("monitor_r0") < num("monitor_r1")))
      throw ConfigError("monitor_r0", "need 0 < monitor_r0 < monitor_r1");
    static const std::set<std::string> kinds{"loglog", "torus_bump", "conformal", "constant", "custom_snapshot"};
    if (!kinds.count(str("init"))) throw ConfigError("init", "unknown initial-data kind '" + str("init") + "'");
    if (str("init") == "custom_snapshot" && str("init.snapshot").empty())
      throw ConfigError("init.snapshot", "custom_snapshot needs a path");
    for (const char* k : {"alphas", "d0_eps"})
      if (has(k)) list(k);
  }

  KeyValues given_;
  KeyValues values_;
  bool final_ = false;
};

// ---------------------------------------------------------------------------
// results

struct Check {
  std::string name;
  double value = 0.0;
  std::string relation;  // "<=", ">=", "in", "==", "is"
  double lo = 0.0;       // threshold (lower end for "in")
  double hi = 0.0;       // upper end for "in"
  bool pass = false;
};

struct ExperimentResult {
  std::string id;
  std::vector<Check> checks;
  nlohmann::ordered_json constants = nlohmann::ordered_json::object();
  std::vector<std::string> artifacts;

  bool pass() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }

  void at_most(const std::string& name, double v, double threshold) {
    checks.push_back({name, v, "<=", threshold, threshold, v <= threshold});
  }
  void at_least(const std::string& name, double v, double threshold) {
    checks.push_back({name, v, ">=", threshold, threshold, v >= threshold});
  }
  void greater(const std::string& name, double v, double threshold) {
    checks.push_back({name, v, ">", threshold, threshold, v > threshold});
  }
  void within(const std::string& name, double v, double lo, double hi) {
    checks.push_back({name, v, "in", lo, hi, v >= lo && v <= hi});
  }
  void holds(const std::string& name, bool ok) {
    checks.push_back({name, ok ? 1.0 : 0.0, "is", 1.0, 1.0, ok});
  }
};

}  // namespace rdlab

#endif  // RDLAB_CONFIG_HPP
