#ifndef RDLAB_LAB_HPP
#define RDLAB_LAB_HPP

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>
#include <omp.h>

#include "rdlab/config.hpp"
#include "rdlab/experiments.hpp"

namespace rdlab::lab {

enum ExitCode : int { pass = 0, assertion_failure = 1, config_error = 2, runtime_error = 3 };

/// LAB_THREADS wins over the flag; 0 keeps the OpenMP default (all cores).
inline int resolve_threads(int flag) {
  if (const char* env = std::getenv("LAB_THREADS"); env && *env) {
    long v;
    if (!rdlab::detail::parse_long(env, v) || v < 0) throw ConfigError("LAB_THREADS", "must be a non-negative integer");
    return static_cast<int>(v);
  }
  return flag;
}

inline void apply_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

inline std::string checks_csv(const ExperimentResult& r) {
  std::ostringstream os;
  os.precision(17);
  os << "name,value,relation,lo,hi,pass\n";
  for (const auto& c : r.checks)
    os << c.name << ',' << c.value << ',' << c.relation << ',' << c.lo << ',' << c.hi << ',' << (c.pass ? 1 : 0)
       << '\n';
  return os.str();
}

inline nlohmann::ordered_json summary_json(const ExperimentConfig& cfg, const ExperimentResult& r) {
  nlohmann::ordered_json j;
  j["experiment"] = r.id;
  j["pass"] = r.pass();
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const auto& c : r.checks) {
    nlohmann::ordered_json e;
    e["name"] = c.name;
    e["value"] = c.value;
    e["relation"] = c.relation;
    if (c.relation == "in") {
      e["lo"] = c.lo;
      e["hi"] = c.hi;
    } else {
      e["threshold"] = c.lo;
    }
    e["pass"] = c.pass;
    checks.push_back(e);
  }
  j["checks"] = checks;
  j["constants"] = r.constants;
  j["artifacts"] = r.artifacts;
  j["config"] = cfg.to_json();
  return j;
}

/// Runs the configured experiment; artifacts go to cfg `output`. The configuration must be finalized.
inline ExperimentResult run(const ExperimentConfig& cfg) {
  const std::filesystem::path dir = cfg.str("output");
  ExperimentResult r;
  try {
    r = cfg.integer("dim") == 3 ? run_experiment<3>(cfg, dir) : run_experiment<4>(cfg, dir);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(cfg.id() + ": " + e.what());
  }
  write_text_atomic(dir / "config.txt", cfg.canonical());
  write_text_atomic(dir / "checks.csv", checks_csv(r));
  write_text_atomic(dir / "summary.json", summary_json(cfg, r).dump(2) + "\n");
  return r;
}

/// Human-readable summary of a completed run directory. Numbers are printed exactly as stored.
inline std::string report(const std::filesystem::path& dir) {
  const auto path = dir / "summary.json";
  std::ifstream in(path);
  if (!in) throw MissingArtifacts("no summary.json in " + dir.string());
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("unreadable summary.json: " + std::string(e.what()));
  }
  for (const char* key : {"experiment", "pass", "checks", "constants"})
    if (!j.contains(key)) throw MissingArtifacts(std::string("summary.json lacks '") + key + "'");
  for (const auto& a : j.value("artifacts", nlohmann::ordered_json::array()))
    if (!std::filesystem::exists(dir / a.get<std::string>()))
      throw MissingArtifacts("artifact listed but missing: " + a.get<std::string>());

  std::ostringstream os;
  os << "experiment " << j["experiment"].get<std::string>() << ": " << (j["pass"].get<bool>() ? "PASS" : "FAIL")
     << "\n";
  os << "checks:\n";
  for (const auto& c : j["checks"]) {
    os << "  " << (c["pass"].get<bool>() ? "PASS" : "FAIL") << "  " << c["name"].get<std::string>() << " = "
       << c["value"].dump();
    const auto rel = c["relation"].get<std::string>();
    if (rel == "in")
      os << " in [" << c["lo"].dump() << ", " << c["hi"].dump() << "]";
    else if (rel != "is")
      os << " " << rel << " " << c["threshold"].dump();
    os << "\n";
  }
  os << "constants:\n";
  for (const auto& [k, v] : j["constants"].items()) os << "  " << k << " = " << v.dump() << "\n";
  return os.str();
}

}  // namespace rdlab::lab

#endif  // RDLAB_LAB_HPP
