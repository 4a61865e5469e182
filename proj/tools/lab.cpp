// lab: experiment runner, run reports and initial-data generation.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rdlab/lab.hpp"

namespace {

using namespace rdlab;

// `--key value` and `--key=value` pairs left over after CLI11 parsing
void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const auto& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3) throw ConfigError(a, "expected --key value");
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      cfg.set(a.substr(2, eq - 2), a.substr(eq + 1));
      continue;
    }
    if (i + 1 >= extras.size()) throw ConfigError(a.substr(2), "missing value");
    cfg.set(a.substr(2), extras[++i]);
  }
}

template <int Dim>
void generate(const RoughMetricSpec& spec, int n, double length, const std::string& out) {
  GridSpec<Dim> grid(n, length);
  auto bg = BackgroundGeometry<Dim>::make_flat(grid);
  const auto g = generate_metric<Dim>(spec, grid, bg);
  write_snapshot(out, g.g);
  nlohmann::ordered_json j;
  j["kind"] = spec.kind;
  j["dim"] = Dim;
  j["points_per_axis"] = n;
  j["a"] = g.a;
  j["output"] = out;
  std::cout << j.dump() << "\n";
}

int run_command(const std::string& config_path, const std::vector<std::string>& extras) {
  auto cfg = ExperimentConfig::load(config_path);
  apply_overrides(cfg, extras);
  cfg.finalize();
  lab::apply_threads(lab::resolve_threads(static_cast<int>(cfg.integer("threads"))));
  const auto r = lab::run(cfg);
  std::cout << lab::report(cfg.str("output"));
  return r.pass() ? lab::pass : lab::assertion_failure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rdlab experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "run an experiment; extra --key value pairs override the config");
  run->add_option("config", config_path, "key=value config file")->required();
  run->allow_extras();

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "summarize a completed run directory");
  rep->add_option("dir", report_dir, "run directory")->required();

  std::string kind, out = "g0.tfs";
  std::vector<std::string> params;
  int dim = 4, n = 16;
  double length = 1.0;
  bool cutoff = false;
  std::string snapshot;
  auto* gen = app.add_subcommand("gen", "write an initial-data snapshot");
  gen->add_option("kind", kind, "initial-data kind")
      ->required()
      ->check(CLI::IsMember({"loglog", "torus_bump", "conformal", "constant", "custom_snapshot"}));
  gen->add_option("params", params, "name=value preset parameters");
  gen->add_option("--dim", dim, "3 or 4")->check(CLI::IsMember({3, 4}));
  gen->add_option("--points_per_axis", n, "even, >= 8");
  gen->add_option("--length", length, "torus side");
  gen->add_option("--output", out, ".tfs path");
  gen->add_option("--snapshot", snapshot, "source for custom_snapshot");
  gen->add_flag("--cutoff", cutoff, "blend into the background with the cutoff");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lab::config_error;
  }

  try {
    if (*run) return run_command(config_path, run->remaining());
    if (*rep) {
      std::cout << lab::report(report_dir);
      return lab::pass;
    }
    if (n < 8 || n % 2) throw ConfigError("points_per_axis", "must be even and >= 8");
    RoughMetricSpec spec;
    spec.kind = kind;
    spec.use_cutoff = cutoff;
    spec.snapshot_path = snapshot;
    for (const auto& p : params) {
      const auto eq = p.find('=');
      double v;
      if (eq == std::string::npos || !rdlab::detail::parse_double(p.substr(eq + 1), v))
        throw ConfigError(p, "expected name=number");
      spec.params[p.substr(0, eq)] = v;
    }
    if (dim == 3)
      generate<3>(spec, n, length, out);
    else
      generate<4>(spec, n, length, out);
    return lab::pass;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return lab::config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lab::runtime_error;
  }
}
