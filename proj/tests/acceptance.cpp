// Acceptance runner: one line per criterion. `--only E4` runs a single one.

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rdlab/lab.hpp"

namespace {

using namespace rdlab;

struct Criterion {
  const char* id;
  const char* what;
};

constexpr Criterion criteria[] = {
    {"E1", "flat metric is a fixed point"},
    {"E2", "DeTurck Ricci identity, second-order convergence"},
    {"E3", "curvature refinement, fourth-order ratio"},
    {"E4", "rough log-log data: monitors bounded, V positive, d vanishes at t=0"},
    {"E5", "L2 continuity constant stable under dt refinement"},
    {"E6", "Gronwall uniqueness for two mollifications"},
    {"E7", "pulled-back Ricci flow, Holder bound and anchor identity"},
    {"E8", "L^p Cauchy convergence of Ricci on a chart ball"},
    {"E9", "distance convergence toward the rough distance"},
    {"E10", "good slices within integral bound, control rejected"},
    {"E11", "ODE comparison, norm and integral-chain suites"},
    {"E12", "weak scalar curvature floor preserved"},
};

bool run_one(const Criterion& c, const std::filesystem::path& root, bool verbose) {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = false;
  std::string detail;
  try {
    auto cfg = ExperimentConfig::preset(c.id);
    cfg.set("output", (root / c.id).string());
    cfg.finalize();
    const auto r = lab::run(cfg);
    ok = r.pass();
    detail = lab::report(root / c.id);
  } catch (const std::exception& e) {
    detail = std::string("error: ") + e.what() + "\n";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s %-4s %s (%.1fs)\n", ok ? "PASS" : "FAIL", c.id, c.what, secs);
  if (verbose || !ok) std::cout << detail;
  std::cout.flush();
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rdlab acceptance criteria"};
  std::string only;
  std::string out = (std::filesystem::temp_directory_path() / "rdlab_acceptance").string();
  bool quiet = false;
  app.add_option("--only", only, "single criterion id, e.g. E4");
  app.add_option("--output", out, "root directory for run artifacts");
  app.add_flag("--quiet", quiet, "suppress check details for passing criteria");
  CLI11_PARSE(app, argc, argv);

  try {
    lab::apply_threads(lab::resolve_threads(0));
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return lab::config_error;
  }

  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && only != c.id) continue;
    ++ran;
    if (!run_one(c, out, !quiet)) ++failed;
  }
  if (ran == 0) {
    std::cerr << "unknown criterion '" << only << "'\n";
    return lab::config_error;
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed ? lab::assertion_failure : lab::pass;
}
