#ifndef RDLAB_EXPERIMENTS_HPP
#define RDLAB_EXPERIMENTS_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rdlab/analysis.hpp"
#include "rdlab/config.hpp"
#include "rdlab/curvature.hpp"
#include "rdlab/deturck.hpp"
#include "rdlab/diffeo.hpp"
#include "rdlab/distance.hpp"
#include "rdlab/initial_data.hpp"
#include "rdlab/monitors.hpp"
#include "rdlab/snapshot.hpp"

namespace rdlab {

/// Pass thresholds of the acceptance experiments.
namespace tolerances {
inline constexpr double flat_rhs = 1e-12;
inline constexpr double flat_drift = 1e-10;
inline constexpr double second_order_lo = 3.0;
inline constexpr double second_order_hi = 6.0;
inline constexpr double fourth_order_min = 10.0;
inline constexpr double energy_growth = 2.0;
inline constexpr double v_dt_stability = 0.20;
inline constexpr double d_noise_factor = 2.0;
inline constexpr double l2_refinement = 0.25;
inline constexpr double gronwall_factor = 4.0;
inline constexpr double holder_stability = 0.30;
inline constexpr double anchor_identity = 1e-10;
inline constexpr double lp_dt_stability = 0.30;
inline constexpr double distance_bracket = 0.05;
inline constexpr double ode_rel = 1e-6;
inline constexpr double ode_closed_form = 1e-10;
inline constexpr double appendix_ratio = 1e-10;
inline constexpr double floor_refinement = 1.3;
inline constexpr double floor_constant_min = 1e-6;
}  // namespace tolerances

/// Writes run artifacts into one directory and records their names.
class ArtifactDir {
 public:
  ArtifactDir(std::filesystem::path dir, ExperimentResult& r) : dir_(std::move(dir)), r_(r) {
    std::filesystem::create_directories(dir_);
  }

  void text(const std::string& name, const std::string& content) {
    write_text_atomic(dir_ / name, content);
    r_.artifacts.push_back(name);
  }

  template <int Dim>
  void snapshot(const std::string& name, const Field<Dim>& f) {
    write_snapshot(dir_ / name, f);
    r_.artifacts.push_back(name);
  }

  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
  ExperimentResult& r_;
};

namespace experiments {

namespace detail {

template <int Dim>
struct Setup {
  GridSpec<Dim> grid;
  BackgroundGeometry<Dim> bg;
  MetricField<Dim> g0;
  double a0 = 1.0;
};

template <int Dim>
BackgroundGeometry<Dim> background(const ExperimentConfig& c, const GridSpec<Dim>& grid) {
  if (c.str("background") == "bump") return BackgroundGeometry<Dim>::make_bump(grid, c.num("background_eta"));
  return BackgroundGeometry<Dim>::make_flat(grid);
}

inline RoughMetricSpec rough_spec(const ExperimentConfig& c) {
  RoughMetricSpec s;
  s.kind = c.str("init");
  s.params = c.init_params();
  s.snapshot_path = c.str("init.snapshot");
  s.use_cutoff = c.integer("init.cutoff") != 0;
  return s;
}

template <int Dim>
CutoffSpec<Dim> cutoff(const ExperimentConfig& c) {
  const auto p = c.init_params();
  const double center = p.count("center") ? p.at("center") : 0.5 * c.num("length");
  return CutoffSpec<Dim>{Vec<Dim>::Constant(center), c.num("cutoff_R"), c.num("cutoff_C")};
}

/// Grid, background and initial metric (mollified and blended when the preset asks for it).
template <int Dim>
Setup<Dim> setup(const ExperimentConfig& c, int n, bool allow_mollify = true) {
  GridSpec<Dim> grid(n, c.num("length"));
  auto bg = background<Dim>(c, grid);
  auto g0 = generate_metric<Dim>(rough_spec(c), grid, bg).g;
  if (allow_mollify && c.has("mollify_scale") && c.num("mollify_scale") > 0.0)
    g0 = mollify_blend(g0, c.num("mollify_scale"), cutoff<Dim>(c), bg);
  const double a0 = two_sided_bound(g0, bg);
  return Setup<Dim>{grid, std::move(bg), std::move(g0), a0};
}

inline StepperConfig stepper(const ExperimentConfig& c, double a0) {
  StepperConfig s;
  s.cfl = c.num("cfl");
  s.max_dt = c.num("max_dt");
  s.integrator = c.str("integrator") == "rk4" ? Integrator::rk4 : Integrator::euler;
  s.abort_a = c.num("abort_factor") * a0;
  return s;
}

template <int Dim>
std::vector<Snapshot<Dim>> flow(const Setup<Dim>& s, const std::vector<double>& schedule, const StepperConfig& cfg) {
  auto res = evolve(s.g0, s.bg, schedule, cfg);
  if (res.failure) std::rethrow_exception(res.failure);
  return std::move(res.trajectory);
}

template <int Dim>
double max_abs(const Field<Dim>& f) {
  double m = 0.0;
  for (double v : f.raw()) m = std::max(m, std::abs(v));
  return m;
}

template <int Dim>
ConformalProfile<Dim> conformal_profile(const ExperimentConfig& c) {
  if (c.str("init") != "conformal") throw ConfigError("init", "experiment " + c.id() + " needs init = conformal");
  const auto p = c.init_params();
  ConformalProfile<Dim> prof;
  if (p.count("amplitude")) prof.amplitude = p.at("amplitude");
  if (p.count("mode")) prof.mode = static_cast<int>(p.at("mode"));
  prof.length = c.num("length");
  return prof;
}

/// max |RHS + 2 Rc - L_W g| with W = -V, curvature and Lie derivative at second order.
template <int Dim>
double deturck_identity_residual(const MetricField<Dim>& g, const BackgroundGeometry<Dim>& bg) {
  const auto rhs = deturck_rhs(g, bg);
  const auto ric = riemann_ricci_scalar(g, {FdOrder::second, false}).ricci;
  const auto W = deturck_vector_field(g, bg, FdOrder::second, -1.0);
  const auto lie = lie_derivative(W, g, FdOrder::second);
  double err = 0.0;
  for (std::size_t i = 0; i < rhs.raw().size(); ++i)
    err = std::max(err, std::abs(rhs.raw()[i] + 2.0 * ric.raw()[i] - lie.raw()[i]));
  return err;
}

/// Aitken limit of x(4t), x(2t), x(t); falls back to x(t) when the second difference vanishes.
inline double aitken(double x0, double x1, double x2) {
  const double den = x2 - 2.0 * x1 + x0;
  if (!(std::abs(den) > 1e-300)) return x2;
  return x2 - (x2 - x1) * (x2 - x1) / den;
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <int Dim>
MultiIndex<Dim> center_node(const GridSpec<Dim>& grid) {
  MultiIndex<Dim> m{};
  m.fill(grid.n / 2);
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// E1 flat fixed point

template <int Dim>
void flat_fixed_point(const ExperimentConfig& c, ArtifactDir& out, ExperimentResult& r) {
  using namespace detail;
  auto s = setup<Dim>(c, static_cast<int>(c.integer("points_per_axis")));
  const double rhs = max_abs(deturck_rhs(s.g0, s.bg));
  const auto cfg = stepper(c, s.a0);
  FlowState<Dim> st{s.g0};
  st.a_seen = s.a0;
  const long steps = c.integer("steps");
  std::string csv = "step,t,max_change\n";
  for (long i = 1; i <= steps; ++i) {
    st = step(st, cfg, s.bg);
    if (i % 10 == 0 || i == steps) csv += std::to_string(i) + "," + fmt(st.t) + "," + fmt(max_abs(st.g - s.g0)) + "\n";
  }
  const double drift = max_abs(st.g - s.g0);
  out.text("steps.csv", csv);
  out.snapshot("g_final.tfs", st.g);
  r.at_most("max_rhs", rhs, tolerances::flat_rhs);
  r.at_most("max_change_after_steps", drift, tolerances::flat_drift);
  r.constants["steps"] = steps;
  r.constants["t_final"] = st.t;
  r.constants["max_rhs"] = rhs;
  r.constants["max_change"] = drift;
}

// ---------------------------------------------------------------------------
// E2 DeTurck identity, E3 curvature convergence

template <int Dim>
void deturck_identity(const ExperimentConfig& c, ArtifactDir& out, ExperimentResult& r) {
  using namespace detail;
  std::string csv = "points_per_axis,residual\n";
  std::vector<double> res;
  for (const char* key : {"points_per_axis", "points_fine"}) {
    const int n = static_cast<int>(c.integer(key));
    auto s = setup<Dim>(c, n);
    res.push_back(deturck_identity_residual(s.g0, s.bg));
    csv += std::to_string(n) + "," + fmt(res.back()) + "\n";
  }
  out.text("refinement.csv", csv);
  const double ratio = res[0] / res[1];
  r.within("residual_refinement_ratio", ratio, tolerances::second_order_lo, tolerances::second_order_hi);
  r.constants["residual_coarse"] = res[0];
  r.constants["residual_fine"] = res[1];
  r.constants["ratio"] = ratio;
}

template <int Dim>
void curvature_convergence(const ExperimentConfig& c, ArtifactDir& out, ExperimentResult& r) {
  using namespace detail;
  const auto prof = conformal_profile<Dim>(c);
  const auto p = c.init_params();
  const double scale = p.count("scale") ? p.at("scale") : 1.0;
  std::string csv = "points_per_axis,max_error\n";
  std::vector<double> err;
  for (const char* key : {"points_per_axis", "points_fine"}) {
    const int n = static_cast<int>(c.integer(key));
    GridSpec<Dim> grid(n, c.num("length"));
    const auto R = scalar_curvature(conformal_metric(grid, prof, scale), FdOrder::fourth);
    double e = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
      e = std::max(e, std::abs(R(0, i) - prof.scalar_curvature(grid.position(i), scale)));
    err.push_back(e);
    csv += std::to_string(n) + "," + fmt(e) + "\n";
  }
  out.text("refinement.csv", csv);
  const double ratio = err[0] / err[1];
  r.at_least("error_refinement_ratio", ratio, tolerances::fourth_order_min);
  r.constants["error_coarse"] = err[0];
  r.constants["error_fine"] = err[1];
  r.constants["ratio"] = ratio;
}

// ---------------------------------------------------------------------------
// E4 rough-data monitors

template <int Dim>
void rough_monitors(const ExperimentConfig& c, ArtifactDir& out, ExperimentResult& r) {
  using namespace detail;
  auto s = setup<Dim>(c, static_cast<int>(c.integer("points_per_axis")));
  const auto sched = geometric_schedule(c.num("T"), static_cast<int>(c.integer("K")));
  const MonitorConfig mc{c.num("monitor_r0"), c.num("monitor_r1"), static_cast<int>(c.integer("center_step"))};
  auto cfg = stepper(c, s.a0);

  auto run = [&](const StepperConfig& sc, bool& completed, double& a_max) {
    auto res = evolve(s.g0, s.bg, sched, sc);
    completed = !res.failure;
    a_max = res.a0;
    for (const auto& rec : res.records) a_max = std::max(a_max, rec.a);
    a_max = std::max(a_max, res.final_state.a_seen);
    return res;
  };

  bool completed = false, completed_half = false;
  double a_max = 0.0, a_max_half = 0.0;
  auto res = run(cfg, completed, a_max);
  auto rep = monitor_bcdef(res.trajectory, s.g0, s.bg, mc);
  auto half = cfg;
  half.cfl *= 0.5;
  auto res_half = run(half, completed_half, a_max_half);
  auto rep_half = monitor_bcdef(res_half.trajectory, s.g0, s.bg, mc);

  r.holds("a_run_completed", completed && completed_half);
  r.at_most("a_max_over_a0", std::max(a_max, a_max_half) / s.a0, c.num("abort_factor"));

  const double b0 = rep.rows.front().b;
  double b_max = b0;
  for (const auto& row : rep.rows) b_max = std::max(b_max, row.b);
  r.at_most("b_max_over_b0", b_max / b0, tolerances::energy_growth);

  r.greater("V", rep.V, 0.0);
  const double v_rel = std::abs(rep_half.V - rep.V) / std::abs(rep.V);
  r.at_most("V_relative_change_half_dt", v_rel, tolerances::v_dt_stability);

  // d along positive sample times, increasing t
  std::vector<const MonitorRow*> pos;
  for (const auto& row : rep.rows)
    if (row.t > 0.0) pos.push_back(&row);
  long violations = 0;
  for (std::size_t i = 1; i < pos.size(); ++i)
    if (!(pos[i]->d > pos[i - 1]->d)) ++violations;
  r.at_most("d_monotone_violations", static_cast<double>(violations), 0.0);

  double limit = pos.empty() ? 0.0 : pos.front()->d;
  if (pos.size() >= 3) limit = aitken(pos[2]->d, pos[1]->d, pos[0]->d);
  // noise floor of d at the smallest time: center net and time step resampling
  double noise = 0.0;
  if (!pos.empty()) {
    const std::size_t k1 = 1;
    std::vector<Snapshot<Dim>> tiny{res.trajectory[k1]};
    MonitorConfig dense = mc;
    dense.center_step = 1;
    const double d_dense = monitor_bcdef(tiny, s.g0, s.bg, dense).rows.front().d;
    noise = std::max(std::abs(d_dense - pos.front()->d), std::abs(rep_half.rows[k1].d - pos.front()->d));
  }
  const double noise_floor = std::max(noise, 1e-14 * std::max(1.0, pos.empty() ? 0.0 : pos.back()->d));
  r.at_most("d_limit_over_noise", std::abs(limit) / noise_floor, tolerances::d_noise_factor);
  r.holds("e1_decreasing_toward_zero", rep.trend_decreasing[0]);

  out.text("monitors.csv", rep.to_csv());
  out.text("monitors_half_dt.csv", rep_half.to_csv());
  out.snapshot("g_final.tfs", res.trajectory.back().g);

  r.constants["a0"] = s.a0;
  r.constants["a_max"] = std::max(a_max, a_max_half);
  r.constants["b0"] = b0;
  r.constants["b_max"] = b_max;
  r.constants["V"] = rep.V;
  r.constants["V_half_dt"] = rep_half.V;
  r.constants["V_slope"] = rep.V_slope;
  r.constants["c_trend_slope"] = rep.trend_slope;
  r.constants["c_trend_decreasing"] = rep.trend_decreasing;
  r.constants["d_limit"] = limit;
  r.constants["d_noise"] = noise;
  r.constants["T"] = c.num("T");
}

// ---------------------------------------------------------------------------
// E5 L^2 continuity, E6 Gronwall uniqueness

template <int Dim>
void l2_continuity(const ExperimentConfig& c, ArtifactDir& out, ExperimentResult& r) {
  using namespace detail;
  const auto sched = geometric_schedule(c.num("T"), static_cast<int>(c.integer("K")));
  std::string csv = "points_per_axis,B,B_inverse,a\n";
  std::vector<L2Continuity> rows;
  for (const char* key : {"points_per_axis", "points_fine"}) {
    const int n = static_cast<int>(c.integer(key));
    auto s = setup<Dim>(c, n);
    auto traj = flow(s, sched, stepper(c, s.a0));
    rows.push_back(l2_continuity_check(traj, s.bg, c.num("monitor_r0"), static_cast<int>(c.integer("center_step"))));
    csv += std::to_string(n) + "," + fmt(rows.back().B) + "," + fmt(rows.back().B_inv) + "," + fmt(rows.back().a) + "\n";
  }
  out.text("l2_continuity.csv", csv);
  const double rel = std::abs(rows[1].B - rows[0].B) / rows[0].B;
  r.holds("B_finite", std::isfinite(rows[0].B) && std::isfinite(rows[1].B) && rows[0].B > 0.0);
  r.at_most("B_relative_change_refined", rel, tolerances::l2_refinement);
  r.constants["B"] = rows[0].B;
  r.constants["B_fine"] = rows[1].B;
  r.constants["B_inverse"] = rows[0].B_inv;
  r.constants["B_inverse_fine"] = rows[1].B_inv;
  r.constants["a"] = rows[0].a;
}

template <int Dim>
void gronwall_uniqueness(const ExperimentConfig& c, ArtifactDir& out, ExperimentResult& r) {
  using namespace detail;
  auto s = setup<Dim>(c, static_cast<int>(c.integer("points_per_axis")), false);
  const auto sched = geometric_schedule(c.num("T"), static_cast<int>(c.integer("K")));
  auto cfg = stepper(c, 1.0);
  cfg.abort_a = 0.0;
  const auto rep = gronwall_uniqueness_check(s.g0, s.bg, c.num("mollify_scale"), c.num("mollify_scale_b"),
                                             cutoff<Dim>(c), sched, cfg, c.num("monitor_r0"),
                                             static_cast<int>(c.integer("center_step")));
  std::string csv = "t,D,amplification\n";
  for (std::size_t i = 0; i < rep.t.size(); ++i)
    csv += fmt(rep.t[i]) + "," + fmt(rep.D[i]) + "," + fmt(rep.amplification[i]) + "\n";
  out.text("gronwall.csv", csv);
  r.at_most("amplification", rep.final_amplification(), tolerances::gronwall_factor);
  r.constants["D0"] = rep.D.front();
  r.constants["D_final"] = rep.D.back();
  r.constants["amplification"] = rep.final_amplification();
}

// ---------------------------------------------------------------------------
// E7 Ricci pullback, E8 Ricci L^p estimates

template <int Dim>
void ricci_pullback(const ExperimentConfig& c, ArtifactDir& out, ExperimentResult& r) {
  using namespace detail;
  const int intervals = static_cast<int>(c.integer("intervals"));
  if (intervals < 4 || intervals % 2) throw ConfigError("intervals", "must be even and >= 4");
  const int substeps = static_cast<int>(c.integer("substeps"));
  const std::size_t anchor = static_cast<std::size_t>(intervals / 2);

  double dt = 0.0;
  std::vector<double> times;
  std::vector<double> residual, holder, defect;
  std::string csv = "points_per_axis,t,residual\n";
  for (const char* key : {"points_per_axis", "points_fine"}) {
    const int n = static_cast<int>(c.integer(key));
    auto s = setup<Dim>(c, n);
    const auto cfg = stepper(c, s.a0);
    if (times.empty()) {
      dt = c.num("dt_factor") * cfl_dt(s.g0, cfg);
      for (int k = 0; k <= intervals; ++k) times.push_back(k * dt);
    }
    auto traj = flow(s, times, cfg);
    const auto d = integrate_diffeo(traj, s.bg, traj[anchor].t, DiffeoConfig{substeps, {traj[anchor].t}});
    const auto ps = pullback_series(traj, d);
    const auto res = ricci_flow_residual(ps, intervals / 4, 3 * intervals / 4);
    for (std::size_t i = 0; i < res.times.size(); ++i)
      csv += std::to_string(n) + "," + fmt(res.times[i]) + "," + fmt(res.residual[i]) + "\n";
    residual.push_back(res.max);
    holder.push_back(holder_ratio(d, s.bg));
    defect.push_back(isometry_identity_check(traj[anchor].g, s.bg, ps.ell[anchor], d, anchor));
  }
  out.text("residual.csv", csv);
  const double ratio = residual[0] / residual[1];
  r.within("residual_refinement_ratio", ratio, tolerances::second_order_lo, tolerances::second_order_hi);
  r.holds("holder_finite", std::isfinite(holder[0]) && std::isfinite(holder[1]) && holder[0] > 0.0);
  r.at_most("holder_relative_change_refined", std::abs(holder[1] / holder[0] - 1.0), tolerances::holder_stability);
  r.at_most("anchor_identity_defect", std::max(defect[0], defect[1]), tolerances::anchor_identity);
  r.constants["dt_sample"] = dt;
  r.constants["residual_coarse"] = residual[0];
  r.constants["residual_fine"] = residual[1];
  r.constants["ratio"] = ratio;
  r.constants["holder_coarse"] = holder[0];
  r.constants["holder_fine"] = holder[1];
  r.constants["anchor_defect"] = std::max(defect[0], defect[1]);
}

template <int Dim>
void ricci_lp(const ExperimentConfig& c, ArtifactDir& out, ExperimentResult& r) {
  using namespace detail;
  const double T = c.num("T");
  const auto sched = geometric_schedule(T, static_cast<int>(c.integer("K")));
  const std::vector<double> ladder(sched.begin() + 1, sched.end());
  const std::size_t anchor = sched.size() - 2;  // T/2
  const std::vector<double> ps_list{2.0, 4.0};
  std::vector<std::vector<LpReport>> reps;  // [run][p]
  for (double f : {1.0, 0.5}) {
    auto s = setup<Dim>(c, static_cast<int>(c.integer("points_per_axis")));
    auto cfg = stepper(c, s.a0);
    cfg.cfl *= f;
    cfg.max_dt *= f;
    auto traj = flow(s, sched, cfg);
    const auto d = integrate_diffeo(traj, s.bg, traj[anchor].t,
                                    DiffeoConfig{static_cast<int>(c.integer("substeps")), {traj[anchor].t}});
    const auto ps = pullback_series(traj, d);
    const auto omega =
        chart_ball<Dim>(d.tracking, Vec<Dim>::Constant(0.5 * c.num("length")), c.num("omega_radius"));
    std::vector<LpReport> row;
    for (double p : ps_list) row.push_back(ricci_lp_checks(ps, omega, p, ladder));
    reps.push_back(std::move(row));
  }
  std::string csv = "p,t,s,value,value_inverse\n", cauchy = "p,t,increment\n";
  for (std::size_t j = 0; j < ps_list.size(); ++j) {
    const auto& a = reps[0][j];
    const auto& b = reps[1][j];
    for (const auto& pr : a.pairs)
      csv += fmt(a.p) + "," + fmt(pr.t) + "," + fmt(pr.s) + "," + fmt(pr.value) + "," + fmt(pr.value_inverse) + "\n";
    for (std::size_t k = 0; k < a.cauchy_times.size(); ++k)
      cauchy += fmt(a.p) + "," + fmt(a.cauchy_times[k]) + "," + fmt(a.cauchy_increments[k]) + "\n";
    const std::string tag = "p" + std::to_string(static_cast<int>(a.p));
    r.at_most("slope_relative_change_half_dt_" + tag, std::abs(b.slope / a.slope - 1.0), tolerances::lp_dt_stability);
    r.holds("cauchy_monotone_" + tag, a.cauchy_monotone);
    r.constants["slope_" + tag] = a.slope;
    r.constants["slope_half_dt_" + tag] = b.slope;
    r.constants["slope_inverse_" + tag] = a.slope_inverse;
    r.constants["quarter_coefficient_" + tag] = a.quarter_coefficient;
  }
  out.text("lp_pairs.csv", csv);
  out.text("cauchy.csv", cauchy);
}

// ---------------------------------------------------------------------------
// E9 distance convergence

template <int Dim>
void distance_convergence(const ExperimentConfig& c, ArtifactDir& out, ExperimentResult& r) {
  using namespace detail;
  auto s = setup<Dim>(c, static_cast<int>(c.integer("points_per_axis")));
  const double T = c.num("T");
  const auto sched = geometric_schedule(T, static_cast<int>(c.integer("K")));
  auto traj = flow(s, sched, stepper(c, s.a0));
  const int off = static_cast<int>(c.integer("probe_offset"));
  const int k = static_cast<int>(c.integer("graph_k"));
  auto x = center_node(s.grid), y = x;
  x[0] -= off;
  y[0] += off;
  const auto series = distance_series(traj, x, y, k);
  const double tol = graph_anisotropy_tolerance;

  // C from pairs at the coarse end of the ladder, then every pair is checked against it
  double C = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < series.d.size(); ++i)
    for (std::size_t j = i + 1; j < series.d.size(); ++j)
      if (series.times[i] >= 0.25 * T)
        C = std::max(C, std::abs(series.d[j] - series.d[i]) /
                            (std::sqrt(series.times[i]) + std::sqrt(series.times[j])));
  for (std::size_t i = 0; i < series.d.size(); ++i)
    for (std::size_t j = i + 1; j < series.d.size(); ++j) {
      const double allowed = C * (std::sqrt(series.times[i]) + std::sqrt(series.times[j])) +
                             tol * std::min(series.d[i], series.d[j]);
      worst = std::max(worst, std::abs(series.d[j] - series.d[i]) / allowed);
    }
  r.at_most("increment_over_allowance", worst, 1.0);

  // t -> 0 limit from the three smallest positive times
  const auto& dd = series.d;
  const double limit = dd.size() >= 4 ? aitken(dd[3], dd[2], dd[1]) : dd.back();
  std::vector<DistanceRow> rows, d0rows;
  const auto sx = node_label<Dim>(x), sy = node_label<Dim>(y);
  for (std::size_t i = 0; i < dd.size(); ++i) rows.push_back({sx, sy, series.times[i], dd[i], 0.0, tol});
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double eps : c.list("d0_eps")) {
    const auto est = d0_estimate(s.g0, x, y, eps);
    d0rows.push_back({sx, sy, eps, est.length, est.budget_used, tol});
    lo = std::min(lo, est.length);
    hi = std::max(hi, est.length);
  }
  const double outside = std::max({0.0, lo - limit, limit - hi}) / limit;
  r.at_most("limit_outside_d0_bracket", outside, tolerances::distance_bracket + tol);
  out.text("distance.csv", distance_csv(rows, "t"));
  out.text("d0.csv", distance_csv(d0rows, "eps"));
  r.constants["C"] = C;
  r.constants["d_limit"] = limit;
  r.constants["d0_min"] = lo;
  r.constants["d0_max"] = hi;
  r.constants["graph_tolerance"] = tol;
}

// ---------------------------------------------------------------------------
// E10 good slices

template <int Dim>
void good_slices(const ExperimentConfig& c, ArtifactDir& out, ExperimentResult& r) {
  using namespace detail;
  GridSpec<Dim> grid(static_cast<int>(c.integer("points_per_axis")), c.num("length"));
  std::mt19937_64 rng(static_cast<std::uint64_t>(c.integer("seed")));
  std::uniform_int_distribution<int> wave(-2, 2);
  std::uniform_real_distribution<double> amp(0.5, 1.0), phase(0.0, 2.0 * std::numbers::pi);
  struct Mode {
    std::array<int, Dim> k;
    double a, p;
  };
  std::vector<Mode> modes;
  while (static_cast<long>(modes.size()) < c.integer("modes")) {
    Mode m;
    bool zero = true;
    for (int a = 0; a < Dim; ++a) zero = ((m.k[a] = wave(rng)) == 0) && zero;
    m.a = amp(rng);
    m.p = phase(rng);
    if (!zero) modes.push_back(m);
  }
  std::vector<double> phi(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto x = grid.position(i);
    for (const auto& m : modes) {
      double arg = m.p;
      for (int a = 0; a < Dim; ++a) arg += 2.0 * std::numbers::pi * m.k[a] * x[a] / grid.length;
      phi[i] += m.a * std::cos(arg);
    }
  }
  double phi2 = 0.0;
  for (double v : phi) phi2 += v * v * grid.cell_volume();

  GoodSliceQuery<Dim> q;
  q.center = center_node(grid);
  q.center[0] = 0;
  q.eps = c.num("slice_eps");
  std::string csv = "alpha_target,alpha,integral,bound,bad_measure,alpha_eighth,calibrated,within_bound\n";
  auto row = [&](double target, const GoodSlice& gs) {
    csv += fmt(target) + "," + fmt(gs.alpha) + "," + fmt(gs.integral) + "," + fmt(gs.bound) + "," +
           fmt(gs.bad_measure) + "," + fmt(gs.alpha_eighth) + "," + (gs.calibrated ? "1" : "0") + "," +
           (gs.within_bound ? "1" : "0") + "\n";
  };
  for (double alpha : c.list("alphas")) {
    const double sc = std::sqrt(alpha / phi2);
    MetricField<Dim> g = MetricField<Dim>::identity(grid);
    for (std::size_t i = 0; i < grid.size(); ++i) g(sym_index<Dim>(0, 0), i) = 1.0 + sc * phi[i];
    const auto gs = good_slice_search(g, q);
    row(alpha, gs);
    std::ostringstream tag;
    tag << alpha;
    r.at_most("slice_integral_alpha_" + tag.str(), gs.integral, gs.bound);
    r.constants["alpha_" + tag.str()] = gs.alpha;
    r.constants["integral_alpha_" + tag.str()] = gs.integral;
    r.constants["bad_measure_alpha_" + tag.str()] = gs.bad_measure;
  }
  // negative control: every line is expensive
  Mat<Dim> heavy = Mat<Dim>::Identity();
  heavy(0, 0) += c.num("control_excess");
  bool rejected = false;
  try {
    const auto gs = good_slice_search(MetricField<Dim>::constant(grid, heavy), q);
    row(-1.0, gs);
    rejected = !gs.within_bound;
    r.constants["control_integral"] = gs.integral;
  } catch (const SearchFailed& e) {
    rejected = true;
    r.constants["control_integral"] = e.attained();
  }
  r.holds("negative_control_rejected", rejected);
  out.text("good_slice.csv", csv);
}

// ---------------------------------------------------------------------------
// E11 ODE and norm appendices

inline void appendix_suites(const ExperimentConfig& c, ArtifactDir& out, ExperimentResult& r) {
  using namespace detail;
  const auto seed = static_cast<std::uint64_t>(c.integer("seed"));
  const double eps = c.num("ode_eps"), cval = c.num("ode_c");
  const auto pc = OdeProblem::tabulate([&](double) { return cval; }, eps, 1.0, 24, 1e-9);
  const auto rc = ode_comparison_test(pc, 1e-8, 20, 400, tolerances::ode_rel);
  const double closed = cval / (1.0 - eps);
  r.at_most("ode_constant_max_ratio", rc.max_ratio, 1.0 + tolerances::ode_rel);
  r.at_most("ode_constant_closed_form_error", std::abs(ode_bound(pc, 1.0) - closed) / closed,
            tolerances::ode_closed_form);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 5.0), e(-0.5, 0.95);
  double worst = 0.0;
  std::string ode_csv = "trial,eps,max_ratio\n";
  for (long i = 0; i < c.integer("forcings"); ++i) {
    const double ei = e(rng);
    const auto p = OdeProblem::tabulate([&](double) { return u(rng); }, ei, 1.0, 24, 1e-9);
    const auto rep = ode_comparison_test(p, 1e-8, 20, 400, tolerances::ode_rel);
    worst = std::max(worst, rep.max_ratio);
    ode_csv += std::to_string(i) + "," + fmt(ei) + "," + fmt(rep.max_ratio) + "\n";
  }
  r.at_most("ode_random_max_ratio", worst, 1.0 + tolerances::ode_rel);
  out.text("ode.csv", ode_csv);

  std::string norm_csv = "n,inequality,max_ratio\n", chain_csv = "n,max_link_ratio,max_total_ratio\n";
  for (int n = 2; n <= 4; ++n) {
    const auto ens = SpdEnsemble::generate(n, static_cast<std::size_t>(c.integer("ensemble")), seed + n);
    const auto nr = norm_comparison_suite(ens, tolerances::appendix_ratio);
    for (int i = 0; i < kNormInequalities; ++i)
      norm_csv += std::to_string(n) + "," + std::to_string(i) + "," + fmt(nr.max_ratio[i]) + "\n";
    r.at_most("norm_max_ratio_n" + std::to_string(n), nr.overall, 1.0 + tolerances::appendix_ratio);
    const auto ih = integral_holder_suite(n, static_cast<std::size_t>(c.integer("spaces")),
                                          static_cast<int>(c.integer("space_points")), {1.0, 2.0, 4.0}, seed + 10 + n,
                                          tolerances::appendix_ratio);
    chain_csv += std::to_string(n) + "," + fmt(ih.max_link_ratio) + "," + fmt(ih.max_total_ratio) + "\n";
    r.at_most("integral_chain_max_ratio_n" + std::to_string(n), std::max(ih.max_link_ratio, ih.max_total_ratio),
              1.0 + tolerances::appendix_ratio);
  }
  out.text("norms.csv", norm_csv);
  out.text("integral_chain.csv", chain_csv);
  r.constants["ode_constant_max_ratio"] = rc.max_ratio;
  r.constants["ode_random_max_ratio"] = worst;
}

// ---------------------------------------------------------------------------
// E12 scalar floor

template <int Dim>
void scalar_floor(const ExperimentConfig& c, ArtifactDir& out, ExperimentResult& r) {
  using namespace detail;
  const auto prof = conformal_profile<Dim>(c);
  const double k = c.num("floor");
  if (!(k < 0.0)) throw ConfigError("floor", "must be negative for the conformal preset");
  const double min_unit = conformal_min_scalar(prof);
  const auto sched = geometric_schedule(c.num("T"), static_cast<int>(c.integer("K")));
  const double slack = c.num("rel_slack");
  std::vector<double> C;
  std::vector<ScalarFloorReport> reps;
  for (const char* key : {"points_per_axis", "points_fine"}) {
    const int n = static_cast<int>(c.integer(key));
    GridSpec<Dim> grid(n, c.num("length"));
    Setup<Dim> s{grid, background<Dim>(c, grid), conformal_metric(grid, prof, min_unit / k), 1.0};
    s.a0 = two_sided_bound(s.g0, s.bg);
    auto traj = flow(s, sched, stepper(c, s.a0));
    const double dx = grid.dx();
    reps.push_back(scalar_floor_monitor(traj, k, std::numeric_limits<double>::infinity(), slack));
    C.push_back(reps.back().worst_deficit / (dx * dx));
    out.text("floor_" + std::to_string(n) + ".csv", reps.back().to_csv());
  }
  r.holds("floor_constant_finite", std::isfinite(C[0]) && std::isfinite(C[1]));
  r.at_most("floor_constant_refined_over_coarse", C[1] / std::max(C[0], tolerances::floor_constant_min),
            tolerances::floor_refinement);
  r.holds("psi_monotone_coarse", reps[0].psi_monotone);
  r.holds("psi_monotone_fine", reps[1].psi_monotone);

  // negative control: data below the floor from the start
  GridSpec<Dim> grid(static_cast<int>(c.integer("points_per_axis")), c.num("length"));
  const auto bad = conformal_metric(grid, prof, min_unit / c.num("control_floor"));
  const double tol0 = C[0] * grid.dx() * grid.dx();
  const auto ctl = scalar_floor_monitor(std::vector<Snapshot<Dim>>{{0.0, bad}}, k, tol0, slack);
  r.holds("negative_control_detected", ctl.violation_at_start);

  r.constants["k"] = k;
  r.constants["C_coarse"] = C[0];
  r.constants["C_fine"] = C[1];
  r.constants["psi_increase_coarse"] = reps[0].max_psi_increase;
  r.constants["psi_increase_fine"] = reps[1].max_psi_increase;
  r.constants["control_min_R"] = ctl.rows.front().min_R;
}

}  // namespace experiments

/// Runs experiment `cfg.id()` for one dimension and writes its artifacts into `dir`.
template <int Dim>
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  ExperimentResult r;
  r.id = cfg.id();
  ArtifactDir out(dir, r);
  const auto& id = r.id;
  if (id == "E1") experiments::flat_fixed_point<Dim>(cfg, out, r);
  else if (id == "E2") experiments::deturck_identity<Dim>(cfg, out, r);
  else if (id == "E3") experiments::curvature_convergence<Dim>(cfg, out, r);
  else if (id == "E4") experiments::rough_monitors<Dim>(cfg, out, r);
  else if (id == "E5") experiments::l2_continuity<Dim>(cfg, out, r);
  else if (id == "E6") experiments::gronwall_uniqueness<Dim>(cfg, out, r);
  else if (id == "E7") experiments::ricci_pullback<Dim>(cfg, out, r);
  else if (id == "E8") experiments::ricci_lp<Dim>(cfg, out, r);
  else if (id == "E9") experiments::distance_convergence<Dim>(cfg, out, r);
  else if (id == "E10") experiments::good_slices<Dim>(cfg, out, r);
  else if (id == "E11") experiments::appendix_suites(cfg, out, r);
  else if (id == "E12") experiments::scalar_floor<Dim>(cfg, out, r);
  else throw ConfigError("experiment", "unknown experiment id '" + id + "'");
  return r;
}

}  // namespace rdlab

#endif  // RDLAB_EXPERIMENTS_HPP
