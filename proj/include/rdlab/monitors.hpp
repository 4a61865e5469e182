#ifndef RDLAB_MONITORS_HPP
#define RDLAB_MONITORS_HPP

#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rdlab/deturck.hpp"
#include "rdlab/initial_data.hpp"
#include "rdlab/snapshot.hpp"

namespace rdlab {

/// Radii are in torus units; both must stay below L/4.
struct MonitorConfig {
  double r0 = 0.125;
  double r1 = 0.1875;
  int center_step = 2;
};

struct MonitorRow {
  double t = 0.0;
  double lambda_min = 1.0;
  double lambda_max = 1.0;
  double a = 1.0;
  double b = 0.0;                  // sup_x E_{r0}(x, t)
  std::array<double, 3> c{};       // sup |nabla^j g|^2, j = 1..3
  std::array<double, 3> e{};       // c_j t^j
  double d = 0.0;                  // sup_x W^{2,2} distance to g0 on B_{r0}(x), squared
  double slack = 0.0;              // sup_x (E_{r0}(x, t) - E_{r1}(x, 0))
};

struct MonitorReport {
  std::vector<MonitorRow> rows;
  double r0 = 0.0, r1 = 0.0;
  double V = 0.0;                  // smallest V with slack(t) <= V t at every sampled t > 0
  double V_slope = 0.0;            // least-squares slope of slack(t) against t
  std::array<double, 3> trend_slope{};       // d log(c_j t^j) / d log t
  std::array<bool, 3> trend_decreasing{};    // c_j t^j decreases as t -> 0 along the samples
  std::optional<double> B, B_inv;
  std::optional<double> amplification;

  static std::vector<std::string> csv_columns() {
    return {"t", "lambda_min", "lambda_max", "a", "b", "c1", "c2", "c3", "e1", "e2", "e3", "d", "slack"};
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << std::setprecision(17);
    const auto cols = csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
    for (const auto& r : rows) {
      os << r.t << ',' << r.lambda_min << ',' << r.lambda_max << ',' << r.a << ',' << r.b;
      for (double v : r.c) os << ',' << v;
      for (double v : r.e) os << ',' << v;
      os << ',' << r.d << ',' << r.slack << '\n';
    }
    return os.str();
  }

  nlohmann::json summary() const {
    nlohmann::json j;
    j["r0"] = r0;
    j["r1"] = r1;
    j["V"] = V;
    j["V_slope"] = V_slope;
    j["c_trend_slope"] = trend_slope;
    j["c_trend_decreasing"] = trend_decreasing;
    j["B"] = B ? nlohmann::json(*B) : nlohmann::json();
    j["B_inverse"] = B_inv ? nlohmann::json(*B_inv) : nlohmann::json();
    j["amplification"] = amplification ? nlohmann::json(*amplification) : nlohmann::json();
    j["samples"] = rows.size();
    return j;
  }

  void write(const std::filesystem::path& csv_path, const std::filesystem::path& json_path) const {
    write_text_atomic(csv_path, to_csv());
    write_text_atomic(json_path, summary().dump(2) + "\n");
  }
};

/// sum over (a,b,c) of |d_a d_b d_c g|^2 in chart coordinates, built pair by pair from second partials.
template <int Dim>
Field<Dim> third_partial_norm2(const MetricField<Dim>& g) {
  Field<Dim> out(g.grid(), TensorShape::scalar());
  for (int b = 0; b < Dim; ++b)
    for (int c = b; c < Dim; ++c) {
      const double mult = b == c ? 1.0 : 2.0;
      const auto s = second_partial_derivative(static_cast<const Field<Dim>&>(g), b, c);
      for (int a = 0; a < Dim; ++a) {
        const auto t = partial_derivative(s, a);
        for (int i = 0; i < Dim; ++i)
          for (int j = i; j < Dim; ++j) {
            const double w = mult * (i == j ? 1.0 : 2.0);
            const auto comp = t.component(sym_index<Dim>(i, j));
            for (std::size_t idx = 0; idx < comp.size(); ++idx) out(0, idx) += w * comp[idx] * comp[idx];
          }
      }
    }
  return out;
}

/// sup_x |nabla^j g|^2 for j = 1, 2 (background-covariant) and j = 3 (chart partials).
template <int Dim>
std::array<double, 3> derivative_sups(const MetricField<Dim>& g, const BackgroundGeometry<Dim>& bg) {
  std::vector<double> d1(g.nodes()), d2(g.nodes());
  JetBuilder<Dim> jets(g, bg);
  for_each_node(g.grid(), [&](std::size_t idx, const MultiIndex<Dim>& m) {
    const auto jet = jets(idx, m);
    const Mat<Dim> e = coframe(bg, idx);
    d1[idx] = first_derivative_norm2(jet, e, bg.flat);
    d2[idx] = second_derivative_norm2(jet, e, bg.flat);
  });
  const auto t3 = third_partial_norm2(g);
  return {*std::max_element(d1.begin(), d1.end()), *std::max_element(d2.begin(), d2.end()), t3.max_abs()};
}

namespace detail {

inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  return den > 0.0 ? (n * sxy - sx * sy) / den : 0.0;
}

}  // namespace detail

/// Per-sample estimates (a)-(f) along a trajectory.
template <int Dim>
MonitorReport monitor_bcdef(const std::vector<Snapshot<Dim>>& traj, const MetricField<Dim>& g0,
                            const BackgroundGeometry<Dim>& bg, const MonitorConfig& cfg) {
  if (!(cfg.r0 > 0.0 && cfg.r0 < cfg.r1)) throw std::invalid_argument("monitor radii need 0 < r0 < r1");
  const auto& grid = g0.grid();
  const auto centers = center_net(grid, cfg.center_step);
  BallSampler<Dim> s0(bg, centers, cfg.r0), s1(bg, centers, cfg.r1);
  const auto e1_start = s1.integrals(energy_density(g0, bg));

  MonitorReport rep;
  rep.r0 = cfg.r0;
  rep.r1 = cfg.r1;
  for (const auto& snap : traj) {
    MonitorRow row;
    row.t = snap.t;
    auto [lo, hi] = eig_bounds_rel(snap.g, bg);
    row.lambda_min = *std::min_element(lo.raw().begin(), lo.raw().end());
    row.lambda_max = *std::max_element(hi.raw().begin(), hi.raw().end());
    row.a = std::max({1.0, row.lambda_max, 1.0 / row.lambda_min});
    const auto e0 = s0.integrals(energy_density(snap.g, bg));
    row.b = *std::max_element(e0.begin(), e0.end());
    row.slack = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < e0.size(); ++c) row.slack = std::max(row.slack, e0[c] - e1_start[c]);
    row.c = derivative_sups(snap.g, bg);
    for (int j = 0; j < 3; ++j) row.e[j] = row.c[j] * std::pow(snap.t, j + 1);
    MetricField<Dim> diff(snap.g - g0);
    row.d = s0.sup(w22_density(diff, bg));
    rep.rows.push_back(row);
  }

  std::vector<double> ts, ss;
  bool any = false;
  for (const auto& r : rep.rows) {
    ts.push_back(r.t);
    ss.push_back(r.slack);
    if (r.t > 0.0) {
      const double v = r.slack / r.t;
      rep.V = any ? std::max(rep.V, v) : v;
      any = true;
    }
  }
  rep.V_slope = detail::ls_slope(ts, ss);

  for (int j = 0; j < 3; ++j) {
    std::vector<double> lt, le;
    for (const auto& r : rep.rows)
      if (r.t > 0.0 && r.e[j] > 0.0) {
        lt.push_back(std::log(r.t));
        le.push_back(std::log(r.e[j]));
      }
    rep.trend_slope[j] = detail::ls_slope(lt, le);
    bool dec = lt.size() >= 2;
    // rows are in increasing t, so decreasing toward t -> 0 means increasing along the rows
    for (std::size_t i = 1; i < le.size(); ++i) dec = dec && le[i] > le[i - 1];
    rep.trend_decreasing[j] = dec;
  }
  return rep;
}

struct L2Continuity {
  double B = 0.0;      // max over pairs and centers of int_B |g(t)-g(s)|^2 / |t-s|
  double B_inv = 0.0;  // same for g^{-1}
  double a = 1.0;      // two-sided bound over the trajectory
};

/// Empirical L^2 continuity constants over all snapshot pairs.
template <int Dim>
L2Continuity l2_continuity_check(const std::vector<Snapshot<Dim>>& traj, const BackgroundGeometry<Dim>& bg,
                                 double radius, int center_step = 2) {
  if (traj.size() < 3) throw std::invalid_argument("l2_continuity_check needs at least 3 snapshots");
  const auto& grid = traj.front().g.grid();
  BallSampler<Dim> sampler(bg, center_net(grid, center_step), radius);
  std::vector<MetricField<Dim>> inv;
  L2Continuity out;
  for (const auto& s : traj) {
    inv.push_back(inverse_metric(s.g));
    out.a = std::max(out.a, two_sided_bound(s.g, bg));
  }
  for (std::size_t i = 0; i < traj.size(); ++i)
    for (std::size_t j = i + 1; j < traj.size(); ++j) {
      const double dt = traj[j].t - traj[i].t;
      if (!(dt > 0.0)) continue;
      MetricField<Dim> dg(traj[j].g - traj[i].g);
      MetricField<Dim> dgi(inv[j] - inv[i]);
      out.B = std::max(out.B, sampler.sup(sym_norm2(dg, bg)) / dt);
      out.B_inv = std::max(out.B_inv, sampler.sup(sym_norm2(dgi, bg)) / dt);
    }
  return out;
}

struct GronwallReport {
  std::vector<double> t;
  std::vector<double> D;
  std::vector<double> amplification;  // running max of D(t) / max(D(0), floor)
  double floor = 1e-14;
  double factor = 4.0;
  bool pass = false;

  double final_amplification() const { return amplification.empty() ? 0.0 : amplification.back(); }

  /// The curve restricted to t <= T.
  GronwallReport restricted(double T) const {
    GronwallReport r;
    r.floor = floor;
    r.factor = factor;
    for (std::size_t i = 0; i < t.size() && t[i] <= T; ++i) {
      r.t.push_back(t[i]);
      r.D.push_back(D[i]);
      r.amplification.push_back(amplification[i]);
    }
    r.pass = std::all_of(r.amplification.begin(), r.amplification.end(), [&](double v) { return v <= factor; });
    return r;
  }
};

/// Evolves two mollify-blends of g0 with a shared step sequence and tracks their local L^2 distance.
template <int Dim>
GronwallReport gronwall_uniqueness_check(const MetricField<Dim>& g0, const BackgroundGeometry<Dim>& bg,
                                         double s1, double s2, const CutoffSpec<Dim>& cutoff,
                                         const std::vector<double>& schedule, StepperConfig cfg, double radius,
                                         int center_step = 2) {
  const auto& grid = g0.grid();
  BallSampler<Dim> sampler(bg, center_net(grid, center_step), radius);
  FlowState<Dim> a{mollify_blend(g0, s1, cutoff, bg)}, b{mollify_blend(g0, s2, cutoff, bg)};
  a.a_seen = bound_a_or_inf(a.g, bg);
  b.a_seen = bound_a_or_inf(b.g, bg);
  if (cfg.abort_a <= 0.0) cfg.abort_a = 400.0 * std::max(a.a_seen, b.a_seen);

  GronwallReport rep;
  auto sample = [&] {
    MetricField<Dim> diff(a.g - b.g);
    const double d = sampler.sup(sym_norm2(diff, bg));
    rep.t.push_back(a.t);
    rep.D.push_back(d);
    const double amp = d / std::max(rep.D.front(), rep.floor);
    rep.amplification.push_back(rep.amplification.empty() ? amp : std::max(rep.amplification.back(), amp));
  };
  for (double target : schedule) {
    while (a.t < target) {
      double dt = std::min({cfl_dt(a.g, cfg), cfl_dt(b.g, cfg), target - a.t});
      StepperConfig fixed = cfg;
      fixed.forced_dt = dt;
      auto na = step(a, fixed, bg);
      fixed.forced_dt = na.last_dt;
      auto nb = step(b, fixed, bg);
      if (nb.last_dt < na.last_dt) {
        fixed.forced_dt = nb.last_dt;
        fixed.max_halvings = 0;
        na = step(a, fixed, bg);
      }
      a = std::move(na);
      b = std::move(nb);
      if (target - a.t < 1e-12 * std::max(1.0, target)) a.t = b.t = target;
    }
    sample();
  }
  rep.pass = std::all_of(rep.amplification.begin(), rep.amplification.end(),
                         [&](double v) { return v <= rep.factor; });
  return rep;
}

}  // namespace rdlab

#endif  // RDLAB_MONITORS_HPP
