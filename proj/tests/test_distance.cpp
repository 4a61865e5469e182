#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "rdlab/distance.hpp"
#include "rdlab/initial_data.hpp"

using namespace rdlab;

namespace {

constexpr double kPi = std::numbers::pi;

template <int Dim>
ConformalProfile<Dim> profile(double amp) {
  ConformalProfile<Dim> p;
  p.amplitude = amp;
  return p;
}

template <int Dim>
MultiIndex<Dim> random_node(std::mt19937& rng, int n) {
  std::uniform_int_distribution<int> u(0, n - 1);
  MultiIndex<Dim> m;
  for (auto& v : m) v = u(rng);
  return m;
}

// exhaustive simple-path minimum; fine for a handful of nodes
double brute_force(const WeightedGraph& g, std::size_t s, std::size_t t) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<char> seen(g.size(), 0);
  std::function<void(std::size_t, double)> dfs = [&](std::size_t u, double len) {
    if (u == t) {
      best = std::min(best, len);
      return;
    }
    seen[u] = 1;
    for (auto [v, w] : g.adj[u])
      if (!seen[v]) dfs(v, len + w);
    seen[u] = 0;
  };
  dfs(s, 0.0);
  return best;
}

// sqrt(g_00) = 1 + A rho^2, rho the transverse distance to the line through `c`
MetricField<3> radial_quadratic(const GridSpec<3>& grid, const MultiIndex<3>& c, double A) {
  MetricField<3> g = MetricField<3>::identity(grid);
  const auto xc = grid.position(c);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    auto d = grid.displacement(xc, grid.position(idx));
    const double rho2 = d[1] * d[1] + d[2] * d[2];
    g(sym_index<3>(0, 0), idx) = std::pow(1.0 + A * rho2, 2);
  }
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// graph distance

TEST(GraphDistance, FlatAxisAlignedIsExact) {
  GridSpec<3> grid(16, 1.0);
  auto g = MetricField<3>::identity(grid);
  for (int m = 1; m <= 7; ++m) EXPECT_NEAR(graph_distance<3>(g, {0, 0, 0}, {m, 0, 0}), m * grid.dx(), 1e-14);
  EXPECT_NEAR(graph_distance<3>(g, {2, 3, 4}, {2, 3 - 5, 4}), 5 * grid.dx(), 1e-14);
}

TEST(GraphDistance, UniformScaling) {
  GridSpec<3> grid(16, 1.0);
  auto d = MetricField<3>::identity(grid);
  const double c = 1.7;
  auto g = MetricField<3>::constant(grid, c * c * Mat<3>::Identity());
  std::mt19937 rng(3);
  for (int i = 0; i < 10; ++i) {
    auto x = random_node<3>(rng, 16), y = random_node<3>(rng, 16);
    EXPECT_NEAR(graph_distance(g, x, y), c * graph_distance(d, x, y), 1e-12);
  }
}

TEST(GraphDistance, EightNodeToyMatchesExhaustiveSearch) {
  // 2x4 lattice with handcrafted weights and two diagonals
  WeightedGraph g(8);
  auto id = [](int r, int c) { return static_cast<std::size_t>(r * 4 + c); };
  const double horiz[2][3] = {{1.0, 4.0, 1.5}, {2.5, 0.5, 3.0}};
  const double vert[4] = {2.0, 0.7, 5.0, 1.1};
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) g.add_edge(id(r, c), id(r, c + 1), horiz[r][c]);
  for (int c = 0; c < 4; ++c) g.add_edge(id(0, c), id(1, c), vert[c]);
  g.add_edge(id(0, 0), id(1, 2), 3.9);
  g.add_edge(id(1, 1), id(0, 3), 4.2);
  for (std::size_t s = 0; s < 8; ++s) {
    const auto d = g.distances_from(s);
    for (std::size_t t = 0; t < 8; ++t) EXPECT_DOUBLE_EQ(d[t], s == t ? 0.0 : brute_force(g, s, t)) << s << "->" << t;
  }
  EXPECT_THROW(g.add_edge(0, 1, 0.0), std::invalid_argument);
}

TEST(GraphDistance, TriangleInequalityAndSymmetry) {
  GridSpec<3> grid(16, 1.0);
  auto g = conformal_metric(grid, profile<3>(0.3));
  std::mt19937 rng(11);
  for (int i = 0; i < 6; ++i) {
    auto x = random_node<3>(rng, 16), y = random_node<3>(rng, 16), z = random_node<3>(rng, 16);
    const auto dx = graph_distances_from(g, x), dy = graph_distances_from(g, y);
    const double xy = dx[grid.index(y)], yz = dy[grid.index(z)], xz = dx[grid.index(z)];
    EXPECT_LE(xz, xy + yz + 1e-14);
    EXPECT_NEAR(dy[grid.index(x)], xy, 1e-14 * xy);
  }
}

TEST(GraphDistance, BiLipschitzComparison) {
  GridSpec<3> grid(16, 1.0);
  auto g = conformal_metric(grid, profile<3>(0.25));
  double lo = 1e300, hi = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    lo = std::min(lo, g(0, i));
    hi = std::max(hi, g(0, i));
  }
  const double c = std::max(hi, 1.0 / lo);
  auto d = MetricField<3>::identity(grid);
  std::mt19937 rng(5);
  std::vector<std::pair<MultiIndex<3>, MultiIndex<3>>> pairs;
  for (int i = 0; i < 12; ++i) pairs.push_back({random_node<3>(rng, 16), random_node<3>(rng, 16)});
  const auto dg = graph_distances(g, pairs), dd = graph_distances(d, pairs);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_GE(dg[i], dd[i] / std::sqrt(c) - 1e-14);
    EXPECT_LE(dg[i], dd[i] * std::sqrt(c) + 1e-14);
  }
}

TEST(GraphDistance, StencilMonotonicity) {
  GridSpec<3> grid(16, 1.0);
  auto g = conformal_metric(grid, profile<3>(0.3));
  std::mt19937 rng(8);
  for (int i = 0; i < 5; ++i) {
    auto x = random_node<3>(rng, 16), y = random_node<3>(rng, 16);
    const double d1 = graph_distance(g, x, y, 1), d2 = graph_distance(g, x, y, 2), d3 = graph_distance(g, x, y, 3);
    EXPECT_LE(d2, d1 + 1e-14);
    EXPECT_LE(d3, d2 + 1e-14);
  }
}

TEST(GraphDistance, FlatAnisotropyWithinTolerance) {
  GridSpec<3> grid(32, 1.0);
  auto g = MetricField<3>::identity(grid);
  const MultiIndex<3> o{0, 0, 0};
  const auto d = graph_distances_from(g, o);
  double worst = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double e = grid.torus_distance(grid.position(o), grid.position(i));
    EXPECT_GE(d[i], e - 1e-14);
    worst = std::max(worst, d[i] / e - 1.0);
  }
  EXPECT_LE(worst, graph_anisotropy_tolerance);
}

TEST(GraphDistance, IndefiniteMetricThrows) {
  GridSpec<2> grid(8, 1.0);
  auto g = MetricField<2>::identity(grid);
  g.set(3, -Mat<2>::Identity());
  EXPECT_THROW(graph_distance<2>(g, {0, 0}, {4, 4}), NonPositiveDefinite);
}

// ---------------------------------------------------------------------------
// Lebesgue lines

TEST(Tube, FlatGivesLineLength) {
  GridSpec<3> grid(16, 1.0);
  auto g = MetricField<3>::identity(grid);
  LebesgueLine<3> line{0, {2, 5, 5}, 4, {}};
  for (double a : {1.0, 2.0, 3.0, 4.0}) EXPECT_NEAR(tube_average_length(g, line, a * grid.dx()), 0.25, 1e-14);
  EXPECT_THROW(tube_average_length(g, line, 0.5 * grid.dx()), std::invalid_argument);
  const auto L = lebesgue_length(g, line);
  EXPECT_NEAR(L.value, 0.25, 1e-13);
  EXPECT_FALSE(L.non_convergent);
}

TEST(Tube, QuadraticProfileMatchesDiscSecondMoment) {
  GridSpec<3> grid(32, 1.0);
  const MultiIndex<3> c{4, 16, 16};
  const double A = 16.0, alpha = 4 * grid.dx();
  auto g = radial_quadratic(grid, c, A);
  LebesgueLine<3> line{0, c, 8, {}};
  // 2-disc of radius alpha: mean rho^2 = alpha^2 / 2
  const double expect = line.chart_length(grid) * (1.0 + A * alpha * alpha / 2.0);
  EXPECT_NEAR(tube_average_length(g, line, alpha), expect, 0.05 * expect);
  // the extrapolation removes the quadratic term exactly
  EXPECT_NEAR(lebesgue_length(g, line).value, line.chart_length(grid), 1e-12);
}

TEST(Tube, RichardsonMatchesDirectLineIntegral) {
  GridSpec<3> grid(32, 1.0);
  auto g = conformal_metric(grid, profile<3>(0.2));
  LebesgueLine<3> line{0, {3, 7, 20}, 8, {4 * grid.dx(), 3 * grid.dx(), 2 * grid.dx()}};
  // direct oracle: trapezoid of e^{u} along the line
  double direct = 0.0;
  for (int i = 0; i <= line.length; ++i) {
    auto m = line.start;
    m[0] += i;
    direct += (i == 0 || i == line.length ? 0.5 : 1.0) * std::exp(profile<3>(0.2).u(grid.position(m)));
  }
  direct *= grid.dx();
  const auto L = lebesgue_length(g, line);
  EXPECT_FALSE(L.non_convergent);
  EXPECT_NEAR(L.value, direct, 0.01 * direct);
  // and the raw tube values are visibly worse than the extrapolant
  EXPECT_GT(std::abs(L.tube_values.front() - direct), std::abs(L.value - direct));
}

TEST(Tube, LogLogLineMissingCenterIsStable) {
  GridSpec<3> grid(32, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  std::array<LogLogAxis, 3> axes{LogLogAxis{1.0, 1.0, 0.0}, LogLogAxis{1.0, 1.0, 0.0}, LogLogAxis{1.0, 1.0, 0.0}};
  auto g = loglog_metric<3>(grid, bg, axes, std::nullopt, Vec<3>::Constant(0.5));
  // axis-0 line through (.., 24, 16): transverse distance 0.25 from the center
  LebesgueLine<3> a{0, {8, 24, 16}, 8, {4 * grid.dx(), 3 * grid.dx(), 2 * grid.dx()}};
  LebesgueLine<3> b{0, {8, 24, 16}, 8, {3 * grid.dx(), 2 * grid.dx(), grid.dx()}};
  const double la = lebesgue_length(g, a).value, lb = lebesgue_length(g, b).value;
  EXPECT_TRUE(std::isfinite(la));
  EXPECT_NEAR(la, lb, 0.05 * lb);
}

TEST(Tube, NonConvergentFlag) {
  // expensive shell at transverse distance 3 dx only
  GridSpec<3> grid(32, 1.0);
  auto g = MetricField<3>::identity(grid);
  const MultiIndex<3> c{4, 16, 16};
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    const auto m = grid.multi(idx);
    const int r2 = (m[1] - 16) * (m[1] - 16) + (m[2] - 16) * (m[2] - 16);
    if (r2 == 9) g(sym_index<3>(0, 0), idx) = 100.0;
  }
  LebesgueLine<3> line{0, c, 8, {4 * grid.dx(), 3 * grid.dx(), 2 * grid.dx()}};
  EXPECT_TRUE(lebesgue_length(g, line).non_convergent);
}

TEST(Tube, AdmissibleLength) {
  GridSpec<3> grid(32, 1.0);
  LebesgueLine<3> line{0, {}, 8, {}};
  EXPECT_TRUE(line.admissible(grid, 1.0));
  EXPECT_FALSE(line.admissible(grid, 0.5));
}

// ---------------------------------------------------------------------------
// staircases

TEST(D0Estimate, FlatStaircaseLengths) {
  GridSpec<3> grid(16, 1.0);
  auto g = MetricField<3>::identity(grid);
  const auto axis = d0_estimate<3>(g, {1, 2, 3}, {6, 2, 3}, 0.0);
  EXPECT_NEAR(axis.length, 5 * grid.dx(), 1e-13);
  EXPECT_EQ(axis.budget_used, 0.0);
  // diagonal pair: l1 length, never below Euclidean
  const auto diag = d0_estimate<3>(g, {0, 0, 0}, {3, 4, 0}, 0.0);
  EXPECT_NEAR(diag.length, 7 * grid.dx(), 1e-13);
  EXPECT_GE(diag.length, 5 * grid.dx());
  EXPECT_THROW(d0_estimate<3>(g, {1, 1, 1}, {1, 1, 1}, 0.0), std::invalid_argument);
}

TEST(D0Estimate, NonincreasingInBudget) {
  GridSpec<3> grid(16, 1.0);
  auto g = conformal_metric(grid, profile<3>(0.3));
  double prev = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= 3; ++j) {
    const double eps = j * grid.dx();
    const auto e = d0_estimate<3>(g, {0, 3, 5}, {7, 9, 5}, eps);
    EXPECT_LE(e.length, prev + 1e-14);
    EXPECT_LE(e.budget_used, eps + 1e-14);
    EXPECT_NEAR(e.curve.jump_total, e.budget_used, 0.0);
    prev = e.length;
  }
}

TEST(D0Estimate, FlatJumpsShortenByBudget) {
  GridSpec<3> grid(16, 1.0);
  auto g = MetricField<3>::identity(grid);
  const auto e = d0_estimate<3>(g, {0, 0, 0}, {6, 0, 0}, 2 * grid.dx());
  EXPECT_NEAR(e.length, 4 * grid.dx(), 1e-13);
  EXPECT_NEAR(e.budget_used, 2 * grid.dx(), 1e-15);
}

TEST(D0Estimate, SmoothDensityTracksPointwiseRoot) {
  GridSpec<3> grid(32, 1.0);
  auto p = profile<3>(0.2);
  auto g = conformal_metric(grid, p);
  const auto f = lebesgue_density(g, 1);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    worst = std::max(worst, std::abs(f(0, i) / std::exp(p.u(grid.position(i))) - 1.0));
  EXPECT_LT(worst, 0.01);
}

// ---------------------------------------------------------------------------
// good slices

TEST(GoodSlice, FlatGivesUnitLength) {
  GridSpec<3> grid(64, 1.0);
  auto g = MetricField<3>::identity(grid);
  const auto s = good_slice_search(g, GoodSliceQuery<3>{0, {0, 32, 32}, 0, 0.05});
  EXPECT_NEAR(s.integral, 1.0, 1e-14);
  EXPECT_EQ(s.offset, (std::vector<int>{0, 0, 0}));
  EXPECT_TRUE(s.within_bound);
  EXPECT_EQ(s.alpha, 0.0);
  EXPECT_EQ(s.bad_measure, 0.0);
  EXPECT_GT(s.candidates, 20u);
}

TEST(GoodSlice, ThinSheetIsAvoided) {
  GridSpec<3> grid(64, 1.0);
  auto g = MetricField<3>::identity(grid);
  for (std::size_t idx = 0; idx < grid.size(); ++idx)
    if (grid.multi(idx)[1] == 32) g(sym_index<3>(0, 0), idx) = 9.0;
  const auto s = good_slice_search(g, GoodSliceQuery<3>{0, {0, 32, 32}, 0, 0.05});
  EXPECT_NE(s.offset[1], 0);
  EXPECT_LE(s.integral, 1.05);
  EXPECT_GT(s.bad_measure, 0.0);
}

TEST(GoodSlice, MinimumNondecreasingInAlpha) {
  GridSpec<3> grid(64, 1.0);
  double prev = 0.0, prev_alpha = 0.0;
  for (double amp : {1e-3, 3e-3, 1e-2, 3e-2}) {
    auto g = MetricField<3>::identity(grid);
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
      const auto x = grid.position(idx);
      const double phi = 1.0 + 0.5 * std::sin(2 * kPi * x[1]) * std::cos(2 * kPi * x[2]);
      g(sym_index<3>(0, 0), idx) = std::pow(1.0 + amp * phi, 2);
    }
    const auto s = good_slice_search(g, GoodSliceQuery<3>{0, {0, 10, 20}, 0, 0.05});
    EXPECT_GT(s.alpha, prev_alpha);
    EXPECT_GE(s.integral, prev);
    prev = s.integral;
    prev_alpha = s.alpha;
  }
}

TEST(GoodSlice, FailureCarriesAttainedMinimum) {
  SearchFailed e(1.2, 1.05);
  EXPECT_DOUBLE_EQ(e.attained(), 1.2);
  EXPECT_NE(std::string(e.what()).find("1.2"), std::string::npos);
}

// ---------------------------------------------------------------------------
// lower bound along a flow

TEST(LowerBound, StationaryGeodesicRatioIsOne) {
  GridSpec<3> grid(16, 1.0);
  std::vector<Snapshot<3>> traj;
  for (double t : {0.0, 1e-3, 2e-3, 4e-3}) traj.push_back({t, MetricField<3>::identity(grid)});
  LebesgueLine<3> sigma{1, {3, 2, 8}, 6, {}};
  const auto r = lower_bound_check(MetricField<3>::identity(grid), traj, sigma);
  for (double v : r.ratios) EXPECT_NEAR(v, 1.0, 1e-12);
  EXPECT_TRUE(r.pass);
}

TEST(LowerBound, NonGeodesicLineDominatesDistance) {
  // conformal bump centered on the line: going around is cheaper
  GridSpec<3> grid(16, 1.0);
  auto g = MetricField<3>::identity(grid);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    const auto d = grid.displacement(Vec<3>::Constant(0.5), grid.position(idx));
    const double f = 1.0 + 8.0 * std::exp(-d.squaredNorm() / 0.01);
    for (int a = 0; a < 3; ++a) g(sym_index<3>(a, a), idx) = f;
  }
  std::vector<Snapshot<3>> traj{{0.0, g}, {1e-3, g}};
  LebesgueLine<3> sigma{0, {4, 8, 8}, 8, {}};
  const auto r = lower_bound_check(g, traj, sigma);
  for (double v : r.ratios) EXPECT_GE(v, 1.0);
  EXPECT_GT(r.ratios.front(), 1.2);
}

TEST(LowerBound, SmoothConformalRatioTendsToOne) {
  GridSpec<3> grid(16, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  auto p = profile<3>(0.1);
  p.phases = {0.0, 0.0, 0.0, 0.0};
  auto g0 = conformal_metric(grid, p);
  auto res = evolve(g0, bg, geometric_schedule(1e-3, 3), StepperConfig{});
  ASSERT_FALSE(res.failure);
  // x_1 = x_2 = 3/4 is a valley line of u, hence minimizing for g0
  LebesgueLine<3> sigma{0, {10, 12, 12}, 4, {}};
  const auto r = lower_bound_check(g0, res.trajectory, sigma);
  EXPECT_NEAR(r.ratios.front(), 1.0, 0.02);
  EXPECT_NEAR(r.liminf, 1.0, 0.02);
  EXPECT_TRUE(r.pass);
}

TEST(DistanceCsv, HeaderAndRows) {
  std::vector<DistanceRow> rows{{node_label<3>({1, 2, 3}), node_label<3>({4, 5, 6}), 0.5, 0.25, 0.0, 0.08}};
  const auto s = distance_csv(rows, "eps");
  EXPECT_EQ(s.substr(0, s.find('\n')), "source,target,eps,value,budget,tolerance");
  EXPECT_NE(s.find("1:2:3,4:5:6,0.5,0.25,0,0.08"), std::string::npos);
}
