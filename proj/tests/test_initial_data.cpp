#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "rdlab/calculus.hpp"
#include "rdlab/curvature.hpp"
#include "rdlab/initial_data.hpp"

using namespace rdlab;

namespace {

constexpr double kPi = std::numbers::pi;

template <int Dim>
MetricField<Dim> permute_axes(const MetricField<Dim>& g, const std::array<int, static_cast<std::size_t>(Dim)>& perm) {
  const auto& grid = g.grid();
  MetricField<Dim> out(grid);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    const auto m = grid.multi(idx);
    MultiIndex<Dim> src{};
    for (int a = 0; a < Dim; ++a) src[perm[a]] = m[a];
    const Mat<Dim> gs = g.at(grid.index(src));
    Mat<Dim> r;
    for (int i = 0; i < Dim; ++i)
      for (int j = 0; j < Dim; ++j) r(i, j) = gs(perm[i], perm[j]);
    out.set(idx, r);
  }
  return out;
}

template <int Dim>
double max_diff(const Field<Dim>& a, const Field<Dim>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.raw().size(); ++i) m = std::max(m, std::abs(a.raw()[i] - b.raw()[i]));
  return m;
}

// int |a - b|^2_{W^{2,2}} over the torus
template <int Dim>
double w22_distance2(const MetricField<Dim>& a, const MetricField<Dim>& b, const BackgroundGeometry<Dim>& bg) {
  MetricField<Dim> d(a - b);
  const auto dens = w22_density(d, bg);
  double s = 0.0;
  for (std::size_t i = 0; i < dens.raw().size(); ++i) s += dens(0, i);
  return s * a.grid().cell_volume();
}

template <int Dim>
MetricField<Dim> spike_metric(const GridSpec<Dim>& grid, double amp, double width) {
  MetricField<Dim> g = MetricField<Dim>::identity(grid);
  const Vec<Dim> c = Vec<Dim>::Constant(0.5 * grid.length);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r2 = grid.displacement(c, grid.position(i)).squaredNorm();
    g(sym_index<Dim>(0, 0), i) = 1.0 + amp * std::exp(-r2 / (2.0 * width * width));
  }
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// log-log profile

TEST(LogLog, RangeForUnitParameters) {
  const LogLogAxis p{1.0, 1.0, 0.0};
  EXPECT_EQ(p.lower(), 1.0);
  EXPECT_EQ(p.upper(), 3.0);
  double lo = 1e9, hi = -1e9;
  for (int i = 1; i <= 200000; ++i) {
    const double rho = loglog_max_radius() * std::pow(1e-300, static_cast<double>(i) / 200000);
    const double f = loglog_profile(p, rho);
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  EXPECT_GE(lo, 1.0 - 1e-12);
  EXPECT_LE(hi, 3.0 + 1e-12);
  EXPECT_LT(lo, 1.0 + 1e-3);
  EXPECT_GT(hi, 3.0 - 1e-3);
}

TEST(LogLog, ExtremesAtClosedFormRadii) {
  // sin(c + log log(2/rho)) = +-1 at rho = 2 exp(-exp(theta - c))
  for (double c : {0.0, 0.7, 2.0}) {
    const LogLogAxis p{1.0, 1.0, c};
    const double rho_max = 2.0 * std::exp(-std::exp(kPi / 2 - c + 2 * kPi));
    const double rho_min = 2.0 * std::exp(-std::exp(3 * kPi / 2 - c));
    if (rho_max > 0.0) {
      EXPECT_NEAR(loglog_profile(p, rho_max), 3.0, 1e-9);
    }
    EXPECT_NEAR(loglog_profile(p, rho_min), 1.0, 1e-9);
    EXPECT_LT(rho_min, loglog_max_radius());
  }
}

TEST(LogLog, DyadicAnnulusSweepsLessThanOnePhaseRadian) {
  // across [2^{-m-1}, 2^{-m}] the phase moves by log((m+2)/(m+1)), so f cannot reach both ends of its range
  const LogLogAxis p{1.0, 1.0, 0.0};
  for (int m = 3; m <= 6; ++m) {
    double lo = 1e9, hi = -1e9;
    for (int i = 0; i <= 20000; ++i) {
      const double rho = std::ldexp(1.0, -m - 1) * (1.0 + static_cast<double>(i) / 20000);
      const double f = loglog_profile(p, rho);
      lo = std::min(lo, f);
      hi = std::max(hi, f);
    }
    const double span = std::log((m + 2.0) / (m + 1.0));
    EXPECT_LE(hi - lo, span + 1e-12) << "m=" << m;
    EXPECT_LT(hi - lo, 1.0) << "m=" << m;
  }
}

TEST(LogLog, CenterNodeTakesRangeMinimum) {
  GridSpec<3> grid(16, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  const std::array<LogLogAxis, 3> axes{LogLogAxis{1.0, 1.0, 0.0}, LogLogAxis{0.5, 2.0, 1.0}, LogLogAxis{2.0, 0.5, 2.0}};
  const Vec<3> center = Vec<3>::Constant(0.5);
  auto g = loglog_metric<3>(grid, bg, axes, std::nullopt, center);
  const std::size_t c = grid.index(MultiIndex<3>{8, 8, 8});
  for (int a = 0; a < 3; ++a) EXPECT_EQ(g.at(c)(a, a), axes[a].r);
}

TEST(LogLog, DiagonalWithinRangeWithoutCutoff) {
  GridSpec<3> grid(16, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  const std::array<LogLogAxis, 3> axes{LogLogAxis{1.0, 1.0, 0.0}, LogLogAxis{0.5, 2.0, 1.0}, LogLogAxis{2.0, 0.5, 2.0}};
  auto g = loglog_metric<3>(grid, bg, axes, std::nullopt, Vec<3>::Constant(0.5));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Mat<3> m = g.at(i);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        if (a != b) {
          EXPECT_EQ(m(a, b), 0.0);
          continue;
        }
        EXPECT_GE(m(a, a), axes[a].lower() - 1e-12);
        EXPECT_LE(m(a, a), axes[a].upper() + 1e-12);
      }
  }
}

TEST(LogLog, CutoffLeavesBackgroundOutsideOuterBall) {
  GridSpec<3> grid(32, 1.0);
  auto bg = BackgroundGeometry<3>::make_bump(grid, 0.2);
  const std::array<LogLogAxis, 3> axes{LogLogAxis{1.0, 1.0, 0.0}, LogLogAxis{1.0, 1.0, 1.0}, LogLogAxis{1.0, 1.0, 2.0}};
  const Vec<3> center = Vec<3>::Constant(0.5);
  const CutoffSpec<3> cut{center, 0.1, 2.0};
  auto g = loglog_metric<3>(grid, bg, axes, cut, center);
  // the cutoff measures radii with h frozen at the center
  const Mat<3> hc = bg.h.at(grid.index(MultiIndex<3>{16, 16, 16}));
  std::size_t outside = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec<3> d = grid.displacement(center, grid.position(i));
    if (std::sqrt(d.dot(hc * d)) < 0.2 * (1.0 + 1e-9)) continue;
    ++outside;
    EXPECT_EQ(g.at(i), bg.h.at(i));
  }
  EXPECT_GT(outside, grid.size() / 2);
}

TEST(LogLog, DegenerateParametersThrow) {
  GridSpec<3> grid(8, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  std::array<LogLogAxis, 3> axes{};
  axes[1].eps = 0.0;
  EXPECT_THROW(loglog_metric<3>(grid, bg, axes, std::nullopt, Vec<3>::Constant(0.5)), DegenerateParameters);
  axes[1].eps = 1.0;
  axes[2].r = -1.0;
  EXPECT_THROW(loglog_metric<3>(grid, bg, axes, std::nullopt, Vec<3>::Constant(0.5)), DegenerateParameters);
}

TEST(Blend, ZeroEtaReturnsBackgroundExactly) {
  GridSpec<3> grid(8, 1.0);
  auto bg = BackgroundGeometry<3>::make_bump(grid, 0.2);
  ConformalProfile<3> p;
  auto g = blend_with_background(conformal_metric(grid, p), Field<3>(grid, TensorShape::scalar()), bg);
  EXPECT_EQ(max_diff(g, bg.h), 0.0);
}

// ---------------------------------------------------------------------------
// torus bump

TEST(TorusBump, ZeroCurvatureIsFlat) {
  GridSpec<3> grid(16, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  auto g = torus_bump_metric(grid, bg, 0.0, 0.2, Vec<3>::Constant(0.5));
  EXPECT_EQ(max_diff(g, MetricField<3>::identity(grid)), 0.0);
}

TEST(TorusBump, AmplitudeSolvesCenterCurvature) {
  // u = A (1 - r^2/s^2)^4: Delta u(0) = -16 A / s^2, so K(0) = 16 A e^{-2A} / s^2
  for (double s1 : {1.0, 5.0, 20.0}) {
    const double A = torus_bump_amplitude(s1, 0.2);
    EXPECT_NEAR(16.0 * A * std::exp(-2.0 * A) / 0.04, s1, 1e-10 * s1);
  }
  EXPECT_THROW(torus_bump_amplitude(1e3, 0.2), DegenerateParameters);
}

TEST(TorusBump, CenterScalarCurvatureIsTwiceGauss) {
  GridSpec<3> grid(32, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  const double s1 = 5.0;
  auto g = torus_bump_metric(grid, bg, s1, 0.2, Vec<3>::Constant(0.5));
  const auto R = scalar_curvature(g);
  const double Rc = R(0, grid.index(MultiIndex<3>{16, 16, 16}));
  EXPECT_NEAR(Rc, 2.0 * s1, 0.1 * 2.0 * s1);
}

TEST(TorusBump, CompactSupportAndDefaultBounds) {
  GridSpec<4> grid(16, 1.0);
  auto bg = BackgroundGeometry<4>::make_flat(grid);
  const Vec<4> c = Vec<4>::Constant(0.5);
  auto g = torus_bump_metric(grid, bg, 5.0, 0.2, c);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec<4> d = grid.displacement(c, grid.position(i));
    const double r = std::hypot(d[0], d[1]);
    if (r >= 0.2) {
      EXPECT_EQ(g.at(i), Mat<4>::Identity());
    }
  }
  auto [lo, hi] = eig_bounds_rel(g, bg);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_GE(lo(0, i), 0.8);
    EXPECT_LE(hi(0, i), 1.2);
  }
  EXPECT_THROW(torus_bump_metric(grid, bg, 5.0, 0.3, c), DegenerateParameters);
}

// ---------------------------------------------------------------------------
// cutoff

TEST(Cutoff, OneInsideZeroOutside) {
  GridSpec<3> grid(32, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  const CutoffSpec<3> spec{Vec<3>::Constant(0.5), 0.1, 2.0};
  const auto cf = cutoff_eta(spec, grid, bg);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = grid.displacement(spec.center, grid.position(i)).norm();
    const double e = cf.eta(0, i);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
    if (r <= 0.1) {
      EXPECT_EQ(e, 1.0);
    }
    if (r >= 0.2) {
      EXPECT_EQ(e, 0.0);
    }
  }
}

TEST(Cutoff, MeasuredConstantBoundedAndStable) {
  std::vector<double> cs;
  for (int n : {16, 32}) {
    GridSpec<3> grid(n, 1.0);
    auto bg = BackgroundGeometry<3>::make_flat(grid);
    cs.push_back(cutoff_eta(CutoffSpec<3>{Vec<3>::Constant(0.5), 0.15, 2.0}, grid, bg).measured_constant);
  }
  EXPECT_LE(cs[0], 50.0);
  EXPECT_LE(cs[1], 50.0);
  EXPECT_NEAR(cs[1] / cs[0], 1.0, 0.25) << cs[0] << " " << cs[1];
}

TEST(Cutoff, DoublingRadiusHalvesGradient) {
  GridSpec<3> grid(64, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  const Vec<3> c = Vec<3>::Constant(0.5);
  const double g1 = cutoff_eta(CutoffSpec<3>{c, 0.1, 2.0}, grid, bg).sup_gradient;
  const double g2 = cutoff_eta(CutoffSpec<3>{c, 0.2, 2.0}, grid, bg).sup_gradient;
  EXPECT_NEAR(g2 / g1, 0.5, 0.05 * 0.5) << g1 << " " << g2;
}

TEST(Cutoff, BallTooLargeAndDegenerate) {
  GridSpec<3> grid(16, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  EXPECT_THROW(cutoff_eta(CutoffSpec<3>{Vec<3>::Constant(0.5), 0.3, 2.0}, grid, bg), BallTooLarge);
  EXPECT_THROW(cutoff_eta(CutoffSpec<3>{Vec<3>::Constant(0.5), 0.1, 1.0}, grid, bg), DegenerateParameters);
}

// ---------------------------------------------------------------------------
// mollify and blend

TEST(MollifyBlend, UnitEtaReducesToMollify) {
  GridSpec<3> grid(16, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  ConformalProfile<3> p;
  auto g = conformal_metric(grid, p);
  Field<3> one(grid, TensorShape::scalar());
  for (auto& v : one.raw()) v = 1.0;
  EXPECT_EQ(max_diff(blend_with_background(mollify(g, grid.dx()), one, bg), mollify(g, grid.dx())), 0.0);
}

TEST(MollifyBlend, StaysInOrderIntervalAndEqualsBackgroundOutside) {
  GridSpec<3> grid(32, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  const Vec<3> c = Vec<3>::Constant(0.5);
  const std::array<LogLogAxis, 3> axes{LogLogAxis{1.0, 1.0, 0.0}, LogLogAxis{1.0, 1.0, 1.0}, LogLogAxis{1.0, 1.0, 2.0}};
  auto g0 = loglog_metric<3>(grid, bg, axes, std::nullopt, c);
  const double a = two_sided_bound(g0, bg);
  EXPECT_LE(a, 3.0 + 1e-12);
  const CutoffSpec<3> cut{c, 0.15, 2.0};
  auto g = mollify_blend(g0, 0.0625, cut, bg);
  auto [lo, hi] = eig_bounds_rel(g, bg);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_GE(lo(0, i), std::min(1.0 / a, 1.0) - 1e-12);
    EXPECT_LE(hi(0, i), std::max(a, 1.0) + 1e-12);
    if (grid.displacement(c, grid.position(i)).norm() >= 0.3) {
      EXPECT_EQ(g.at(i), Mat<3>::Identity());
    }
  }
}

TEST(MollifyBlend, ScaleSweepIsCauchy) {
  GridSpec<3> grid(32, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  ConformalProfile<3> p;
  p.amplitude = 0.2;
  auto g0 = conformal_metric(grid, p);
  const CutoffSpec<3> cut{Vec<3>::Constant(0.5), 0.15, 2.0};
  std::vector<double> d;
  for (double s : {0.25, 0.125, 0.0625})
    d.push_back(w22_distance2(mollify_blend(g0, s, cut, bg), mollify_blend(g0, s / 2, cut, bg), bg));
  EXPECT_GT(d[0], d[1]);
  EXPECT_GT(d[1], d[2]);
}

TEST(MollifyBlend, CommutesWithAxisPermutation) {
  GridSpec<3> grid(16, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  const Vec<3> c = Vec<3>::Constant(0.5);
  const std::array<LogLogAxis, 3> axes{LogLogAxis{1.0, 1.0, 0.0}, LogLogAxis{0.5, 1.0, 1.0}, LogLogAxis{2.0, 1.5, 2.0}};
  auto g0 = loglog_metric<3>(grid, bg, axes, std::nullopt, c);
  const CutoffSpec<3> cut{c, 0.15, 2.0};
  const std::array<int, 3> perm{2, 0, 1};
  auto a = permute_axes(mollify_blend(g0, 0.125, cut, bg), perm);
  auto b = mollify_blend(permute_axes(g0, perm), 0.125, cut, bg);
  EXPECT_LE(max_diff(a, b), 1e-12);
}

// ---------------------------------------------------------------------------
// smallness radius

TEST(SmallnessRadius, ConstantMetricTakesLargestRadius) {
  GridSpec<3> grid(16, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  const auto r = smallness_radius(MetricField<3>::identity(grid), bg, 1e-6);
  EXPECT_TRUE(r.found);
  EXPECT_DOUBLE_EQ(r.radius, 0.25 - grid.dx());
}

TEST(SmallnessRadius, ShrinksWithSpikeAmplitude) {
  GridSpec<3> grid(32, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  std::vector<double> radii;
  for (double amp : {0.1, 1.0, 10.0}) {
    const auto r = smallness_radius(spike_metric(grid, amp, 0.06), bg, 20.0);
    radii.push_back(r.found ? r.radius : 0.0);
  }
  EXPECT_GE(radii[0], radii[1]);
  EXPECT_GE(radii[1], radii[2]);
  EXPECT_GT(radii[0], radii[2]);
}

TEST(SmallnessRadius, HalvingEpsNeverIncreasesRadius) {
  GridSpec<3> grid(32, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  const auto g = spike_metric(grid, 1.0, 0.06);
  double prev = std::numeric_limits<double>::infinity();
  for (double eps = 1.0; eps > 1e-4; eps *= 0.5) {
    const auto r = smallness_radius(g, bg, eps);
    const double rad = r.found ? r.radius : 0.0;
    EXPECT_LE(rad, prev) << "eps=" << eps;
    prev = rad;
  }
}

// ---------------------------------------------------------------------------
// presets

TEST(Presets, EveryKindReportsFiniteBound) {
  GridSpec<3> grid(16, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  for (const std::string kind : {"loglog", "torus_bump", "conformal", "constant"}) {
    RoughMetricSpec spec;
    spec.kind = kind;
    const auto gm = generate_metric<3>(spec, grid, bg);
    EXPECT_TRUE(std::isfinite(gm.a)) << kind;
    EXPECT_GE(gm.a, 1.0) << kind;
    EXPECT_DOUBLE_EQ(gm.a, two_sided_bound(gm.g, bg)) << kind;
  }
  RoughMetricSpec ll;
  ll.kind = "loglog";
  EXPECT_LE(generate_metric<3>(ll, grid, bg).a, 3.0 + 1e-12);
  RoughMetricSpec bad;
  bad.kind = "mystery";
  EXPECT_THROW(generate_metric<3>(bad, grid, bg), DegenerateParameters);
}

TEST(Presets, LogLogCutoffFromParameters) {
  GridSpec<3> grid(32, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  RoughMetricSpec spec;
  spec.kind = "loglog";
  spec.use_cutoff = true;
  spec.params = {{"cutoff_R", 0.1}, {"cutoff_C", 2.0}};
  const auto g = generate_metric<3>(spec, grid, bg).g;
  const Vec<3> c = Vec<3>::Constant(0.5);
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid.displacement(c, grid.position(i)).norm() >= 0.2) {
      EXPECT_EQ(g.at(i), Mat<3>::Identity());
    }
}
