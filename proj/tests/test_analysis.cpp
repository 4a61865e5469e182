#include <cmath>
#include <random>

#include <boost/math/special_functions/gamma.hpp>
#include <gtest/gtest.h>

#include "rdlab/analysis.hpp"
#include "rdlab/initial_data.hpp"

using namespace rdlab;

namespace {

OdeProblem constant_forcing(double c, double eps, double T = 1.0) {
  return OdeProblem::tabulate([c](double) { return c; }, eps, T, 32);
}

// index-sum oracles, written straight from the coordinate definitions
double brute_covariant2(const MatrixXd& T, const MatrixXd& g) {
  const MatrixXd gi = g.inverse();
  const int n = static_cast<int>(g.rows());
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) s += gi(i, k) * gi(j, l) * T(i, j) * T(k, l);
  return s;
}

double brute_contravariant2(const MatrixXd& N, const MatrixXd& g) {
  const int n = static_cast<int>(g.rows());
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) s += g(i, k) * g(j, l) * N(i, j) * N(k, l);
  return s;
}

double brute_mixed2(const MatrixXd& S, const MatrixXd& h, const MatrixXd& l) {
  const MatrixXd hi = h.inverse();
  const int n = static_cast<int>(h.rows());
  double s = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s += hi(a, b) * S(a, i) * S(b, j) * l(i, j);
  return s;
}

std::vector<Snapshot<3>> conformal_flow(int n, double amp, double k_floor, double T, int K) {
  GridSpec<3> grid(n, 1.0);
  auto bg = BackgroundGeometry<3>::make_flat(grid);
  ConformalProfile<3> p;
  p.amplitude = amp;
  // scale so that the continuum minimum of R is exactly k_floor
  const double scale = conformal_min_scalar(p) / k_floor;
  auto res = evolve(conformal_metric(grid, p, scale), bg, geometric_schedule(T, K), StepperConfig{});
  if (res.failure) std::rethrow_exception(res.failure);
  return res.trajectory;
}

}  // namespace

// ---------------------------------------------------------------------------
// ODE bound

TEST(OdeBound, ConstantForcingMatchesLinearBound) {
  for (double eps : {-0.5, 0.0, 0.25, 0.5, 0.9})
    for (double t : {1e-6, 1e-3, 0.3, 1.0}) {
      const double expect = 2.5 * t / (1.0 - eps);
      EXPECT_NEAR(ode_bound(constant_forcing(2.5, eps), t), expect, 1e-10 * expect);
      EXPECT_NEAR(ode_bound([](double) { return 2.5; }, eps, t), expect, 1e-10 * expect);
    }
}

TEST(OdeBound, ZeroForcing) {
  EXPECT_EQ(ode_bound(constant_forcing(0.0, 0.5), 0.7), 0.0);
  EXPECT_EQ(ode_bound([](double) { return 0.0; }, 0.5, 0.7), 0.0);
}

TEST(OdeBound, LinearForcingClosedForm) {
  auto p = OdeProblem::tabulate([](double s) { return s; }, 0.3, 2.0, 16);
  for (double t : {1e-9, 1e-4, 0.5, 2.0}) {
    const double expect = t * t / (2.0 - 0.3);
    EXPECT_NEAR(ode_bound(p, t), expect, 1e-10 * expect);
    EXPECT_NEAR(ode_bound([](double s) { return s; }, 0.3, t), expect, 1e-10 * expect);
  }
}

TEST(OdeBound, CallableMatchesIncompleteGamma) {
  // Z(s) = e^{-s}: t^eps int_0^t e^{-s} s^{-eps} ds = t^eps gamma(1 - eps, t)
  for (double eps : {0.2, 0.7})
    for (double t : {0.01, 0.8, 3.0}) {
      const double expect = std::pow(t, eps) * boost::math::tgamma_lower(1.0 - eps, t);
      EXPECT_NEAR(ode_bound([](double s) { return std::exp(-s); }, eps, t), expect, 1e-10 * expect);
    }
}

TEST(OdeBound, MonotoneAndAdditive) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  auto a = OdeProblem::tabulate([&](double) { return u(rng); }, 0.4, 1.0, 40);
  auto b = OdeProblem::tabulate([&](double) { return u(rng); }, 0.4, 1.0, 40);
  // flat first segments keep the continuation to s = 0 away from its clamp, where Z -> bound is linear
  a.values[0] = a.values[1];
  b.values[0] = b.values[1];
  auto sum = a;
  for (std::size_t i = 0; i < sum.values.size(); ++i) sum.values[i] += b.values[i];
  double prev = 0.0;
  for (double t : {1e-7, 1e-5, 1e-3, 0.1, 0.5, 1.0}) {
    const double ba = ode_bound(a, t), bb = ode_bound(b, t);
    EXPECT_NEAR(ode_bound(sum, t), ba + bb, 1e-13 * (ba + bb));
    EXPECT_GE(ba, prev);
    prev = ba;
    // monotone in eps for t <= 1
    double pe = 0.0;
    for (double eps : {-0.5, 0.0, 0.4, 0.8}) {
      auto c = a;
      c.eps = eps;
      const double v = ode_bound(c, t);
      EXPECT_GE(v, pe);
      pe = v;
    }
  }
}

TEST(OdeBound, RejectsBadInput) {
  EXPECT_THROW(ode_bound(constant_forcing(1.0, 1.0), 0.5), std::invalid_argument);
  EXPECT_THROW(ode_bound(constant_forcing(1.0, 0.5), 1.5), std::invalid_argument);
  EXPECT_THROW(ode_bound(constant_forcing(1.0, 0.5), 0.0), std::invalid_argument);
  OdeProblem neg = constant_forcing(1.0, 0.5);
  neg.values[3] = -1.0;
  EXPECT_THROW(ode_bound(neg, 0.5), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// ODE comparison

TEST(OdeComparison, UnitForcingHalfExponent) {
  const auto r = ode_comparison_test(constant_forcing(1.0, 0.5));
  ASSERT_EQ(r.times.size(), 20u);
  EXPECT_DOUBLE_EQ(r.times.back(), 1.0);
  EXPECT_NEAR(r.bound.back(), 2.0, 1e-12);
  EXPECT_LE(r.f.back(), 2.0 * (1.0 + 1e-6));
  // the exact solution from t0 = 1e-8 is 2(1 - 1e-4)
  EXPECT_NEAR(r.f.back(), 2.0 * (1.0 - 1e-4), 1e-9);
  EXPECT_TRUE(r.pass);
}

TEST(OdeComparison, ZeroForcingStaysZero) {
  const auto r = ode_comparison_test(constant_forcing(0.0, 0.3));
  for (double f : r.f) EXPECT_EQ(f, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(OdeComparison, RandomPiecewiseForcing) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 5.0), e(-0.5, 0.95);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = OdeProblem::tabulate([&](double) { return u(rng); }, e(rng), 1.0, 24, 1e-9);
    const auto r = ode_comparison_test(p);
    EXPECT_TRUE(r.pass) << "trial " << trial << " max ratio " << r.max_ratio;
  }
}

// ---------------------------------------------------------------------------
// norm comparisons

TEST(NormSuite, TraceFormsMatchIndexSums) {
  const auto e = SpdEnsemble::generate(4, 20, 99);
  for (const auto& m : e.members) {
    EXPECT_NEAR(norms::covariant2(m.T, m.g), brute_covariant2(m.T, m.g), 1e-10 * brute_covariant2(m.T, m.g));
    EXPECT_NEAR(norms::contravariant2(m.N, m.l), brute_contravariant2(m.N, m.l),
                1e-10 * brute_contravariant2(m.N, m.l));
    EXPECT_NEAR(norms::mixed2(m.S, m.h, m.l), brute_mixed2(m.S, m.h, m.l), 1e-10 * brute_mixed2(m.S, m.h, m.l));
  }
}

TEST(NormSuite, IdentityInputsAreStrict) {
  const int n = 4;
  const MatrixXd I = MatrixXd::Identity(n, n);
  EnsembleMember m{I, I, I, I, I, I, I};
  const auto s = norm_sides(m);
  EXPECT_DOUBLE_EQ(s[0].first / s[0].second, 1.0 / (1.0 + n));
  EXPECT_DOUBLE_EQ(s[2].first / s[2].second, 1.0 / n);
  EXPECT_DOUBLE_EQ(s[4].first / s[4].second, 1.0 / std::pow(n, n / 2.0));
  for (const auto& [lhs, rhs] : s) EXPECT_LT(lhs, rhs);
}

TEST(NormSuite, EqualMetricsGiveInverseDimension) {
  const auto e = SpdEnsemble::generate(3, 10, 5);
  for (auto m : e.members) {
    m.l = m.g;
    const auto s = norm_sides(m);
    EXPECT_NEAR(s[2].first / s[2].second, 1.0 / 3.0, 1e-10);
  }
}

TEST(NormSuite, RandomEnsembleHoldsWithUnitConstant) {
  for (int n : {2, 3, 4}) {
    const auto r = norm_comparison_suite(SpdEnsemble::generate(n, 10000, 2024 + n));
    EXPECT_EQ(r.count, 10000u);
    EXPECT_TRUE(r.pass) << "n=" << n << " overall " << r.overall;
    EXPECT_LE(r.overall, 1.0 + 1e-10);
    EXPECT_GT(r.overall, 0.0);
  }
}

TEST(NormSuite, BasisInvariance) {
  const auto e = SpdEnsemble::generate(4, 100, 7);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> gauss;
  for (const auto& m : e.members) {
    MatrixXd P = MatrixXd::Identity(4, 4), Q = MatrixXd::Identity(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        P(i, j) += 0.4 * gauss(rng);
        Q(i, j) += 0.4 * gauss(rng);
      }
    const auto a = norm_sides(m), b = norm_sides(change_basis(m, P, Q));
    for (int q = 0; q < kNormInequalities; ++q) {
      // the determinant ratio is invariant because both metrics change by the same congruence
      EXPECT_NEAR(b[q].first, a[q].first, 1e-9 * std::abs(a[q].first)) << q;
      EXPECT_NEAR(b[q].second, a[q].second, 1e-9 * std::abs(a[q].second)) << q;
    }
  }
}

TEST(NormSuite, SeededMembersAreReproducible) {
  const auto a = SpdEnsemble::generate(4, 50, 123), b = SpdEnsemble::generate(4, 10, 123);
  for (std::size_t i = 0; i < b.members.size(); ++i) EXPECT_EQ(a.members[i].g, b.members[i].g);
  for (const auto& m : a.members) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m.g);
    EXPECT_GT(es.eigenvalues()(0), 0.0);
    EXPECT_LE(es.eigenvalues()(3) / es.eigenvalues()(0), 1e3 * (1 + 1e-9));
  }
}

// ---------------------------------------------------------------------------
// integral chains

TEST(IntegralChain, SinglePointReducesToPointwise) {
  const auto d = DiscreteSpace::random(4, 1, 3, 0);
  const auto& m = d.points[0];
  for (double p : {1.0, 2.0, 4.0}) {
    const auto c = integral_chain(d, p, false);
    const double pointwise = std::sqrt(norms::covariant2(m.T, m.g)) /
                             (std::sqrt(norms::covariant2(m.l, m.g)) * std::sqrt(norms::covariant2(m.T, m.l)));
    EXPECT_NEAR(c[0] / c[1], std::pow(pointwise, p), 1e-12);
    EXPECT_NEAR(c[1], c[2], 1e-12 * c[1]);  // Cauchy-Schwarz is tight on one point
  }
}

TEST(IntegralChain, ZeroTensorGivesZero) {
  auto d = DiscreteSpace::random(3, 5, 1, 0);
  for (auto& m : d.points) {
    m.T.setZero();
    m.N.setZero();
  }
  for (bool contra : {false, true}) {
    const auto c = integral_chain(d, 2.0, contra);
    EXPECT_EQ(c[0], 0.0);
  }
}

TEST(IntegralChain, MeasureChangeLinkIsAnIdentity) {
  const auto d = DiscreteSpace::random(4, 16, 9, 2);
  const auto c = integral_chain(d, 2.0, true);
  EXPECT_NEAR(c[2], c[3], 1e-12 * c[2]);
}

TEST(IntegralChain, RandomSpacesHoldWithUnitConstant) {
  const auto r = integral_holder_suite(4, 1000, 16, {1.0, 2.0, 4.0}, 31337);
  EXPECT_TRUE(r.pass) << r.max_link_ratio << " " << r.max_total_ratio;
  EXPECT_LE(r.max_total_ratio, 1.0 + 1e-10);
  EXPECT_THROW(integral_holder_suite(4, 1, 2, {0.5}, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// scalar floor

TEST(ScalarFloor, FlatFlowIsZero) {
  GridSpec<3> grid(16, 1.0);
  std::vector<Snapshot<3>> traj;
  for (double t : {0.0, 1e-3, 2e-3}) traj.push_back({t, MetricField<3>::identity(grid)});
  const auto r = scalar_floor_monitor(traj, 0.0);
  for (const auto& row : r.rows) {
    EXPECT_NEAR(row.min_R, 0.0, 1e-10);
    EXPECT_EQ(row.phi, 0.0);
  }
  EXPECT_TRUE(r.pass);
}

TEST(ScalarFloor, ConformalFloorHoldsAndIsStableUnderRefinement) {
  const double k = -1.0;
  std::array<double, 2> C{};
  int i = 0;
  for (int n : {16, 32}) {
    const double dx = 1.0 / n;
    auto traj = conformal_flow(n, 0.1, k, 2e-4, 3);
    const auto r = scalar_floor_monitor(traj, k, 0.5 * dx * dx);
    EXPECT_TRUE(r.pass) << "n=" << n << " deficit " << r.worst_deficit << " psi " << r.max_psi_increase;
    C[i++] = r.worst_deficit / (dx * dx);
  }
  EXPECT_LE(C[1], std::max(1.3 * C[0], 1e-6));
}

TEST(ScalarFloor, NegativeControlDetected) {
  GridSpec<3> grid(16, 1.0);
  ConformalProfile<3> p;
  const double scale = conformal_min_scalar(p) / -2.0;  // min R = -2
  std::vector<Snapshot<3>> traj{{0.0, conformal_metric(grid, p, scale)}};
  const auto r = scalar_floor_monitor(traj, -1.0, 1e-3);
  EXPECT_TRUE(r.violation_at_start);
  EXPECT_FALSE(r.pass);
  EXPECT_GT(r.rows.front().phi, 0.0);
}

TEST(ScalarFloor, CsvHeader) {
  ScalarFloorReport r;
  r.rows.push_back({0.0, -1.0, 0.0, 0.0});
  EXPECT_EQ(r.to_csv().substr(0, 15), "t,min_R,phi,psi");
}
