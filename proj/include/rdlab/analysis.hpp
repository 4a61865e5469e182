#ifndef RDLAB_ANALYSIS_HPP
#define RDLAB_ANALYSIS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "rdlab/curvature.hpp"
#include "rdlab/deturck.hpp"

namespace rdlab {

// ---------------------------------------------------------------------------
// ODE comparison

/// Forcing Z tabulated on increasing times in (0, T], linear in between.
/// On (0, s_1] Z continues the first segment down to s = 0 (clamped at 0); the bound is linear in the table
/// whenever that clamp is inactive.
struct OdeProblem {
  double eps = 0.5;
  std::vector<double> times;
  std::vector<double> values;

  double T() const { return times.empty() ? 0.0 : times.back(); }

  void validate() const {
    if (!(eps < 1.0)) throw std::invalid_argument("ode exponent must be < 1");
    if (times.size() < 2 || times.size() != values.size()) throw std::invalid_argument("forcing table needs >= 2 rows");
    if (!(times.front() > 0.0)) throw std::invalid_argument("forcing table starts after 0");
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (i > 0 && !(times[i] > times[i - 1])) throw std::invalid_argument("forcing times must increase");
      if (!(values[i] >= 0.0) || !std::isfinite(values[i])) throw std::invalid_argument("forcing must be finite, >= 0");
    }
  }

  double z0() const {
    const double slope = (values[1] - values[0]) / (times[1] - times[0]);
    return std::max(0.0, values[0] - slope * times[0]);
  }

  double Z(double s) const {
    if (s <= times.front()) return z0() + (values[0] - z0()) * (s / times.front());
    if (s >= times.back()) return values.back();
    const auto it = std::upper_bound(times.begin(), times.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - times.begin());
    const double w = (s - times[i - 1]) / (times[i] - times[i - 1]);
    return (1.0 - w) * values[i - 1] + w * values[i];
  }

  /// Samples fn on a geometric grid of `points` times from t_min to T.
  static OdeProblem tabulate(const std::function<double(double)>& fn, double eps, double T, int points = 64,
                             double t_min = 1e-9) {
    OdeProblem p;
    p.eps = eps;
    for (int i = 0; i < points; ++i) {
      const double t = t_min * std::pow(T / t_min, static_cast<double>(i) / (points - 1));
      p.times.push_back(i == points - 1 ? T : t);
      p.values.push_back(fn(p.times.back()));
    }
    return p;
  }
};

namespace detail {

/// int_a^b (z_a + (z_b - z_a)(s - a)/(b - a)) s^{-eps} ds, exact.
inline double linear_panel(double a, double b, double za, double zb, double eps) {
  const double beta = (zb - za) / (b - a);
  const double alpha = za - beta * a;
  const double e1 = 1.0 - eps, e2 = 2.0 - eps;
  return alpha * (std::pow(b, e1) - std::pow(a, e1)) / e1 + beta * (std::pow(b, e2) - std::pow(a, e2)) / e2;
}

}  // namespace detail

/// t^eps * int_0^t Z(s) s^{-eps} ds for the tabulated forcing.
inline double ode_bound(const OdeProblem& p, double t) {
  p.validate();
  if (!(t > 0.0) || t > p.T() * (1.0 + 1e-12)) throw std::invalid_argument("ode_bound needs t in (0, T]");
  double acc = 0.0;
  double a = 0.0, za = p.z0();
  for (std::size_t i = 0; i < p.times.size() && a < t; ++i) {
    const double b = std::min(p.times[i], t);
    const double zb = p.Z(b);
    acc += detail::linear_panel(a, b, za, zb, p.eps);
    a = b;
    za = zb;
  }
  return std::pow(t, p.eps) * acc;
}

/// Same bound for a bounded callable forcing. The substitution s = t v^{1/(1-eps)} removes the endpoint
/// singularity: the bound becomes t/(1-eps) * int_0^1 Z(t v^{1/(1-eps)}) dv.
inline double ode_bound(const std::function<double(double)>& Z, double eps, double t) {
  if (!(eps < 1.0)) throw std::invalid_argument("ode exponent must be < 1");
  if (!(t > 0.0)) throw std::invalid_argument("ode_bound needs t > 0");
  const double q = 1.0 / (1.0 - eps);
  auto f = [&](double v) { return Z(t * std::pow(v, q)); };
  const double I = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, 1.0, 15, 1e-13);
  return t * q * I;
}

struct OdeComparison {
  std::vector<double> times;
  std::vector<double> f;
  std::vector<double> bound;
  double max_ratio = 0.0;  // max f / bound over samples with bound > 0
  bool pass = false;
};

/// RK4 in log t for f' = (eps/t) f + Z(t), f(t0) = 0; compares with ode_bound at `samples` times.
inline OdeComparison ode_comparison_test(const OdeProblem& p, double t0 = 1e-8, int samples = 20,
                                         int steps_per_sample = 400, double rel_tol = 1e-6) {
  p.validate();
  if (!(t0 > 0.0) || !(t0 < p.T())) throw std::invalid_argument("t0 must be in (0, T)");
  // tau = log t: df/dtau = eps f + t Z(t)
  auto rhs = [&](double tau, double f) {
    const double t = std::exp(tau);
    return p.eps * f + t * p.Z(t);
  };
  const double tau0 = std::log(t0), tau1 = std::log(p.T());
  const int steps = samples * steps_per_sample;
  const double h = (tau1 - tau0) / steps;
  OdeComparison out;
  double f = 0.0;
  out.pass = true;
  for (int s = 1; s <= steps; ++s) {
    const double tau = tau0 + (s - 1) * h;
    const double k1 = rhs(tau, f);
    const double k2 = rhs(tau + 0.5 * h, f + 0.5 * h * k1);
    const double k3 = rhs(tau + 0.5 * h, f + 0.5 * h * k2);
    const double k4 = rhs(tau + h, f + h * k3);
    f += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (s % steps_per_sample) continue;
    const double t = s == steps ? p.T() : std::exp(tau0 + s * h);
    const double b = ode_bound(p, t);
    out.times.push_back(t);
    out.f.push_back(f);
    out.bound.push_back(b);
    if (b > 0.0) out.max_ratio = std::max(out.max_ratio, f / b);
    if (f > b * (1.0 + rel_tol) + std::numeric_limits<double>::min()) out.pass = false;
  }
  return out;
}

// ---------------------------------------------------------------------------
// pointwise norm comparisons

using Eigen::MatrixXd;

/// One draw: metrics g, l on V, h, u on Y; S (rows alpha on Y, cols i on V), T covariant, N contravariant.
struct EnsembleMember {
  MatrixXd g, l, h, u, S, T, N;
};

namespace detail {

inline MatrixXd random_spd(int n, std::mt19937_64& rng, double max_cond) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = gauss(rng);
  const MatrixXd Q = Eigen::HouseholderQR<MatrixXd>(A).householderQ();
  Eigen::VectorXd lam(n);
  const double scale = std::exp(2.0 * unif(rng));
  for (int i = 0; i < n; ++i) lam(i) = scale * std::pow(max_cond, unif(rng));
  MatrixXd m = Q * lam.asDiagonal() * Q.transpose();
  return 0.5 * (m + m.transpose());
}

inline MatrixXd random_matrix(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = gauss(rng);
  return A;
}

inline std::mt19937_64 member_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Seeded random ensemble; member i depends only on (seed, i).
struct SpdEnsemble {
  int n = 4;
  std::uint64_t seed = 0;
  double max_cond = 1e3;
  std::vector<EnsembleMember> members;

  static EnsembleMember draw(int n, std::uint64_t seed, std::uint64_t index, double max_cond = 1e3) {
    auto rng = detail::member_rng(seed, index);
    EnsembleMember m;
    m.g = detail::random_spd(n, rng, max_cond);
    m.l = detail::random_spd(n, rng, max_cond);
    m.h = detail::random_spd(n, rng, max_cond);
    m.u = detail::random_spd(n, rng, max_cond);
    m.S = detail::random_matrix(n, rng);
    m.T = detail::random_matrix(n, rng);
    m.N = detail::random_matrix(n, rng);
    return m;
  }

  static SpdEnsemble generate(int n, std::size_t count, std::uint64_t seed, double max_cond = 1e3) {
    SpdEnsemble e{n, seed, max_cond, std::vector<EnsembleMember>(count)};
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i)
      e.members[i] = draw(n, seed, static_cast<std::uint64_t>(i), max_cond);
    return e;
  }
};

/// Tensor norms written basis-free.
namespace norms {

/// |S|^2_{h,l} = h^{ab} S_a^i S_b^j l_ij
inline double mixed2(const MatrixXd& S, const MatrixXd& h, const MatrixXd& l) {
  return (h.llt().solve(S) * l * S.transpose()).trace();
}
/// |T|^2_g = g^{ik} g^{jl} T_ij T_kl
inline double covariant2(const MatrixXd& T, const MatrixXd& g) {
  const auto llt = g.llt();
  return (llt.solve(T) * llt.solve(T.transpose())).trace();
}
/// |N|^2_g = g_ik g_jl N^ij N^kl
inline double contravariant2(const MatrixXd& N, const MatrixXd& g) { return (g * N * g * N.transpose()).trace(); }

}  // namespace norms

inline constexpr int kNormInequalities = 5;

/// (lhs, rhs) of the five comparisons, constant 1:
///   0: |S|^2_{h,l} <= |S|^2_{h,g} (1 + |l|^2_g)
///   1: |S|^2_{h,l} <= |S|^2_{u,l} (1 + |u|^2_h)
///   2: |T|^2_g <= |T|^2_l |l|^2_g
///   3: |N|^2_g <= |N|^2_l |g|^2_l
///   4: det g / det l <= |g|^n_l
inline std::array<std::pair<double, double>, kNormInequalities> norm_sides(const EnsembleMember& m) {
  const int n = static_cast<int>(m.g.rows());
  const double l_g = norms::covariant2(m.l, m.g);
  const double u_h = norms::covariant2(m.u, m.h);
  const double g_l = norms::covariant2(m.g, m.l);
  const double shl = norms::mixed2(m.S, m.h, m.l);
  return {{{shl, norms::mixed2(m.S, m.h, m.g) * (1.0 + l_g)},
           {shl, norms::mixed2(m.S, m.u, m.l) * (1.0 + u_h)},
           {norms::covariant2(m.T, m.g), norms::covariant2(m.T, m.l) * l_g},
           {norms::contravariant2(m.N, m.g), norms::contravariant2(m.N, m.l) * g_l},
           {m.g.determinant() / m.l.determinant(), std::pow(g_l, 0.5 * n)}}};
}

/// Change of bases: P on Y, Q on V (columns are the new basis vectors).
inline EnsembleMember change_basis(const EnsembleMember& m, const MatrixXd& P, const MatrixXd& Q) {
  const MatrixXd Qi = Q.inverse();
  EnsembleMember o;
  o.g = Q.transpose() * m.g * Q;
  o.l = Q.transpose() * m.l * Q;
  o.h = P.transpose() * m.h * P;
  o.u = P.transpose() * m.u * P;
  o.S = P.transpose() * m.S * Qi.transpose();
  o.T = Q.transpose() * m.T * Q;
  o.N = Qi * m.N * Qi.transpose();
  return o;
}

struct NormComparisonReport {
  std::size_t count = 0;
  std::array<double, kNormInequalities> max_ratio{};
  std::array<std::size_t, kNormInequalities> worst_member{};
  double overall = 0.0;
  double tol = 1e-10;
  bool pass = false;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "inequality,max_ratio,worst_member\n";
    for (int i = 0; i < kNormInequalities; ++i) os << i << ',' << max_ratio[i] << ',' << worst_member[i] << '\n';
    return os.str();
  }
};

inline NormComparisonReport norm_comparison_suite(const SpdEnsemble& e, double tol = 1e-10) {
  NormComparisonReport r;
  r.count = e.members.size();
  r.tol = tol;
  std::vector<std::array<double, kNormInequalities>> ratios(e.members.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(e.members.size()); ++i) {
    const auto s = norm_sides(e.members[i]);
    for (int q = 0; q < kNormInequalities; ++q) ratios[i][q] = s[q].first / s[q].second;
  }
  for (std::size_t i = 0; i < ratios.size(); ++i)
    for (int q = 0; q < kNormInequalities; ++q)
      if (ratios[i][q] > r.max_ratio[q]) {
        r.max_ratio[q] = ratios[i][q];
        r.worst_member[q] = i;
      }
  r.overall = *std::max_element(r.max_ratio.begin(), r.max_ratio.end());
  r.pass = r.overall <= 1.0 + tol;
  return r;
}

// ---------------------------------------------------------------------------
// integral chains

/// Discrete measure space: point weights plus per-point g, l, T, N.
struct DiscreteSpace {
  std::vector<double> weights;
  std::vector<EnsembleMember> points;  // h, u, S unused

  static DiscreteSpace random(int n, int size, std::uint64_t seed, std::uint64_t index, double max_cond = 1e3) {
    auto rng = detail::member_rng(seed, index);
    std::uniform_real_distribution<double> w(0.1, 1.0);
    DiscreteSpace d;
    for (int k = 0; k < size; ++k) {
      d.weights.push_back(w(rng));
      EnsembleMember m;
      m.g = detail::random_spd(n, rng, max_cond);
      m.l = detail::random_spd(n, rng, max_cond);
      m.T = detail::random_matrix(n, rng);
      m.N = detail::random_matrix(n, rng);
      d.points.push_back(std::move(m));
    }
    return d;
  }
};

/// Successive members of the chain for T (covariant) or N (contravariant):
///   int |X|^p_g dg <= int |A|^p |X|^p_l dg <= (int |A|^{2p} dg)^{1/2} (int |X|^{2p}_l dg)^{1/2}
///   = (..)^{1/2} (int |X|^{2p}_l (dg/dl) dl)^{1/2} <= (..)^{1/2} (int |X|^{4p}_l dl)^{1/4} (int (dg/dl) dg)^{1/4}
///   <= (..)^{1/2} (int |X|^{4p}_l dl)^{1/4} (int |g|^{n/2}_l dg)^{1/4}
/// with A = |l|_g for T and A = |g|_l for N.
inline std::array<double, 6> integral_chain(const DiscreteSpace& d, double p, bool contravariant) {
  std::array<double, 9> s{};
  for (std::size_t k = 0; k < d.points.size(); ++k) {
    const auto& m = d.points[k];
    const int n = static_cast<int>(m.g.rows());
    const double dg = std::sqrt(m.g.determinant()) * d.weights[k];
    const double dl = std::sqrt(m.l.determinant()) * d.weights[k];
    const double xg = std::sqrt(contravariant ? norms::contravariant2(m.N, m.g) : norms::covariant2(m.T, m.g));
    const double xl = std::sqrt(contravariant ? norms::contravariant2(m.N, m.l) : norms::covariant2(m.T, m.l));
    const double a = std::sqrt(contravariant ? norms::covariant2(m.g, m.l) : norms::covariant2(m.l, m.g));
    const double gl = std::sqrt(norms::covariant2(m.g, m.l));
    s[0] += std::pow(xg, p) * dg;
    s[1] += std::pow(a * xl, p) * dg;
    s[2] += std::pow(a, 2 * p) * dg;
    s[3] += std::pow(xl, 2 * p) * dg;
    s[4] += std::pow(xl, 2 * p) * (dg / dl) * dl;
    s[5] += std::pow(xl, 4 * p) * dl;
    s[6] += (dg / dl) * dg;
    s[7] += std::pow(gl, 0.5 * n) * dg;
  }
  return {s[0],
          s[1],
          std::sqrt(s[2]) * std::sqrt(s[3]),
          std::sqrt(s[2]) * std::sqrt(s[4]),
          std::sqrt(s[2]) * std::pow(s[5], 0.25) * std::pow(s[6], 0.25),
          std::sqrt(s[2]) * std::pow(s[5], 0.25) * std::pow(s[7], 0.25)};
}

struct IntegralHolderReport {
  std::vector<double> ps;
  std::size_t spaces = 0;
  double max_link_ratio = 0.0;   // max over links chain[i] / chain[i+1]
  double max_total_ratio = 0.0;  // max chain[0] / chain[5]
  double tol = 1e-10;
  bool pass = false;
};

inline IntegralHolderReport integral_holder_suite(int n, std::size_t spaces, int points, std::vector<double> ps,
                                                  std::uint64_t seed, double tol = 1e-10) {
  for (double p : ps)
    if (!(p >= 1.0)) throw std::invalid_argument("integral chain needs p >= 1");
  IntegralHolderReport r;
  r.ps = ps;
  r.spaces = spaces;
  r.tol = tol;
  std::vector<std::pair<double, double>> worst(spaces, {0.0, 0.0});
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(spaces); ++i) {
    const auto d = DiscreteSpace::random(n, points, seed, static_cast<std::uint64_t>(i));
    for (double p : ps)
      for (bool contra : {false, true}) {
        const auto c = integral_chain(d, p, contra);
        for (int k = 0; k < 5; ++k) worst[i].first = std::max(worst[i].first, c[k] / c[k + 1]);
        worst[i].second = std::max(worst[i].second, c[0] / c[5]);
      }
  }
  for (const auto& w : worst) {
    r.max_link_ratio = std::max(r.max_link_ratio, w.first);
    r.max_total_ratio = std::max(r.max_total_ratio, w.second);
  }
  r.pass = r.max_link_ratio <= 1.0 + tol && r.max_total_ratio <= 1.0 + tol;
  return r;
}

// ---------------------------------------------------------------------------
// scalar curvature floor

struct ScalarFloorRow {
  double t = 0.0;
  double min_R = 0.0;
  double phi = 0.0;  // int (R - k)_-^2 dg
  double psi = 0.0;  // e^{-kt} phi
};

struct ScalarFloorReport {
  double k = 0.0;
  double floor_tol = 0.0;
  double rel_slack = 1e-3;
  std::vector<ScalarFloorRow> rows;
  double worst_deficit = 0.0;  // max_t (k - min R(t)), clamped at 0
  bool violation_at_start = false;
  bool floor_held = false;
  bool psi_monotone = false;
  double max_psi_increase = 0.0;  // relative to the slack scale
  bool pass = false;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "t,min_R,phi,psi\n";
    for (const auto& r : rows) os << r.t << ',' << r.min_R << ',' << r.phi << ',' << r.psi << '\n';
    return os.str();
  }
};

/// Floor check "R >= k - floor_tol" and monotonicity of psi = e^{-kt} int (R - k)_-^2 dg along a trajectory.
/// Increases of psi are measured against max(psi, k^2 vol(g0)) with relative slack `rel_slack`.
template <int Dim>
ScalarFloorReport scalar_floor_monitor(const std::vector<Snapshot<Dim>>& traj, double k, double floor_tol = 0.0,
                                       double rel_slack = 1e-3, FdOrder order = FdOrder::fourth) {
  ScalarFloorReport rep;
  rep.k = k;
  rep.floor_tol = floor_tol;
  rep.rel_slack = rel_slack;
  double vol0 = 0.0;
  for (const auto& snap : traj) {
    const auto& grid = snap.g.grid();
    const auto R = scalar_curvature(snap.g, order);
    ScalarFloorRow row{snap.t, std::numeric_limits<double>::infinity(), 0.0, 0.0};
    double vol = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double dv = std::sqrt(snap.g.at(i).determinant()) * grid.cell_volume();
      vol += dv;
      row.min_R = std::min(row.min_R, R(0, i));
      const double neg = std::min(0.0, R(0, i) - k);
      row.phi += neg * neg * dv;
    }
    if (rep.rows.empty()) vol0 = vol;
    row.psi = std::exp(-k * snap.t) * row.phi;
    rep.rows.push_back(row);
    rep.worst_deficit = std::max(rep.worst_deficit, k - row.min_R);
  }
  rep.violation_at_start = !rep.rows.empty() && rep.rows.front().min_R < k - floor_tol;
  rep.floor_held = rep.worst_deficit <= floor_tol;
  const double scale_floor = k * k * vol0;
  rep.psi_monotone = true;
  for (std::size_t i = 1; i < rep.rows.size(); ++i) {
    const double scale = std::max(rep.rows[i - 1].psi, scale_floor);
    const double inc = rep.rows[i].psi - rep.rows[i - 1].psi;
    if (scale > 0.0) rep.max_psi_increase = std::max(rep.max_psi_increase, inc / scale);
    if (inc > rel_slack * scale) rep.psi_monotone = false;
  }
  rep.pass = !rep.violation_at_start && rep.floor_held && rep.psi_monotone;
  return rep;
}

}  // namespace rdlab

#endif  // RDLAB_ANALYSIS_HPP
