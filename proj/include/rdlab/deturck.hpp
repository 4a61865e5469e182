#ifndef RDLAB_DETURCK_HPP
#define RDLAB_DETURCK_HPP

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rdlab/calculus.hpp"

namespace rdlab {

/// Second-order and quadratic gradient part of the Ricci-DeTurck right-hand side at one node,
/// from a covariant jet and G = g^{-1}.
template <int Dim>
Mat<Dim> deturck_rhs_at(const MetricJet<Dim>& jet, const Mat<Dim>& G) {
  Mat<Dim> out = Mat<Dim>::Zero();
  for (int a = 0; a < Dim; ++a)
    for (int b = 0; b < Dim; ++b) out += G(a, b) * jet.dd[a][b];

  const auto& M = jet.d;
  std::array<Mat<Dim>, Dim> MG, GMG;
  for (int k = 0; k < Dim; ++k) {
    MG[k] = M[k] * G;
    GMG[k] = G * MG[k];
  }
  // Z[b](j,q) = G^{ab} (M_a G)(j,q)
  std::array<Mat<Dim>, Dim> Z;
  for (int b = 0; b < Dim; ++b) {
    Z[b].setZero();
    for (int a = 0; a < Dim; ++a) Z[b] += G(a, b) * MG[a];
  }
  Mat<Dim> quad;
  for (int i = 0; i < Dim; ++i)
    for (int j = i; j < Dim; ++j) {
      double t1 = (MG[i] * MG[j]).trace();
      double t23 = 0.0, t4 = 0.0, t5 = 0.0;
      for (int b = 0; b < Dim; ++b)
        for (int q = 0; q < Dim; ++q) {
          t23 += Z[b](j, q) * (M[q](i, b) - M[b](i, q));
          t4 += GMG[j](q, b) * M[b](i, q);
          t5 += GMG[i](q, b) * M[b](j, q);
        }
      quad(i, j) = quad(j, i) = 0.5 * t1 + t23 - t4 - t5;
    }
  return out + quad;
}

/// Full right-hand side lattice of the Ricci-DeTurck h-flow.
template <int Dim>
MetricField<Dim> deturck_rhs(const MetricField<Dim>& g, const BackgroundGeometry<Dim>& bg,
                             FdOrder order = FdOrder::fourth) {
  const auto& grid = g.grid();
  MetricField<Dim> out(grid);
  JetBuilder<Dim> jets(g, bg, order);
  std::size_t bad_node = grid.size();
  double bad_lambda = 0.0;
  for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
    const auto jet = jets(idx, m);
    Eigen::LLT<Mat<Dim>> llt(jet.g);
    if (llt.info() != Eigen::Success) {
#pragma omp critical
      if (idx < bad_node) {
        bad_node = idx;
        bad_lambda = Eigen::SelfAdjointEigenSolver<Mat<Dim>>(jet.g).eigenvalues()(0);
      }
      return;
    }
    const Mat<Dim> G = llt.solve(Mat<Dim>::Identity());
    Mat<Dim> r = deturck_rhs_at(jet, G);
    if (!bg.flat) {
      const Mat<Dim> S = jet.g * bg.h_inv.at(idx);
      Mat<Dim> T = Mat<Dim>::Zero();
      for (int j = 0; j < Dim; ++j)
        for (int q = 0; q < Dim; ++q)
          for (int k = 0; k < Dim; ++k)
            for (int l = 0; l < Dim; ++l)
              T(j, q) += G(k, l) * bg.riemann(((j * Dim + k) * Dim + q) * Dim + l, idx);
      const Mat<Dim> ST = S * T.transpose();
      r += ST + ST.transpose();
    }
    out.set(idx, r);
  });
  if (bad_node < grid.size()) throw NonPositiveDefinite(bad_node, bad_lambda);
  return out;
}

/// V^a = -g^{bc} (Gamma(g) - Gamma(h))^a_{bc}, evaluated through background-covariant derivatives.
/// `sign` = -1 flips the convention (used only by the sign-discrimination check).
template <int Dim>
Field<Dim> deturck_vector_field(const MetricField<Dim>& g, const BackgroundGeometry<Dim>& bg,
                                FdOrder order = FdOrder::fourth, double sign = 1.0) {
  const auto& grid = g.grid();
  Field<Dim> v(grid, TensorShape::vector());
  JetBuilder<Dim> jets(g, bg, order);
  for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
    const auto jet = jets(idx, m, false);
    const Mat<Dim> G = jet.g.inverse();
    // lowered contraction w_k = g^{bc} (nabla_b g_ck - 1/2 nabla_k g_bc)
    Vec<Dim> w;
    for (int k = 0; k < Dim; ++k) {
      double s = 0.0;
      for (int b = 0; b < Dim; ++b)
        for (int c = 0; c < Dim; ++c) s += G(b, c) * (jet.d[b](c, k) - 0.5 * jet.d[k](b, c));
      w[k] = s;
    }
    const Vec<Dim> up = -sign * (G * w);
    for (int a = 0; a < Dim; ++a) v(a, idx) = up[a];
  });
  return v;
}

// ---------------------------------------------------------------------------
// time stepping

enum class Integrator { euler, rk4 };

struct StepperConfig {
  double cfl = 0.2;
  double max_dt = 1e-3;
  Integrator integrator = Integrator::euler;
  double abort_a = 0.0;  // <= 0: evolve uses 400 a(g0); step alone runs unguarded
  std::optional<double> forced_dt;  // bypasses the CFL rule; test hook
  int max_halvings = 8;
};

template <int Dim>
struct FlowState {
  MetricField<Dim> g;
  double t = 0.0;
  long step_count = 0;
  double last_dt = 0.0;
  double a_seen = 1.0;
  int last_retries = 0;
};

/// Lambda = max over nodes of lambda_max(g^{-1}) in the chart.
template <int Dim>
double max_inverse_eigenvalue(const MetricField<Dim>& g) {
  std::vector<double> lam(g.nodes());
  for_each_node(g.grid(), [&](std::size_t idx, const auto&) {
    lam[idx] = 1.0 / Eigen::SelfAdjointEigenSolver<Mat<Dim>>(g.at(idx), Eigen::EigenvaluesOnly).eigenvalues()(0);
  });
  return *std::max_element(lam.begin(), lam.end());
}

template <int Dim>
double cfl_dt(const MetricField<Dim>& g, const StepperConfig& cfg) {
  const double dx = g.grid().dx();
  return std::min(cfg.max_dt, cfg.cfl * dx * dx / (2.0 * Dim * max_inverse_eigenvalue(g)));
}

/// Smallest a with g in [h/a, a h], or +inf when g is not positive definite somewhere.
template <int Dim>
double bound_a_or_inf(const MetricField<Dim>& g, const BackgroundGeometry<Dim>& bg) {
  std::vector<double> av(g.nodes());
  for_each_node(g.grid(), [&](std::size_t idx, const auto&) {
    Vec<Dim> ev;
    if (bg.flat)
      ev = Eigen::SelfAdjointEigenSolver<Mat<Dim>>(g.at(idx), Eigen::EigenvaluesOnly).eigenvalues();
    else
      ev = Eigen::GeneralizedSelfAdjointEigenSolver<Mat<Dim>>(g.at(idx), bg.h.at(idx), Eigen::EigenvaluesOnly)
               .eigenvalues();
    av[idx] = ev(0) > 0.0 ? std::max({1.0, ev(Dim - 1), 1.0 / ev(0)}) : std::numeric_limits<double>::infinity();
  });
  return *std::max_element(av.begin(), av.end());
}

namespace detail {

template <int Dim>
std::optional<MetricField<Dim>> try_advance(const MetricField<Dim>& g, const BackgroundGeometry<Dim>& bg, double dt,
                                            Integrator integ) {
  try {
    if (integ == Integrator::euler) {
      MetricField<Dim> out = g;
      out.axpy(dt, deturck_rhs(g, bg));
      return out;
    }
    const auto k1 = deturck_rhs(g, bg);
    MetricField<Dim> tmp = g;
    tmp.axpy(0.5 * dt, k1);
    const auto k2 = deturck_rhs(tmp, bg);
    tmp = g;
    tmp.axpy(0.5 * dt, k2);
    const auto k3 = deturck_rhs(tmp, bg);
    tmp = g;
    tmp.axpy(dt, k3);
    const auto k4 = deturck_rhs(tmp, bg);
    MetricField<Dim> out = g;
    out.axpy(dt / 6.0, k1);
    out.axpy(dt / 3.0, k2);
    out.axpy(dt / 3.0, k3);
    out.axpy(dt / 6.0, k4);
    return out;
  } catch (const NonPositiveDefinite&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// One explicit step. `limit_dt` caps dt (used to land on sample times).
template <int Dim>
FlowState<Dim> step(const FlowState<Dim>& s, const StepperConfig& cfg, const BackgroundGeometry<Dim>& bg,
                     double limit_dt = std::numeric_limits<double>::infinity()) {
  if (!(cfg.cfl > 0.0)) throw std::invalid_argument("cfl must be > 0");
  double dt = cfg.forced_dt ? *cfg.forced_dt : cfl_dt(s.g, cfg);
  dt = std::min(dt, limit_dt);
  bool blew_up = false;
  double a_last = 0.0;
  for (int attempt = 0; attempt <= cfg.max_halvings; ++attempt, dt *= 0.5) {
    auto next = detail::try_advance(s.g, bg, dt, cfg.integrator);
    if (!next) continue;
    const double a = bound_a_or_inf(*next, bg);
    if (!std::isfinite(a)) continue;
    if (cfg.abort_a > 0.0 && a > cfg.abort_a) {
      blew_up = true;
      a_last = a;
      continue;
    }
    FlowState<Dim> out{std::move(*next), s.t + dt, s.step_count + 1, dt, std::max(s.a_seen, a), attempt};
    return out;
  }
  if (blew_up) throw BlowUpGuard(a_last, cfg.abort_a);
  throw StepFailure("step failed after " + std::to_string(cfg.max_halvings) + " halvings at t=" + std::to_string(s.t));
}

template <int Dim>
struct Snapshot {
  double t;
  MetricField<Dim> g;
};

template <int Dim>
struct EvolveRecord {
  double t;
  double lambda_min;
  double lambda_max;
  double a;
  long steps;
};

template <int Dim>
struct EvolveResult {
  std::vector<Snapshot<Dim>> trajectory;  // one per sample time, starting with t = 0
  std::vector<EvolveRecord<Dim>> records;
  FlowState<Dim> final_state;
  std::exception_ptr failure;  // set when the run stopped early
  double a0 = 1.0;
};

/// Geometric schedule T 2^{-(K-k)}, k = 0..K, preceded by 0.
inline std::vector<double> geometric_schedule(double T, int K) {
  std::vector<double> s{0.0};
  if (T <= 0.0) return s;
  for (int k = 0; k <= K; ++k) s.push_back(T * std::ldexp(1.0, k - K));
  return s;
}

/// Advances g0 through every time in `schedule` (nondecreasing, first entry 0), keeping snapshots there only.
template <int Dim>
EvolveResult<Dim> evolve(const MetricField<Dim>& g0, const BackgroundGeometry<Dim>& bg,
                         const std::vector<double>& schedule, const StepperConfig& cfg) {
  EvolveResult<Dim> res;
  FlowState<Dim> s{g0, 0.0, 0, 0.0, 1.0, 0};
  s.a_seen = bound_a_or_inf(g0, bg);
  if (!std::isfinite(s.a_seen)) throw NonPositiveDefinite(0, 0.0);
  res.a0 = s.a_seen;
  StepperConfig run_cfg = cfg;
  if (run_cfg.abort_a <= 0.0) run_cfg.abort_a = 400.0 * res.a0;
  auto record = [&](const FlowState<Dim>& st) {
    auto [lo, hi] = eig_bounds_rel(st.g, bg);
    const double lmin = *std::min_element(lo.raw().begin(), lo.raw().end());
    const double lmax = *std::max_element(hi.raw().begin(), hi.raw().end());
    res.records.push_back({st.t, lmin, lmax, std::max({1.0, lmax, 1.0 / lmin}), st.step_count});
    res.trajectory.push_back({st.t, st.g});
  };
  try {
    for (double target : schedule) {
      if (target < s.t) throw std::invalid_argument("schedule must be nondecreasing");
      while (s.t < target) {
        const double remaining = target - s.t;
        s = step(s, run_cfg, bg, remaining);
        // absorb roundoff so sample times are hit exactly
        if (target - s.t < 1e-12 * std::max(1.0, target)) s.t = target;
      }
      record(s);
    }
  } catch (...) {
    res.failure = std::current_exception();
  }
  res.final_state = std::move(s);
  return res;
}

}  // namespace rdlab

#endif  // RDLAB_DETURCK_HPP
