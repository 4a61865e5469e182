#ifndef RDLAB_DIFFEO_HPP
#define RDLAB_DIFFEO_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "rdlab/deturck.hpp"
#include "rdlab/snapshot.hpp"

namespace rdlab {

template <int Dim>
using VelocityFn = std::function<Vec<Dim>(const Vec<Dim>&, double)>;

/// DeTurck field lattices at sample times; linear in time, multilinear in space, clamped at the ends.
template <int Dim>
struct VelocitySeries {
  std::vector<double> times;
  std::vector<Field<Dim>> fields;

  Vec<Dim> operator()(const Vec<Dim>& x, double t) const {
    if (t <= times.front()) return interpolate_vector(fields.front(), x);
    if (t >= times.back()) return interpolate_vector(fields.back(), x);
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
    const double w = (t - times[k]) / (times[k + 1] - times[k]);
    if (w == 0.0) return interpolate_vector(fields[k], x);
    return (1.0 - w) * interpolate_vector(fields[k], x) + w * interpolate_vector(fields[k + 1], x);
  }

  VelocityFn<Dim> fn() const {
    return [this](const Vec<Dim>& x, double t) { return (*this)(x, t); };
  }
};

/// `sign` = -1 selects the opposite convention; only the sign-discrimination check uses it.
template <int Dim>
VelocitySeries<Dim> velocity_series(const std::vector<Snapshot<Dim>>& traj, const BackgroundGeometry<Dim>& bg,
                                    double sign = 1.0) {
  VelocitySeries<Dim> vs;
  for (const auto& s : traj) {
    if (!vs.times.empty() && !(s.t > vs.times.back())) throw std::invalid_argument("snapshot times must increase");
    vs.times.push_back(s.t);
    vs.fields.push_back(deturck_vector_field(s.g, bg, FdOrder::fourth, sign));
  }
  return vs;
}

/// Classical RK4 for dx/dt = V(x,t) from t0 to t1 in `substeps` equal steps.
template <int Dim>
Vec<Dim> advect(const VelocityFn<Dim>& V, Vec<Dim> x, double t0, double t1, int substeps) {
  const double h = (t1 - t0) / substeps;
  double t = t0;
  for (int i = 0; i < substeps; ++i) {
    const Vec<Dim> k1 = V(x, t);
    const Vec<Dim> k2 = V(x + 0.5 * h * k1, t + 0.5 * h);
    const Vec<Dim> k3 = V(x + 0.5 * h * k2, t + 0.5 * h);
    const Vec<Dim> k4 = V(x + h * k3, t + h);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t = t0 + (i + 1) * h;
  }
  return x;
}

/// Every `factor`-th node of the flow grid.
template <int Dim>
GridSpec<Dim> tracking_grid(const GridSpec<Dim>& flow, int factor = 2) {
  if (flow.n % factor != 0) throw std::invalid_argument("tracking factor must divide points_per_axis");
  return GridSpec<Dim>(flow.n / factor, flow.length);
}

struct DiffeoConfig {
  int substeps = 4;                  // RK4 steps per sample interval
  std::vector<double> inverse_times;  // sample times that get W(t); empty means all
};

/// Phi(t) and W(t) = Phi(t)^{-1} on the tracking grid, stored as periodic displacements.
template <int Dim>
struct DiffeoTrajectory {
  GridSpec<Dim> tracking;
  double anchor = 0.0;
  std::size_t anchor_index = 0;
  std::vector<double> times;
  std::vector<Field<Dim>> phi;       // Phi(t)(x) - x
  std::vector<Field<Dim>> winv;      // W(t)(y) - y
  std::vector<Field<Dim>> jacobian;  // component i*Dim+a: d_a Phi^i
  std::vector<double> composition_error;       // max |W(t)(Phi(t)x) - x|
  std::vector<double> inverse_jacobian_error;  // max |DPhi (DW o Phi) - I|

  Vec<Dim> position(std::size_t k, std::size_t idx) const {
    return tracking.position(idx) + interpolate_vector_at(phi[k], idx);
  }
  Mat<Dim> dphi(std::size_t k, std::size_t idx) const { return jac_at(jacobian[k], idx); }

  bool has_inverse(std::size_t k) const { return !winv[k].raw().empty(); }

  double tol_comp() const {
    double m = 0.0;
    for (double v : composition_error)
      if (std::isfinite(v)) m = std::max(m, v);
    return m;
  }

  static Vec<Dim> interpolate_vector_at(const Field<Dim>& f, std::size_t idx) {
    Vec<Dim> v;
    for (int a = 0; a < Dim; ++a) v[a] = f(a, idx);
    return v;
  }
  static Mat<Dim> jac_at(const Field<Dim>& f, std::size_t idx) {
    Mat<Dim> m;
    for (int i = 0; i < Dim; ++i)
      for (int a = 0; a < Dim; ++a) m(i, a) = f(i * Dim + a, idx);
    return m;
  }
};

namespace detail {

/// D(id + disp) by centred differences on the lattice; periodic displacements need no wrap fix.
template <int Dim>
Field<Dim> jacobian_of_displacement(const Field<Dim>& disp) {
  const auto& grid = disp.grid();
  Field<Dim> out(grid, TensorShape::covariant(2));
  const double inv2dx = 0.5 / grid.dx();
  for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
    for (int a = 0; a < Dim; ++a) {
      auto mp = m, mm = m;
      ++mp[a];
      --mm[a];
      const std::size_t ip = grid.index(mp), im = grid.index(mm);
      for (int i = 0; i < Dim; ++i) out(i * Dim + a, idx) = (i == a ? 1.0 : 0.0) + (disp(i, ip) - disp(i, im)) * inv2dx;
    }
  });
  return out;
}

template <int Dim>
Mat<Dim> interpolate_jacobian(const Field<Dim>& jac, const Vec<Dim>& x) {
  std::array<double, Dim * Dim> v{};
  interpolate_into<Dim>(jac, x, v.data());
  Mat<Dim> m;
  for (int i = 0; i < Dim; ++i)
    for (int a = 0; a < Dim; ++a) m(i, a) = v[i * Dim + a];
  return m;
}

/// Advances `points` from times[from] to times[to] through every intermediate sample time.
template <int Dim>
void advect_through(const VelocityFn<Dim>& V, std::vector<Vec<Dim>>& points, const std::vector<double>& times,
                    std::size_t from, std::size_t to, int substeps) {
  if (from == to) return;
  const auto a = static_cast<std::ptrdiff_t>(from), b = static_cast<std::ptrdiff_t>(to);
  const std::ptrdiff_t dir = b > a ? 1 : -1;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(points.size()); ++p) {
    Vec<Dim> x = points[p];
    for (std::ptrdiff_t k = a; k != b; k += dir) x = advect<Dim>(V, x, times[k], times[k + dir], substeps);
    points[p] = x;
  }
}

}  // namespace detail

/// Integrates dPhi/dt = V(Phi, t) with Phi(S) = id, forward and backward over `times`, plus the inverses W(t).
template <int Dim>
DiffeoTrajectory<Dim> integrate_diffeo(const VelocityFn<Dim>& V, const std::vector<double>& times, double anchor,
                                       const GridSpec<Dim>& tracking, const DiffeoConfig& cfg = {}) {
  const auto it = std::find(times.begin(), times.end(), anchor);
  if (it == times.end()) throw std::invalid_argument("anchor must be one of the sample times");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1])) throw std::invalid_argument("sample times must increase");

  DiffeoTrajectory<Dim> d;
  d.tracking = tracking;
  d.anchor = anchor;
  d.anchor_index = static_cast<std::size_t>(it - times.begin());
  d.times = times;
  const std::size_t K = times.size(), S = d.anchor_index, nodes = tracking.size();
  std::vector<Vec<Dim>> start(nodes);
  for (std::size_t i = 0; i < nodes; ++i) start[i] = tracking.position(i);

  auto to_disp = [&](const std::vector<Vec<Dim>>& pts) {
    Field<Dim> f(tracking, TensorShape::vector());
    for (std::size_t i = 0; i < nodes; ++i)
      for (int a = 0; a < Dim; ++a) f(a, i) = pts[i][a] - start[i][a];
    return f;
  };

  d.phi.assign(K, Field<Dim>(tracking, TensorShape::vector()));
  for (std::ptrdiff_t dir : {1, -1}) {
    auto pts = start;
    std::size_t prev = S;
    for (auto k = static_cast<std::ptrdiff_t>(S); k >= 0 && k < static_cast<std::ptrdiff_t>(K); k += dir) {
      detail::advect_through<Dim>(V, pts, times, prev, static_cast<std::size_t>(k), cfg.substeps);
      d.phi[k] = to_disp(pts);
      prev = static_cast<std::size_t>(k);
    }
  }

  d.winv.resize(K);
  auto wanted = [&](std::size_t k) {
    return cfg.inverse_times.empty() || k == S ||
           std::find(cfg.inverse_times.begin(), cfg.inverse_times.end(), times[k]) != cfg.inverse_times.end();
  };
  for (std::size_t k = 0; k < K; ++k) {
    if (!wanted(k)) continue;
    auto pts = start;
    detail::advect_through<Dim>(V, pts, times, k, S, cfg.substeps);
    d.winv[k] = to_disp(pts);
  }

  d.jacobian.resize(K);
  d.composition_error.assign(K, 0.0);
  d.inverse_jacobian_error.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    d.jacobian[k] = detail::jacobian_of_displacement(d.phi[k]);
    const bool have_inverse = !d.winv[k].raw().empty();
    if (!have_inverse) {
      d.composition_error[k] = d.inverse_jacobian_error[k] = std::numeric_limits<double>::quiet_NaN();
      d.winv[k] = Field<Dim>();
    }
    const auto jw = have_inverse ? detail::jacobian_of_displacement(d.winv[k]) : Field<Dim>();
    std::size_t bad = nodes;
    std::vector<double> comp(nodes), inv(nodes);
    for_each_node(tracking, [&](std::size_t i, const auto&) {
      const Mat<Dim> J = d.dphi(k, i);
      if (!(J.determinant() > 0.0)) {
#pragma omp critical
        bad = std::min(bad, i);
      }
      if (!have_inverse) return;
      const Vec<Dim> y = start[i] + DiffeoTrajectory<Dim>::interpolate_vector_at(d.phi[k], i);
      const Vec<Dim> back = y + interpolate_vector(d.winv[k], y);
      comp[i] = tracking.displacement(start[i], back).norm();
      inv[i] = (J * detail::interpolate_jacobian(jw, y) - Mat<Dim>::Identity()).norm();
    });
    if (bad < nodes) throw SingularJacobian(bad, times[k]);
    if (!have_inverse) continue;
    d.composition_error[k] = *std::max_element(comp.begin(), comp.end());
    d.inverse_jacobian_error[k] = *std::max_element(inv.begin(), inv.end());
  }
  return d;
}

/// Convenience: velocity series from a flow trajectory, tracking grid = every 2nd node.
template <int Dim>
DiffeoTrajectory<Dim> integrate_diffeo(const std::vector<Snapshot<Dim>>& traj, const BackgroundGeometry<Dim>& bg,
                                       double anchor, const DiffeoConfig& cfg = {}, double sign = 1.0) {
  const auto vs = velocity_series(traj, bg, sign);
  return integrate_diffeo<Dim>(vs.fn(), vs.times, anchor, tracking_grid(traj.front().g.grid()), cfg);
}

/// l_ij = D_i Phi^a D_j Phi^b g_ab(Phi), at every tracking node.
template <int Dim>
MetricField<Dim> pullback_metric(const MetricField<Dim>& g, const GridSpec<Dim>& tracking,
                                 const std::function<Vec<Dim>(std::size_t)>& position,
                                 const std::function<Mat<Dim>(std::size_t)>& jac, double t = 0.0) {
  MetricField<Dim> out(tracking);
  std::size_t bad = tracking.size();
  for_each_node(tracking, [&](std::size_t i, const auto&) {
    const Mat<Dim> J = jac(i);
    if (!(std::abs(J.determinant()) > 0.0)) {
#pragma omp critical
      bad = std::min(bad, i);
      return;
    }
    out.set(i, J.transpose() * interpolate_metric(g, position(i)) * J);
  });
  if (bad < tracking.size()) throw SingularJacobian(bad, t);
  return out;
}

template <int Dim>
MetricField<Dim> pullback_metric(const MetricField<Dim>& g, const DiffeoTrajectory<Dim>& d, std::size_t k) {
  return pullback_metric<Dim>(
      g, d.tracking, [&](std::size_t i) { return d.position(k, i); }, [&](std::size_t i) { return d.dphi(k, i); },
      d.times[k]);
}

template <int Dim>
struct PullbackSeries {
  std::vector<double> times;
  std::vector<MetricField<Dim>> ell;
};

/// l(t) = Phi(t)^* g(t) at every sample time; trajectory and diffeo share their time list.
template <int Dim>
PullbackSeries<Dim> pullback_series(const std::vector<Snapshot<Dim>>& traj, const DiffeoTrajectory<Dim>& d) {
  if (traj.size() != d.times.size()) throw std::invalid_argument("trajectory and diffeo sample times differ");
  PullbackSeries<Dim> ps;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    ps.times.push_back(d.times[k]);
    ps.ell.push_back(pullback_metric(traj[k].g, d, k));
  }
  return ps;
}

struct ResidualReport {
  std::vector<double> times;     // interior sample times
  std::vector<double> residual;  // max |d_t l + 2 Rc(l)|
  double max = 0.0;
};

/// Three-point (nonuniform) time difference of l plus twice its Ricci tensor, max-norm per interior time.
template <int Dim>
ResidualReport ricci_flow_residual(const PullbackSeries<Dim>& ps, std::size_t first = 1,
                                   std::size_t last = std::numeric_limits<std::size_t>::max()) {
  if (ps.ell.size() < 3) throw std::invalid_argument("residual needs at least 3 pullback snapshots");
  ResidualReport rep;
  last = std::min(last, ps.ell.size() - 2);
  for (std::size_t k = std::max<std::size_t>(first, 1); k <= last; ++k) {
    const double h1 = ps.times[k] - ps.times[k - 1], h2 = ps.times[k + 1] - ps.times[k];
    const double cm = -h2 / (h1 * (h1 + h2)), c0 = (h2 - h1) / (h1 * h2), cp = h1 / (h2 * (h1 + h2));
    const auto ric = riemann_ricci_scalar(ps.ell[k], {FdOrder::fourth, false}).ricci;
    double worst = 0.0;
    const auto& a = ps.ell[k - 1].raw();
    const auto& b = ps.ell[k].raw();
    const auto& c = ps.ell[k + 1].raw();
    for (std::size_t i = 0; i < a.size(); ++i)
      worst = std::max(worst, std::abs(cm * a[i] + c0 * b[i] + cp * c[i] + 2.0 * ric.raw()[i]));
    rep.times.push_back(ps.times[k]);
    rep.residual.push_back(worst);
    rep.max = std::max(rep.max, worst);
  }
  return rep;
}

/// Chart ball in the tracking grid.
template <int Dim>
std::vector<std::size_t> chart_ball(const GridSpec<Dim>& grid, const std::type_identity_t<Vec<Dim>>& center, double radius) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid.torus_distance(center, grid.position(i)) <= radius * (1.0 + 1e-12)) out.push_back(i);
  return out;
}

namespace detail {

/// Cholesky factor e with l^{-1} = e e^T.
template <int Dim>
Mat<Dim> inverse_frame(const Mat<Dim>& l) {
  return Eigen::LLT<Mat<Dim>>(l.inverse()).matrixL();
}

/// int over nodes of f(node) sqrt(det l(t)) dx^D.
template <int Dim, typename Fn>
double integrate_against(const MetricField<Dim>& lt, const std::vector<std::size_t>& nodes, Fn&& f) {
  double s = 0.0;
  for (auto i : nodes) s += f(i) * std::sqrt(lt.at(i).determinant());
  return s * lt.grid().cell_volume();
}

}  // namespace detail

/// int_Omega |A - B|^p_{l(t)} dl(t); `inverse` compares the inverse metrics (upper slots).
template <int Dim>
double lp_difference(const MetricField<Dim>& lt, const MetricField<Dim>& A, const MetricField<Dim>& B,
                     const std::vector<std::size_t>& omega, double p, bool inverse = false) {
  return detail::integrate_against(lt, omega, [&](std::size_t i) {
    const Mat<Dim> l = lt.at(i);
    Mat<Dim> D = inverse ? Mat<Dim>(A.at(i).inverse() - B.at(i).inverse()) : Mat<Dim>(A.at(i) - B.at(i));
    Mat<Dim> e;
    if (inverse)
      e = Eigen::LLT<Mat<Dim>>(l).matrixL();
    else
      e = detail::inverse_frame(l);
    const double n2 = (e.transpose() * D * e).squaredNorm();
    return std::pow(n2, 0.5 * p);
  });
}

struct LpPair {
  double t, s, value, value_inverse;
};

struct LpReport {
  double p = 2.0;
  std::vector<LpPair> pairs;
  double slope = 0.0;          // least squares through the origin of value against |t-s|
  double slope_inverse = 0.0;
  double quarter_coefficient = 0.0;  // max over r<s<t of int |l(r)-l(s)|^p_{l(t)} / |r-s|^{1/4}
  std::vector<double> cauchy_times;       // dyadic ladder, decreasing
  std::vector<double> cauchy_increments;  // int |l(s_k) - l(s_{k+1})|^p_{l(T)}, ^(1/p)
  bool cauchy_monotone = false;
};

/// Discrete L^p shadows of the Ricci-flow estimates over Omega; `ladder` lists dyadic times (any order).
template <int Dim>
LpReport ricci_lp_checks(const PullbackSeries<Dim>& ps, const std::vector<std::size_t>& omega, double p,
                         std::vector<double> ladder = {}) {
  if (!(p >= 1.0)) throw std::invalid_argument("p must be >= 1");
  LpReport rep;
  rep.p = p;
  const std::size_t K = ps.ell.size();
  double num = 0, den = 0, num_i = 0;
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) {
      if (i == j) continue;
      const double v = lp_difference(ps.ell[i], ps.ell[i], ps.ell[j], omega, p);
      const double vi = lp_difference(ps.ell[i], ps.ell[i], ps.ell[j], omega, p, true);
      const double dt = std::abs(ps.times[i] - ps.times[j]);
      rep.pairs.push_back({ps.times[i], ps.times[j], v, vi});
      num += v * dt;
      num_i += vi * dt;
      den += dt * dt;
    }
  if (den > 0) {
    rep.slope = num / den;
    rep.slope_inverse = num_i / den;
  }
  const auto& lT = ps.ell.back();
  for (std::size_t r = 0; r + 1 < K; ++r)
    for (std::size_t s = r + 1; s + 1 < K; ++s) {
      const double v = lp_difference(lT, ps.ell[r], ps.ell[s], omega, p);
      rep.quarter_coefficient = std::max(rep.quarter_coefficient, v / std::pow(ps.times[s] - ps.times[r], 0.25));
    }
  std::sort(ladder.begin(), ladder.end(), std::greater<>());
  std::vector<std::size_t> idx;
  for (double t : ladder) {
    auto it = std::find(ps.times.begin(), ps.times.end(), t);
    if (it == ps.times.end()) throw std::invalid_argument("ladder time is not a sample time");
    idx.push_back(static_cast<std::size_t>(it - ps.times.begin()));
  }
  for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
    rep.cauchy_times.push_back(ps.times[idx[k]]);
    rep.cauchy_increments.push_back(std::pow(lp_difference(lT, ps.ell[idx[k]], ps.ell[idx[k + 1]], omega, p), 1.0 / p));
  }
  rep.cauchy_monotone = rep.cauchy_increments.size() >= 2;
  for (std::size_t k = 1; k < rep.cauchy_increments.size(); ++k)
    rep.cauchy_monotone = rep.cauchy_monotone && rep.cauchy_increments[k] < rep.cauchy_increments[k - 1];
  return rep;
}

/// int_Omega |nabla^{l(t)} l0|^2_{l(t)} dl(t).
template <int Dim>
double w12_integral(const MetricField<Dim>& lt, const MetricField<Dim>& l0, const std::vector<std::size_t>& omega) {
  const auto gam = christoffel(lt);
  std::array<Field<Dim>, Dim> d;
  for (int k = 0; k < Dim; ++k) d[k] = partial_derivative(static_cast<const Field<Dim>&>(l0), k);
  return detail::integrate_against(lt, omega, [&](std::size_t i) {
    const Mat<Dim> L0 = l0.at(i);
    const Mat<Dim> e = detail::inverse_frame(lt.at(i));
    std::vector<double> t(Dim * Dim * Dim);
    for (int k = 0; k < Dim; ++k)
      for (int a = 0; a < Dim; ++a)
        for (int b = 0; b < Dim; ++b) {
          double v = d[k](sym_index<Dim>(a, b), i);
          for (int m = 0; m < Dim; ++m)
            v -= gam(gamma_index<Dim>(m, k, a), i) * L0(m, b) + gam(gamma_index<Dim>(m, k, b), i) * L0(a, m);
          t[(k * Dim + a) * Dim + b] = v;
        }
    return tensor_norm2_at<Dim>(std::move(t), TensorShape::covariant(3), e, Mat<Dim>::Identity());
  });
}

struct W12Report {
  std::vector<double> times;
  std::vector<double> integrals;
  double sigma = 0.0;
  double r2 = 0.0;
};

/// Proxy l0 = l(t_min); fits log integral = log c + sigma log t over the later samples.
template <int Dim>
W12Report w12_limit_check(const PullbackSeries<Dim>& ps, const std::vector<std::size_t>& omega,
                          std::size_t proxy_index = 0) {
  W12Report rep;
  const auto& l0 = ps.ell[proxy_index];
  std::vector<double> x, y;
  for (std::size_t k = 0; k < ps.ell.size(); ++k) {
    if (k == proxy_index) continue;
    const double v = w12_integral(ps.ell[k], l0, omega);
    rep.times.push_back(ps.times[k]);
    rep.integrals.push_back(v);
    if (v > 0.0 && ps.times[k] > 0.0) {
      x.push_back(std::log(ps.times[k]));
      y.push_back(std::log(v));
    }
  }
  if (x.size() >= 2) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mx += x[i] / n;
      my += y[i] / n;
    }
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxx += (x[i] - mx) * (x[i] - mx);
      sxy += (x[i] - mx) * (y[i] - my);
      syy += (y[i] - my) * (y[i] - my);
    }
    rep.sigma = sxx > 0 ? sxy / sxx : 0.0;
    rep.r2 = (sxx > 0 && syy > 0) ? sxy * sxy / (sxx * syy) : 1.0;
  }
  return rep;
}

/// max over tracking nodes of |g0 - DW^T (l o W) DW|_h with W = W(t_k).
template <int Dim>
double isometry_identity_check(const MetricField<Dim>& g0, const BackgroundGeometry<Dim>& bg,
                               const MetricField<Dim>& ell, const DiffeoTrajectory<Dim>& d, std::size_t k) {
  if (!d.has_inverse(k)) throw std::invalid_argument("no inverse map stored at this sample time");
  const auto& tracking = d.tracking;
  const int factor = g0.grid().n / tracking.n;
  const auto jw = detail::jacobian_of_displacement(d.winv[k]);
  std::vector<double> defect(tracking.size());
  std::size_t bad = tracking.size();
  for_each_node(tracking, [&](std::size_t i, const MultiIndex<Dim>& m) {
    const Mat<Dim> J = DiffeoTrajectory<Dim>::jac_at(jw, i);
    if (!(J.determinant() > 0.0)) {
#pragma omp critical
      bad = std::min(bad, i);
      return;
    }
    const Vec<Dim> y = tracking.position(i);
    const Vec<Dim> w = y + DiffeoTrajectory<Dim>::interpolate_vector_at(d.winv[k], i);
    MultiIndex<Dim> fm{};
    for (int a = 0; a < Dim; ++a) fm[a] = m[a] * factor;
    const std::size_t fi = g0.grid().index(fm);
    const Mat<Dim> diff = g0.at(fi) - J.transpose() * interpolate_metric(ell, w) * J;
    const Mat<Dim> e = coframe(bg, fi);
    defect[i] = (e.transpose() * diff * e).norm();
  });
  if (bad < tracking.size()) throw SingularJacobian(bad, d.times[k]);
  return *std::max_element(defect.begin(), defect.end());
}

/// max over nodes and sample pairs of |Phi(t)x - Phi(s)x|_h / sqrt|t-s| (h frozen at x).
template <int Dim>
double holder_ratio(const DiffeoTrajectory<Dim>& d, const BackgroundGeometry<Dim>& bg) {
  const auto& tracking = d.tracking;
  const int factor = bg.grid().n / tracking.n;
  double best = 0.0;
  for (std::size_t i = 0; i < d.times.size(); ++i)
    for (std::size_t j = i + 1; j < d.times.size(); ++j) {
      const double sq = std::sqrt(d.times[j] - d.times[i]);
      std::vector<double> r(tracking.size());
      for_each_node(tracking, [&](std::size_t n, const MultiIndex<Dim>& m) {
        Vec<Dim> v;
        for (int a = 0; a < Dim; ++a) v[a] = d.phi[j](a, n) - d.phi[i](a, n);
        MultiIndex<Dim> fm{};
        for (int a = 0; a < Dim; ++a) fm[a] = m[a] * factor;
        const double len2 = bg.flat ? v.squaredNorm() : v.dot(bg.h.at(bg.grid().index(fm)) * v);
        r[n] = std::sqrt(len2) / sq;
      });
      best = std::max(best, *std::max_element(r.begin(), r.end()));
    }
  return best;
}

/// Writes phi_<k>.tfs and w_<k>.tfs (wrapped chart positions) for every sample time.
template <int Dim>
void write_diffeo(const std::filesystem::path& dir, const DiffeoTrajectory<Dim>& d) {
  std::filesystem::create_directories(dir);
  const auto& tg = d.tracking;
  for (std::size_t k = 0; k < d.times.size(); ++k) {
    Field<Dim> p(tg, TensorShape::vector()), w(tg, TensorShape::vector());
    for (std::size_t i = 0; i < tg.size(); ++i) {
      const Vec<Dim> x = tg.position(i);
      for (int a = 0; a < Dim; ++a) {
        p(a, i) = x[a] + d.phi[k](a, i);
        w(a, i) = x[a] + d.winv[k](a, i);
        p(a, i) -= tg.length * std::floor(p(a, i) / tg.length);
        w(a, i) -= tg.length * std::floor(w(a, i) / tg.length);
      }
    }
    write_snapshot(dir / ("phi_" + std::to_string(k) + ".tfs"), p, "Phi");
    write_snapshot(dir / ("w_" + std::to_string(k) + ".tfs"), w, "W");
  }
}

}  // namespace rdlab

#endif  // RDLAB_DIFFEO_HPP
