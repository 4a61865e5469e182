#ifndef RDLAB_INITIAL_DATA_HPP
#define RDLAB_INITIAL_DATA_HPP

#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "rdlab/calculus.hpp"
#include "rdlab/snapshot.hpp"

namespace rdlab {

// ---------------------------------------------------------------------------
// cutoff functions

/// eta = 1 on B_R(center), 0 outside B_{C R}, quintic smoothstep in between.
template <int Dim>
struct CutoffSpec {
  Vec<Dim> center = Vec<Dim>::Zero();
  double inner_radius = 0.1;
  double outer_factor = 2.0;
};

/// Quintic smoothstep S(s) = 6s^5 - 15s^4 + 10s^3 and its first two derivatives, clamped to [0,1].
struct QuinticRamp {
  static double value(double s) {
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
  }
  static double d1(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    return 30.0 * s * s * (1.0 - s) * (1.0 - s);
  }
  static double d2(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
  }
};

template <int Dim>
struct CutoffField {
  Field<Dim> eta;
  double measured_constant = 0.0;  // sup(|nabla^2 eta| + |nabla eta|^2/eta) * R^2
  double sup_gradient = 0.0;       // sup |nabla eta|
};

/// Cutoff lattice with analytically evaluated derivative bounds at the nodes.
/// Radial distances use h frozen at the node nearest the center.
template <int Dim>
CutoffField<Dim> cutoff_eta(const CutoffSpec<Dim>& spec, const GridSpec<Dim>& grid, const BackgroundGeometry<Dim>& bg) {
  const double R = spec.inner_radius, C = spec.outer_factor;
  if (!(R > 0.0) || !(C > 1.0)) throw DegenerateParameters("cutoff needs R > 0 and C > 1");
  if (!(C * R < 0.5 * grid.length)) throw BallTooLarge(C * R);
  MultiIndex<Dim> cm{};
  for (int a = 0; a < Dim; ++a) cm[a] = static_cast<int>(std::lround(spec.center[a] / grid.dx()));
  const Mat<Dim> hc = bg.flat ? Mat<Dim>::Identity() : bg.h.at(grid.index(cm));
  const double width = (C - 1.0) * R;

  CutoffField<Dim> out{Field<Dim>(grid, TensorShape::scalar()), 0.0, 0.0};
  std::vector<double> cst(grid.size(), 0.0), grad(grid.size(), 0.0);
  for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
    const Vec<Dim> d = grid.displacement(spec.center, grid.position(m));
    const double rho = std::sqrt(d.dot(hc * d));
    const double s = (C * R - rho) / width;
    const double eta = QuinticRamp::value(s);
    out.eta(0, idx) = eta;
    const double e1 = -QuinticRamp::d1(s) / width;
    const double e2 = QuinticRamp::d2(s) / (width * width);
    if (e1 == 0.0 && e2 == 0.0) return;
    // Hessian of eta(rho): eta'' along the radial direction, eta'/rho on the (Dim-1) tangential ones
    const double hess = std::sqrt(e2 * e2 + (Dim - 1) * (e1 / rho) * (e1 / rho));
    const double g2 = e1 * e1;
    cst[idx] = (hess + (eta > 0.0 ? g2 / eta : 0.0)) * R * R;
    grad[idx] = std::abs(e1);
  });
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.measured_constant = std::max(out.measured_constant, cst[i]);
    out.sup_gradient = std::max(out.sup_gradient, grad[i]);
  }
  return out;
}

/// g = eta * hat + (1 - eta) * h, nodewise.
template <int Dim>
MetricField<Dim> blend_with_background(const MetricField<Dim>& hat, const Field<Dim>& eta,
                                       const BackgroundGeometry<Dim>& bg) {
  MetricField<Dim> out(hat.grid());
  for (int c = 0; c < out.components(); ++c)
    for (std::size_t idx = 0; idx < out.nodes(); ++idx) {
      const double e = eta(0, idx);
      out(c, idx) = e * hat(c, idx) + (1.0 - e) * bg.h(c, idx);
    }
  return out;
}

// ---------------------------------------------------------------------------
// generators

/// Parameters (eps, r, c) of f(x) = (r/eps)(1 + eps + sin(c + log log(2/|x|))).
struct LogLogAxis {
  double eps = 1.0;
  double r = 1.0;
  double c = 0.0;

  double lower() const { return r; }
  double upper() const { return r * (2.0 + eps) / eps; }
};

/// Smallest |x| clamp value: 2/|x| >= e + 1e-6.
inline double loglog_max_radius() { return 2.0 / (std::numbers::e + 1e-6); }

/// f at chart distance rho from the center; rho = 0 returns the range minimum r.
inline double loglog_profile(const LogLogAxis& p, double rho) {
  if (rho <= 0.0) return p.r;
  rho = std::min(rho, loglog_max_radius());
  return p.r / p.eps * (1.0 + p.eps + std::sin(p.c + std::log(std::log(2.0 / rho))));
}

template <int Dim>
MetricField<Dim> loglog_metric(const GridSpec<Dim>& grid, const BackgroundGeometry<Dim>& bg,
                               const std::type_identity_t<std::array<LogLogAxis, Dim>>& axes,
                               const std::optional<CutoffSpec<Dim>>& cutoff,
                               const std::type_identity_t<Vec<Dim>>& center) {
  for (const auto& p : axes)
    if (!(p.eps > 0.0) || !(p.r > 0.0)) throw DegenerateParameters("log-log parameters need eps > 0 and r > 0");
  MetricField<Dim> hat(grid);
  for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
    const double rho = grid.displacement(center, grid.position(m)).norm();
    for (int a = 0; a < Dim; ++a)
      for (int b = a; b < Dim; ++b) hat(sym_index<Dim>(a, b), idx) = a == b ? loglog_profile(axes[a], rho) : 0.0;
  });
  if (!cutoff) return hat;
  return blend_with_background(hat, cutoff_eta(*cutoff, grid, bg).eta, bg);
}

/// Conformal factor u = A * sum_a w_a sin(k x_a + p_a), k = 2 pi m / L, with closed-form derivatives.
template <int Dim>
struct ConformalProfile {
  double amplitude = 0.1;
  int mode = 1;
  double length = 1.0;
  std::array<double, 4> weights{1.0, 0.7, 0.5, 0.3};
  std::array<double, 4> phases{0.0, 1.0, 2.0, 3.0};

  double k() const { return 2.0 * std::numbers::pi * mode / length; }
  double u(const Vec<Dim>& x) const {
    double s = 0.0;
    for (int a = 0; a < Dim; ++a) s += weights[a] * std::sin(k() * x[a] + phases[a]);
    return amplitude * s;
  }
  double du(const Vec<Dim>& x, int a) const { return amplitude * weights[a] * k() * std::cos(k() * x[a] + phases[a]); }
  double d2u(const Vec<Dim>& x, int a) const {
    return -amplitude * weights[a] * k() * k() * std::sin(k() * x[a] + phases[a]);
  }
  double laplacian(const Vec<Dim>& x) const {
    double s = 0.0;
    for (int a = 0; a < Dim; ++a) s += d2u(x, a);
    return s;
  }
  double grad2(const Vec<Dim>& x) const {
    double s = 0.0;
    for (int a = 0; a < Dim; ++a) s += du(x, a) * du(x, a);
    return s;
  }
  /// Scalar curvature of scale * e^{2u} delta.
  double scalar_curvature(const Vec<Dim>& x, double scale = 1.0) const {
    constexpr double n = Dim;
    return -std::exp(-2.0 * u(x)) * (2.0 * (n - 1.0) * laplacian(x) + (n - 2.0) * (n - 1.0) * grad2(x)) / scale;
  }
};

template <int Dim>
MetricField<Dim> conformal_metric(const GridSpec<Dim>& grid, const ConformalProfile<Dim>& prof, double scale = 1.0) {
  MetricField<Dim> g(grid);
  for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
    const double f = scale * std::exp(2.0 * prof.u(grid.position(m)));
    for (int a = 0; a < Dim; ++a) g(sym_index<Dim>(a, a), idx) = f;
  });
  return g;
}

/// Continuum minimum of the conformal scalar curvature: dense sampling then coordinate refinement.
template <int Dim>
double conformal_min_scalar(const ConformalProfile<Dim>& prof, int samples_per_axis = 24) {
  const double h = prof.length / samples_per_axis;
  double best = std::numeric_limits<double>::infinity();
  Vec<Dim> arg = Vec<Dim>::Zero();
  MultiIndex<Dim> m{};
  while (true) {
    Vec<Dim> x;
    for (int a = 0; a < Dim; ++a) x[a] = m[a] * h;
    const double r = prof.scalar_curvature(x);
    if (r < best) {
      best = r;
      arg = x;
    }
    int a = Dim - 1;
    while (a >= 0 && ++m[a] >= samples_per_axis) m[a--] = 0;
    if (a < 0) break;
  }
  // pattern search around the best sample
  double step = h;
  while (step > 1e-10 * prof.length) {
    bool moved = false;
    for (int a = 0; a < Dim; ++a)
      for (double sgn : {-1.0, 1.0}) {
        Vec<Dim> y = arg;
        y[a] += sgn * step;
        const double r = prof.scalar_curvature(y);
        if (r < best) {
          best = r;
          arg = y;
          moved = true;
        }
      }
    if (!moved) step *= 0.5;
  }
  return best;
}

/// Amplitude A of the bump u = A (1 - s^2)^4 with Gauss curvature sigma1 at the center
/// (small root of 16 A e^{-2A} = sigma1 sigma2^2).
inline double torus_bump_amplitude(double sigma1, double sigma2) {
  const double target = sigma1 * sigma2 * sigma2;
  if (target <= 0.0) return 0.0;
  if (target >= 8.0 / std::numbers::e) throw DegenerateParameters("bump curvature too large for its radius");
  double A = target / 16.0;
  for (int it = 0; it < 100; ++it) {
    const double f = 16.0 * A * std::exp(-2.0 * A) - target;
    const double df = 16.0 * std::exp(-2.0 * A) * (1.0 - 2.0 * A);
    const double step = f / df;
    A -= step;
    if (std::abs(step) < 1e-15 * std::max(1.0, A)) break;
  }
  return A;
}

/// e^{2u} delta on the (x0,x1) plane plus the flat remainder; u has compact support of radius sigma2.
template <int Dim>
MetricField<Dim> torus_bump_metric(const GridSpec<Dim>& grid, const BackgroundGeometry<Dim>& bg, double sigma1,
                                   double sigma2, const std::type_identity_t<Vec<Dim>>& center) {
  if (!(sigma2 > 0.0) || !(sigma2 < grid.length / 4.0)) throw DegenerateParameters("bump radius must be in (0, L/4)");
  MetricField<Dim> g = bg.h;
  if (sigma1 == 0.0) return g;
  const double A = torus_bump_amplitude(sigma1, sigma2);
  for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
    const Vec<Dim> d = grid.displacement(center, grid.position(m));
    const double s2 = (d[0] * d[0] + d[1] * d[1]) / (sigma2 * sigma2);
    if (s2 >= 1.0) return;
    const double w = (1.0 - s2) * (1.0 - s2);
    const double f = std::exp(2.0 * A * w * w);
    g(sym_index<Dim>(0, 0), idx) = f;
    g(sym_index<Dim>(1, 1), idx) = f;
    g(sym_index<Dim>(0, 1), idx) = 0.0;
  });
  return g;
}

/// eta * mollify(g0, scale) + (1 - eta) * h.
template <int Dim>
MetricField<Dim> mollify_blend(const MetricField<Dim>& g0, double scale, const CutoffSpec<Dim>& spec,
                               const BackgroundGeometry<Dim>& bg) {
  const auto eta = cutoff_eta(spec, g0.grid(), bg);
  return blend_with_background(mollify(g0, scale), eta.eta, bg);
}

struct SmallnessRadius {
  double radius = 0.0;
  bool found = false;
  std::vector<std::pair<double, double>> sweep;  // (r, sup energy)
};

/// Largest dyadic radius r <= L/4 - dx with sup_x int_{B_r(x)} (|nabla g|^4 + |nabla^2 g|^2) dh < eps.
template <int Dim>
SmallnessRadius smallness_radius(const MetricField<Dim>& g0, const BackgroundGeometry<Dim>& bg, double eps,
                                 int center_step = 2) {
  const auto& grid = g0.grid();
  Field<Dim> dens(grid, TensorShape::scalar());
  JetBuilder<Dim> jets(g0, bg);
  for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
    const auto jet = jets(idx, m);
    const Mat<Dim> e = coframe(bg, idx);
    const double d1 = first_derivative_norm2(jet, e, bg.flat);
    const double d2 = second_derivative_norm2(jet, e, bg.flat);
    dens(0, idx) = std::pow(d1, Dim / 2.0) + std::pow(d2, Dim / 4.0);
  });
  const auto centers = center_net(grid, center_step);
  SmallnessRadius out;
  for (double r = grid.length / 4.0 - grid.dx(); r >= grid.dx(); r *= 0.5) {
    const double e = sup_ball_integral(dens, bg, centers, r);
    out.sweep.emplace_back(r, e);
    if (e < eps) {
      out.radius = r;
      out.found = true;
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// named presets

/// Kind name plus flat numeric parameters, as addressed from the command line.
struct RoughMetricSpec {
  std::string kind = "constant";
  std::map<std::string, double> params;
  std::string snapshot_path;  // custom_snapshot only
  bool use_cutoff = false;

  double get(const std::string& key, double dflt) const {
    auto it = params.find(key);
    return it == params.end() ? dflt : it->second;
  }
};

template <int Dim>
struct GeneratedMetric {
  MetricField<Dim> g;
  double a = 1.0;  // (1/a) h <= g <= a h
};

/// Builds a preset. Recognised keys:
///   loglog: eps, r, c (all axes) or eps<i>, r<i>, c<i>; center; cutoff_R, cutoff_C
///   torus_bump: sigma1, sigma2
///   conformal: amplitude, mode, scale
///   constant: diag<i> (default 1)
template <int Dim>
GeneratedMetric<Dim> generate_metric(const RoughMetricSpec& spec, const GridSpec<Dim>& grid,
                                     const BackgroundGeometry<Dim>& bg) {
  Vec<Dim> center = Vec<Dim>::Constant(spec.get("center", 0.5 * grid.length));
  GeneratedMetric<Dim> out;
  if (spec.kind == "loglog") {
    std::array<LogLogAxis, Dim> axes;
    for (int a = 0; a < Dim; ++a) {
      const auto s = std::to_string(a);
      axes[a].eps = spec.get("eps" + s, spec.get("eps", 1.0));
      axes[a].r = spec.get("r" + s, spec.get("r", 1.0));
      axes[a].c = spec.get("c" + s, spec.get("c", static_cast<double>(a)));
    }
    std::optional<CutoffSpec<Dim>> cut;
    if (spec.use_cutoff) cut = CutoffSpec<Dim>{center, spec.get("cutoff_R", 0.1), spec.get("cutoff_C", 2.0)};
    out.g = loglog_metric(grid, bg, axes, cut, center);
  } else if (spec.kind == "torus_bump") {
    out.g = torus_bump_metric(grid, bg, spec.get("sigma1", 5.0), spec.get("sigma2", 0.2), center);
  } else if (spec.kind == "conformal") {
    ConformalProfile<Dim> p;
    p.amplitude = spec.get("amplitude", 0.1);
    p.mode = static_cast<int>(spec.get("mode", 1));
    p.length = grid.length;
    out.g = conformal_metric(grid, p, spec.get("scale", 1.0));
  } else if (spec.kind == "constant") {
    Mat<Dim> m = Mat<Dim>::Identity();
    for (int a = 0; a < Dim; ++a) m(a, a) = spec.get("diag" + std::to_string(a), 1.0);
    out.g = MetricField<Dim>::constant(grid, m);
  } else if (spec.kind == "custom_snapshot") {
    out.g = read_metric_snapshot<Dim>(spec.snapshot_path);
    if (!(out.g.grid() == grid)) throw DegenerateParameters("snapshot grid does not match the configured grid");
  } else {
    throw DegenerateParameters("unknown initial-data kind: " + spec.kind);
  }
  out.a = two_sided_bound(out.g, bg);
  return out;
}

}  // namespace rdlab

#endif  // RDLAB_INITIAL_DATA_HPP
