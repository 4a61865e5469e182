#ifndef RDLAB_CALCULUS_HPP
#define RDLAB_CALCULUS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <type_traits>
#include <utility>
#include <vector>

#include "rdlab/jet.hpp"

namespace rdlab {

// ---------------------------------------------------------------------------
// covariant derivative and pointwise norms

/// nabla^h T, derivative slot first: (nabla T)_{m i1..ik} = nabla_m T_{i1..ik}.
template <int Dim>
Field<Dim> covariant_derivative(const Field<Dim>& t_in, const BackgroundGeometry<Dim>& bg,
                                FdOrder order = FdOrder::fourth) {
  const Field<Dim> t = expand_symmetric(t_in);
  const int rank = t.shape().rank;
  TensorShape out_shape{rank + 1, false, t.shape().upper << 1};
  Field<Dim> out(t.grid(), out_shape);
  const int nin = t.components();
  for (int m = 0; m < Dim; ++m) {
    auto d = partial_derivative(t, m, order);
    for (int c = 0; c < nin; ++c) {
      auto src = d.component(c);
      std::copy(src.begin(), src.end(), out.component(m * nin + c).begin());
    }
  }
  if (bg.flat) return out;
  const auto& grid = t.grid();
  for_each_node(grid, [&](std::size_t idx, const auto&) {
    for (int m = 0; m < Dim; ++m)
      for (int c = 0; c < nin; ++c) {
        double corr = 0.0;
        int stride = 1;
        for (int s = rank - 1; s >= 0; --s) {
          const int digit = (c / stride) % Dim;
          const int base = c - digit * stride;
          for (int p = 0; p < Dim; ++p) {
            if (t.shape().is_upper(s))
              corr += bg.christoffel(gamma_index<Dim>(digit, m, p), idx) * t(base + p * stride, idx);
            else
              corr -= bg.christoffel(gamma_index<Dim>(p, m, digit), idx) * t(base + p * stride, idx);
          }
          stride *= Dim;
        }
        out(m * nin + c, idx) += corr;
      }
  });
  return out;
}

/// Squared h-norm of the full (non-packed) components `comp` of a tensor with the given shape.
template <int Dim>
double tensor_norm2_at(std::vector<double> a, const TensorShape& shape, const Mat<Dim>& lower_frame,
                       const Mat<Dim>& upper_frame) {
  const int n = static_cast<int>(a.size());
  std::vector<double> b(a.size());
  int stride = 1;
  for (int s = shape.rank - 1; s >= 0; --s) {
    const Mat<Dim>& e = shape.is_upper(s) ? upper_frame : lower_frame;
    for (int c = 0; c < n; ++c) {
      const int digit = (c / stride) % Dim;
      const int base = c - digit * stride;
      double v = 0.0;
      for (int p = 0; p < Dim; ++p) v += e(p, digit) * a[base + p * stride];
      b[c] = v;
    }
    std::swap(a, b);
    stride *= Dim;
  }
  double n2 = 0.0;
  for (double v : a) n2 += v * v;
  return n2;
}

/// Pointwise |T|_h: lower slots contracted with h^{-1}, upper slots with h.
template <int Dim>
Field<Dim> norm_h(const Field<Dim>& t_in, const BackgroundGeometry<Dim>& bg) {
  const Field<Dim> t = expand_symmetric(t_in);
  Field<Dim> out(t.grid(), TensorShape::scalar());
  const int nc = t.components();
  for_each_node(t.grid(), [&](std::size_t idx, const auto&) {
    std::vector<double> a(nc);
    for (int c = 0; c < nc; ++c) a[c] = t(c, idx);
    Mat<Dim> lower = Mat<Dim>::Identity(), upper = Mat<Dim>::Identity();
    if (!bg.flat) {
      lower = coframe(bg, idx);
      Eigen::LLT<Mat<Dim>> llt(bg.h.at(idx));
      upper = llt.matrixL();
    }
    out(0, idx) = std::sqrt(tensor_norm2_at<Dim>(std::move(a), t.shape(), lower, upper));
  });
  return out;
}

/// Generalised eigenvalue extremes of g relative to h at each node.
template <int Dim>
std::pair<Field<Dim>, Field<Dim>> eig_bounds_rel(const MetricField<Dim>& g, const BackgroundGeometry<Dim>& bg) {
  Field<Dim> lo(g.grid(), TensorShape::scalar()), hi(g.grid(), TensorShape::scalar());
  for_each_node(g.grid(), [&](std::size_t idx, const auto&) {
    Vec<Dim> ev;
    if (bg.flat) {
      ev = Eigen::SelfAdjointEigenSolver<Mat<Dim>>(g.at(idx), Eigen::EigenvaluesOnly).eigenvalues();
    } else {
      ev = Eigen::GeneralizedSelfAdjointEigenSolver<Mat<Dim>>(g.at(idx), bg.h.at(idx), Eigen::EigenvaluesOnly)
               .eigenvalues();
    }
    lo(0, idx) = ev(0);
    hi(0, idx) = ev(Dim - 1);
  });
  for (std::size_t idx = 0; idx < g.nodes(); ++idx)
    if (!(lo(0, idx) > 0.0)) throw NonPositiveDefinite(idx, lo(0, idx));
  return {std::move(lo), std::move(hi)};
}

/// Smallest a with (1/a) h <= g <= a h everywhere.
template <int Dim>
double two_sided_bound(const MetricField<Dim>& g, const BackgroundGeometry<Dim>& bg) {
  auto [lo, hi] = eig_bounds_rel(g, bg);
  double a = 1.0;
  for (std::size_t idx = 0; idx < g.nodes(); ++idx) a = std::max({a, hi(0, idx), 1.0 / lo(0, idx)});
  return a;
}

// ---------------------------------------------------------------------------
// energy densities and ball integrals

/// |nabla^h g|^2 + |nabla^h nabla^h g|^2 at every node.
template <int Dim>
Field<Dim> energy_density(const MetricField<Dim>& g, const BackgroundGeometry<Dim>& bg) {
  Field<Dim> out(g.grid(), TensorShape::scalar());
  JetBuilder<Dim> jets(g, bg);
  for_each_node(g.grid(), [&](std::size_t idx, const MultiIndex<Dim>& m) {
    const auto jet = jets(idx, m);
    const Mat<Dim> e = coframe(bg, idx);
    out(0, idx) = first_derivative_norm2(jet, e, bg.flat) + second_derivative_norm2(jet, e, bg.flat);
  });
  return out;
}

template <int Dim>
struct Ball {
  Vec<Dim> center;
  double radius;
};

/// Nodes within d_h(node, center) <= r. Distances use h frozen at the node nearest the center.
template <int Dim>
std::vector<std::size_t> ball_nodes(const GridSpec<Dim>& grid, const BackgroundGeometry<Dim>& bg,
                                    const Ball<Dim>& ball) {
  if (!(2.0 * ball.radius < 0.5 * grid.length)) throw BallTooLarge(ball.radius);
  MultiIndex<Dim> cm{};
  for (int a = 0; a < Dim; ++a) cm[a] = static_cast<int>(std::lround(ball.center[a] / grid.dx()));
  const Mat<Dim> hc = bg.flat ? Mat<Dim>::Identity() : bg.h.at(grid.index(cm));
  double lam_min = Eigen::SelfAdjointEigenSolver<Mat<Dim>>(hc, Eigen::EigenvaluesOnly).eigenvalues()(0);
  const int reach = static_cast<int>(std::ceil(ball.radius / std::sqrt(lam_min) / grid.dx())) + 1;
  std::vector<std::size_t> out;
  MultiIndex<Dim> off{};
  off.fill(-reach);
  const double r2 = ball.radius * ball.radius;
  while (true) {
    MultiIndex<Dim> node{};
    for (int a = 0; a < Dim; ++a) node[a] = cm[a] + off[a];
    const Vec<Dim> d = grid.displacement(ball.center, grid.position(node));
    if (d.dot(hc * d) <= r2 * (1.0 + 1e-12)) out.push_back(grid.index(node));
    int a = Dim - 1;
    while (a >= 0 && ++off[a] > reach) off[a--] = -reach;
    if (a < 0) break;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Riemann sum of density * sqrt(det h) * dx^D over a node set.
template <int Dim>
double sum_over_nodes(const Field<Dim>& density, const BackgroundGeometry<Dim>& bg,
                      const std::vector<std::size_t>& nodes) {
  double s = 0.0;
  for (auto idx : nodes) s += density(0, idx) * bg.volume_density(idx);
  return s * density.grid().cell_volume();
}

template <int Dim>
double ball_integral(const Field<Dim>& density, const BackgroundGeometry<Dim>& bg, const Ball<Dim>& ball) {
  return sum_over_nodes(density, bg, ball_nodes(density.grid(), bg, ball));
}

/// Whole-torus integral of a scalar density against dh.
template <int Dim>
double domain_integral(const Field<Dim>& density, const BackgroundGeometry<Dim>& bg) {
  double s = 0.0;
  for (std::size_t idx = 0; idx < density.nodes(); ++idx) s += density(0, idx) * bg.volume_density(idx);
  return s * density.grid().cell_volume();
}

/// Integral of |nabla g|^2 + |nabla^2 g|^2 over B_r(center).
template <int Dim>
double ball_energy(const MetricField<Dim>& g, const BackgroundGeometry<Dim>& bg,
                   const std::type_identity_t<Vec<Dim>>& center, double r) {
  if (!(2.0 * r < 0.5 * g.grid().length)) throw BallTooLarge(r);
  return ball_integral(energy_density(g, bg), bg, Ball<Dim>{center, r});
}

/// Regular net of centers, every `step`-th node along each axis.
template <int Dim>
std::vector<Vec<Dim>> center_net(const GridSpec<Dim>& grid, int step) {
  std::vector<Vec<Dim>> out;
  const int per = (grid.n + step - 1) / step;
  MultiIndex<Dim> m{};
  while (true) {
    MultiIndex<Dim> node{};
    for (int a = 0; a < Dim; ++a) node[a] = m[a] * step;
    out.push_back(grid.position(node));
    int a = Dim - 1;
    while (a >= 0 && ++m[a] >= per) m[a--] = 0;
    if (a < 0) break;
  }
  return out;
}

/// sup over centers of the ball integral of `density`; node sets are reused on flat backgrounds.
template <int Dim>
double sup_ball_integral(const Field<Dim>& density, const BackgroundGeometry<Dim>& bg,
                         const std::vector<Vec<Dim>>& centers, double r) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& c : centers) best = std::max(best, ball_integral(density, bg, Ball<Dim>{c, r}));
  return best;
}

/// Ball integrals over a fixed set of centers; node lists are built once and reused.
template <int Dim>
class BallSampler {
 public:
  BallSampler(const BackgroundGeometry<Dim>& bg, std::vector<Vec<Dim>> centers, double r)
      : bg_(&bg), centers_(std::move(centers)), radius_(r) {
    const auto& grid = bg.grid();
    if (!(2.0 * r < 0.5 * grid.length)) throw BallTooLarge(r);
    lists_.resize(centers_.size());
    for (std::size_t c = 0; c < centers_.size(); ++c) {
      const auto nodes = ball_nodes(grid, bg, Ball<Dim>{centers_[c], r});
      lists_[c].assign(nodes.begin(), nodes.end());
    }
  }

  const std::vector<Vec<Dim>>& centers() const { return centers_; }
  double radius() const { return radius_; }

  std::vector<double> integrals(const Field<Dim>& density) const {
    std::vector<double> out(centers_.size());
    const double cell = density.grid().cell_volume();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(centers_.size()); ++c) {
      double s = 0.0;
      for (auto idx : lists_[c]) s += density(0, idx) * bg_->volume_density(idx);
      out[c] = s * cell;
    }
    return out;
  }

  double sup(const Field<Dim>& density) const {
    const auto v = integrals(density);
    return *std::max_element(v.begin(), v.end());
  }

 private:
  const BackgroundGeometry<Dim>* bg_;
  std::vector<Vec<Dim>> centers_;
  double radius_;
  std::vector<std::vector<std::uint32_t>> lists_;
};

/// |T|_h^2 for a symmetric 2-tensor lattice, both slots lower or both upper.
template <int Dim>
Field<Dim> sym_norm2(const MetricField<Dim>& t, const BackgroundGeometry<Dim>& bg) {
  Field<Dim> out(t.grid(), TensorShape::scalar());
  for_each_node(t.grid(), [&](std::size_t idx, const auto&) {
    if (bg.flat) {
      out(0, idx) = t.at(idx).squaredNorm();
      return;
    }
    Mat<Dim> e;
    if (t.shape().is_upper(0))
      e = Eigen::LLT<Mat<Dim>>(bg.h.at(idx)).matrixL();
    else
      e = coframe(bg, idx);
    out(0, idx) = (e.transpose() * t.at(idx) * e).squaredNorm();
  });
  return out;
}

/// |T|^2 + |nabla T|^2 + |nabla^2 T|^2 for a symmetric 2-tensor (need not be definite).
template <int Dim>
Field<Dim> w22_density(const MetricField<Dim>& t, const BackgroundGeometry<Dim>& bg) {
  Field<Dim> out = energy_density(t, bg);
  out += sym_norm2(t, bg);
  return out;
}

// ---------------------------------------------------------------------------
// mollification and interpolation

/// Periodic Gaussian smoothing, separable along each axis; kernel cut at 6*scale and renormalised.
template <int Dim>
Field<Dim> mollify(const Field<Dim>& f, double scale) {
  const auto& grid = f.grid();
  if (!(scale >= grid.dx() * (1.0 - 1e-12))) throw std::invalid_argument("mollification scale must be >= dx");
  const int half = static_cast<int>(std::floor(6.0 * scale / grid.dx()));
  std::vector<double> w(2 * half + 1);
  double total = 0.0;
  for (int k = -half; k <= half; ++k) {
    const double x = k * grid.dx();
    w[k + half] = std::exp(-0.5 * x * x / (scale * scale));
    total += w[k + half];
  }
  for (auto& v : w) v /= total;
  // fold the kernel onto one period so wide kernels stay mass-preserving
  std::vector<double> folded(grid.n, 0.0);
  for (int k = -half; k <= half; ++k) folded[grid.wrap(k)] += w[k + half];
  std::vector<int> taps;
  for (int k = 0; k < grid.n; ++k)
    if (folded[k] != 0.0) taps.push_back(k);

  Field<Dim> cur = f;
  Field<Dim> next(grid, f.shape());
  for (int axis = 0; axis < Dim; ++axis) {
    const auto stride = static_cast<std::ptrdiff_t>(grid.stride(axis));
    for (int c = 0; c < f.components(); ++c) {
      const double* src = cur.comp_ptr(c);
      double* dst = next.comp_ptr(c);
      for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
        double s = 0.0;
        for (int k : taps) {
          const int j = grid.wrap(m[axis] - k);
          s += folded[k] * src[idx + (j - m[axis]) * stride];
        }
        dst[idx] = s;
      });
    }
    std::swap(cur, next);
  }
  return cur;
}

template <int Dim>
MetricField<Dim> mollify(const MetricField<Dim>& g, double scale) {
  return MetricField<Dim>(mollify(static_cast<const Field<Dim>&>(g), scale));
}

/// Multilinear interpolation on the containing cell, periodic in every axis.
template <int Dim>
void interpolate_into(const Field<Dim>& f, const Vec<Dim>& point, double* out) {
  const auto& grid = f.grid();
  std::array<int, Dim> base{};
  std::array<double, Dim> frac{};
  for (int a = 0; a < Dim; ++a) {
    const double s = point[a] / grid.dx();
    const double fl = std::floor(s);
    base[a] = static_cast<int>(fl);
    frac[a] = s - fl;
  }
  const int nc = f.components();
  for (int c = 0; c < nc; ++c) out[c] = 0.0;
  for (int corner = 0; corner < (1 << Dim); ++corner) {
    double w = 1.0;
    MultiIndex<Dim> node{};
    for (int a = 0; a < Dim; ++a) {
      const int bit = (corner >> a) & 1;
      w *= bit ? frac[a] : 1.0 - frac[a];
      node[a] = base[a] + bit;
    }
    if (w == 0.0) continue;
    const std::size_t idx = grid.index(node);
    for (int c = 0; c < nc; ++c) out[c] += w * f(c, idx);
  }
}

template <int Dim>
std::vector<double> interpolate(const Field<Dim>& f, const Vec<Dim>& point) {
  std::vector<double> out(f.components());
  interpolate_into(f, point, out.data());
  return out;
}

template <int Dim>
Mat<Dim> interpolate_metric(const MetricField<Dim>& g, const Vec<Dim>& point) {
  std::array<double, Dim*(Dim + 1) / 2> v{};
  interpolate_into<Dim>(g, point, v.data());
  Mat<Dim> m;
  for (int i = 0; i < Dim; ++i)
    for (int j = i; j < Dim; ++j) m(i, j) = m(j, i) = v[sym_index<Dim>(i, j)];
  return m;
}

template <int Dim>
Vec<Dim> interpolate_vector(const Field<Dim>& v, const Vec<Dim>& point) {
  Vec<Dim> out;
  interpolate_into<Dim>(v, point, out.data());
  return out;
}

/// (L_V g)_ij = V^k d_k g_ij + g_kj d_i V^k + g_ik d_j V^k on the chart.
template <int Dim>
MetricField<Dim> lie_derivative(const Field<Dim>& vfield, const MetricField<Dim>& g, FdOrder order) {
  const auto& grid = g.grid();
  const Stencil st = Stencil::of(order);
  const double inv_dx = 1.0 / grid.dx();
  MetricField<Dim> out(grid);
  for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
    NeighbourTable<Dim> nb(grid, m);
    Mat<Dim> dv;  // dv(k,i) = d_i V^k
    for (int k = 0; k < Dim; ++k)
      for (int i = 0; i < Dim; ++i) dv(k, i) = d1_at<Dim>(vfield.comp_ptr(k), idx, nb, i, st, inv_dx);
    const Mat<Dim> gm = g.at(idx);
    Mat<Dim> res = gm * dv;
    res = (res + res.transpose()).eval();
    for (int k = 0; k < Dim; ++k) {
      const double vk = vfield(k, idx);
      for (int i = 0; i < Dim; ++i)
        for (int j = i; j < Dim; ++j) {
          const double dg = d1_at<Dim>(g.comp_ptr(sym_index<Dim>(i, j)), idx, nb, k, st, inv_dx);
          res(i, j) += vk * dg;
          if (i != j) res(j, i) += vk * dg;
        }
    }
    out.set(idx, res);
  });
  return out;
}

}  // namespace rdlab

#endif  // RDLAB_CALCULUS_HPP
