#ifndef RDLAB_STENCIL_HPP
#define RDLAB_STENCIL_HPP

#include <array>
#include <stdexcept>

#include "rdlab/field.hpp"

namespace rdlab {

enum class FdOrder { second = 2, fourth = 4 };

/// Central-difference weights over offsets -2..2 (unscaled by dx).
struct Stencil {
  std::array<double, 5> first;
  std::array<double, 5> second;

  static constexpr Stencil of(FdOrder order) {
    if (order == FdOrder::second) return {{0.0, -0.5, 0.0, 0.5, 0.0}, {0.0, 1.0, -2.0, 1.0, 0.0}};
    return {{1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0},
            {-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0}};
  }
};

/// d/dx_axis of one component at one node.
template <int Dim>
inline double d1_at(const double* f, std::size_t idx, const NeighbourTable<Dim>& nb, int axis, const Stencil& st,
                    double inv_dx) {
  // antisymmetric pairing keeps constants exactly in the kernel
  double s = 0.0;
  for (int k = 1; k <= 2; ++k)
    if (st.first[k + 2] != 0.0) s += st.first[k + 2] * (f[idx + nb(axis, k)] - f[idx + nb(axis, -k)]);
  return s * inv_dx;
}

/// d^2/dx_a dx_b of one component at one node; mixed terms are composed first differences.
template <int Dim>
inline double d2_at(const double* f, std::size_t idx, const NeighbourTable<Dim>& nb, int a, int b,
                    const Stencil& st, double inv_dx) {
  double s = 0.0;
  if (a == b) {
    const double f0 = f[idx];
    for (int k = 1; k <= 2; ++k)
      if (st.second[k + 2] != 0.0) s += st.second[k + 2] * ((f[idx + nb(a, k)] - f0) + (f[idx + nb(a, -k)] - f0));
    return s * inv_dx * inv_dx;
  }
  for (int ka = 1; ka <= 2; ++ka) {
    const double wa = st.first[ka + 2];
    if (wa == 0.0) continue;
    const std::ptrdiff_t pa = nb(a, ka), ma = nb(a, -ka);
    double inner = 0.0;
    for (int kb = 1; kb <= 2; ++kb) {
      const double wb = st.first[kb + 2];
      if (wb == 0.0) continue;
      const std::ptrdiff_t pb = nb(b, kb), mb = nb(b, -kb);
      inner += wb * ((f[idx + pa + pb] - f[idx + pa + mb]) - (f[idx + ma + pb] - f[idx + ma + mb]));
    }
    s += wa * inner;
  }
  return s * inv_dx * inv_dx;
}

/// Componentwise central difference along `axis` with periodic wrap.
template <int Dim>
Field<Dim> partial_derivative(const Field<Dim>& f, int axis, FdOrder order = FdOrder::fourth) {
  if (axis < 0 || axis >= Dim) throw std::out_of_range("axis out of range");
  const auto& grid = f.grid();
  const Stencil st = Stencil::of(order);
  const double inv_dx = 1.0 / grid.dx();
  Field<Dim> out(grid, f.shape());
  for (int c = 0; c < f.components(); ++c) {
    const double* src = f.comp_ptr(c);
    double* dst = out.comp_ptr(c);
    for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
      NeighbourTable<Dim> nb(grid, m);
      dst[idx] = d1_at<Dim>(src, idx, nb, axis, st, inv_dx);
    });
  }
  return out;
}

/// Second partial derivative d_a d_b, componentwise.
template <int Dim>
Field<Dim> second_partial_derivative(const Field<Dim>& f, int a, int b, FdOrder order = FdOrder::fourth) {
  const auto& grid = f.grid();
  const Stencil st = Stencil::of(order);
  const double inv_dx = 1.0 / grid.dx();
  Field<Dim> out(grid, f.shape());
  for (int c = 0; c < f.components(); ++c) {
    const double* src = f.comp_ptr(c);
    double* dst = out.comp_ptr(c);
    for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
      NeighbourTable<Dim> nb(grid, m);
      dst[idx] = d2_at<Dim>(src, idx, nb, a, b, st, inv_dx);
    });
  }
  return out;
}

}  // namespace rdlab

#endif  // RDLAB_STENCIL_HPP
