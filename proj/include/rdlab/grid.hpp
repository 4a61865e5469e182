#ifndef RDLAB_GRID_HPP
#define RDLAB_GRID_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include <Eigen/Dense>

namespace rdlab {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;
template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;

template <int Dim>
using MultiIndex = std::array<int, Dim>;

/// Periodic cube (R/LZ)^Dim sampled with n points per axis. Row-major, axis 0 slowest.
template <int Dim>
struct GridSpec {
  static_assert(Dim >= 2 && Dim <= 4, "grids are 2-, 3- or 4-dimensional");
  static constexpr int dim = Dim;

  int n = 16;
  double length = 1.0;

  GridSpec() = default;
  GridSpec(int points_per_axis, double side_length) : n(points_per_axis), length(side_length) {
    if (points_per_axis < 8) throw std::invalid_argument("points_per_axis must be >= 8");
    if (!(side_length > 0.0)) throw std::invalid_argument("side_length must be > 0");
  }

  double dx() const { return length / n; }
  double cell_volume() const { return std::pow(dx(), Dim); }

  std::size_t size() const {
    std::size_t s = 1;
    for (int a = 0; a < Dim; ++a) s *= static_cast<std::size_t>(n);
    return s;
  }

  std::size_t stride(int axis) const {
    std::size_t s = 1;
    for (int a = Dim - 1; a > axis; --a) s *= static_cast<std::size_t>(n);
    return s;
  }

  int wrap(int i) const {
    int r = i % n;
    return r < 0 ? r + n : r;
  }

  std::size_t index(const MultiIndex<Dim>& m) const {
    std::size_t idx = 0;
    for (int a = 0; a < Dim; ++a) idx = idx * n + static_cast<std::size_t>(wrap(m[a]));
    return idx;
  }

  MultiIndex<Dim> multi(std::size_t idx) const {
    MultiIndex<Dim> m{};
    for (int a = Dim - 1; a >= 0; --a) {
      m[a] = static_cast<int>(idx % n);
      idx /= n;
    }
    return m;
  }

  Vec<Dim> position(const MultiIndex<Dim>& m) const {
    Vec<Dim> x;
    for (int a = 0; a < Dim; ++a) x[a] = m[a] * dx();
    return x;
  }
  Vec<Dim> position(std::size_t idx) const { return position(multi(idx)); }

  /// Minimum-image displacement from `from` to `to` on the torus.
  Vec<Dim> displacement(const Vec<Dim>& from, const Vec<Dim>& to) const {
    Vec<Dim> d = to - from;
    for (int a = 0; a < Dim; ++a) d[a] -= length * std::round(d[a] / length);
    return d;
  }

  double torus_distance(const Vec<Dim>& x, const Vec<Dim>& y) const { return displacement(x, y).norm(); }

  /// Node index reached from `idx` by the integer offset `off` (periodic).
  std::size_t shifted(std::size_t idx, const MultiIndex<Dim>& off) const {
    auto m = multi(idx);
    for (int a = 0; a < Dim; ++a) m[a] += off[a];
    return index(m);
  }

  bool operator==(const GridSpec& o) const { return n == o.n && length == o.length; }
};

/// Per-node neighbour offsets along each axis for stencil offsets -2..2, wrap included.
template <int Dim>
struct NeighbourTable {
  std::array<std::array<std::ptrdiff_t, 5>, Dim> off{};

  NeighbourTable(const GridSpec<Dim>& grid, const MultiIndex<Dim>& m) {
    for (int a = 0; a < Dim; ++a) {
      const auto s = static_cast<std::ptrdiff_t>(grid.stride(a));
      for (int k = -2; k <= 2; ++k) off[a][k + 2] = (grid.wrap(m[a] + k) - m[a]) * s;
    }
  }
  std::ptrdiff_t operator()(int axis, int k) const { return off[axis][k + 2]; }
};

/// Calls fn(idx, multi) for every node, axis 0 slowest.
template <int Dim, typename Fn>
void for_each_node(const GridSpec<Dim>& grid, Fn&& fn) {
  const std::size_t total = grid.size();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(total); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    fn(idx, grid.multi(idx));
  }
}

}  // namespace rdlab

#endif  // RDLAB_GRID_HPP
