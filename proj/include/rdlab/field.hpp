#ifndef RDLAB_FIELD_HPP
#define RDLAB_FIELD_HPP

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rdlab/grid.hpp"

namespace rdlab {

/// Index structure of a lattice tensor. Symmetric storage only for rank 2.
struct TensorShape {
  int rank = 0;
  bool symmetric = false;
  std::uint32_t upper = 0;  // bit s set: slot s is contravariant

  static TensorShape scalar() { return {0, false, 0}; }
  static TensorShape vector() { return {1, false, 1u}; }
  static TensorShape covector() { return {1, false, 0}; }
  static TensorShape metric() { return {2, true, 0}; }
  static TensorShape inverse_metric() { return {2, true, 3u}; }
  static TensorShape covariant(int rank) { return {rank, false, 0}; }

  bool is_upper(int slot) const { return (upper >> slot) & 1u; }

  template <int Dim>
  int components() const {
    if (symmetric) return Dim * (Dim + 1) / 2;
    int c = 1;
    for (int r = 0; r < rank; ++r) c *= Dim;
    return c;
  }

  bool operator==(const TensorShape&) const = default;
};

/// Position of (i,j), i<=j, in packed symmetric storage: (0,0),(0,1),..,(0,D-1),(1,1),..
template <int Dim>
constexpr int sym_index(int i, int j) {
  if (i > j) std::swap(i, j);
  return i * Dim - i * (i - 1) / 2 + (j - i);
}

/// Tensor-valued lattice on a periodic grid; component-major storage.
template <int Dim>
class Field {
 public:
  Field() = default;
  Field(const GridSpec<Dim>& grid, TensorShape shape, double fill = 0.0)
      : grid_(grid), shape_(shape), ncomp_(shape.template components<Dim>()), data_(grid.size() * ncomp_, fill) {}

  const GridSpec<Dim>& grid() const { return grid_; }
  const TensorShape& shape() const { return shape_; }
  int components() const { return ncomp_; }
  std::size_t nodes() const { return grid_.size(); }

  double& operator()(int comp, std::size_t node) { return data_[comp * grid_.size() + node]; }
  double operator()(int comp, std::size_t node) const { return data_[comp * grid_.size() + node]; }

  std::span<double> component(int c) { return {data_.data() + c * grid_.size(), grid_.size()}; }
  std::span<const double> component(int c) const { return {data_.data() + c * grid_.size(), grid_.size()}; }

  const double* comp_ptr(int c) const { return data_.data() + c * grid_.size(); }
  double* comp_ptr(int c) { return data_.data() + c * grid_.size(); }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  Field& operator+=(const Field& o) {
    assert(o.data_.size() == data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Field& operator-=(const Field& o) {
    assert(o.data_.size() == data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Field& operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(double s, Field a) { return a *= s; }

  /// this += s * o
  void axpy(double s, const Field& o) {
    assert(o.data_.size() == data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Component names used by the snapshot format.
  std::vector<std::string> component_names(const std::string& stem) const {
    std::vector<std::string> names;
    if (shape_.symmetric) {
      for (int i = 0; i < Dim; ++i)
        for (int j = i; j < Dim; ++j) names.push_back(stem + std::to_string(i) + std::to_string(j));
      return names;
    }
    for (int c = 0; c < ncomp_; ++c) {
      std::string s = stem;
      int rem = c;
      std::string digits(shape_.rank, '0');
      for (int r = shape_.rank - 1; r >= 0; --r) {
        digits[r] = static_cast<char>('0' + rem % Dim);
        rem /= Dim;
      }
      names.push_back(s + digits);
    }
    return names;
  }

 private:
  GridSpec<Dim> grid_{};
  TensorShape shape_{};
  int ncomp_ = 0;
  std::vector<double> data_;
};

template <int Dim>
using ScalarField = Field<Dim>;

/// Covariant symmetric 2-tensor lattice (packed i<=j storage).
template <int Dim>
class MetricField : public Field<Dim> {
 public:
  MetricField() = default;
  explicit MetricField(const GridSpec<Dim>& grid, TensorShape shape = TensorShape::metric())
      : Field<Dim>(grid, shape) {
    assert(shape.symmetric);
  }
  explicit MetricField(Field<Dim> f) : Field<Dim>(std::move(f)) { assert(this->shape().symmetric); }

  static MetricField constant(const GridSpec<Dim>& grid, const Mat<Dim>& m) {
    MetricField g(grid);
    for (std::size_t idx = 0; idx < grid.size(); ++idx) g.set(idx, m);
    return g;
  }
  static MetricField identity(const GridSpec<Dim>& grid) { return constant(grid, Mat<Dim>::Identity()); }

  Mat<Dim> at(std::size_t node) const {
    Mat<Dim> m;
    for (int i = 0; i < Dim; ++i)
      for (int j = i; j < Dim; ++j) m(i, j) = m(j, i) = (*this)(sym_index<Dim>(i, j), node);
    return m;
  }
  void set(std::size_t node, const Mat<Dim>& m) {
    for (int i = 0; i < Dim; ++i)
      for (int j = i; j < Dim; ++j) (*this)(sym_index<Dim>(i, j), node) = 0.5 * (m(i, j) + m(j, i));
  }
};

/// Flat index of a full (non-symmetric) component from its slot indices.
template <int Dim, std::size_t R>
constexpr int full_index(const std::array<int, R>& slots) {
  int c = 0;
  for (std::size_t r = 0; r < R; ++r) c = c * Dim + slots[r];
  return c;
}

/// Expands packed symmetric storage to a full rank-2 lattice.
template <int Dim>
Field<Dim> expand_symmetric(const Field<Dim>& f) {
  if (!f.shape().symmetric) return f;
  TensorShape s = f.shape();
  s.symmetric = false;
  Field<Dim> out(f.grid(), s);
  for (int i = 0; i < Dim; ++i)
    for (int j = 0; j < Dim; ++j) {
      auto src = f.component(sym_index<Dim>(i, j));
      std::copy(src.begin(), src.end(), out.component(i * Dim + j).begin());
    }
  return out;
}

/// Lattice of g^{-1} (contravariant, packed symmetric).
template <int Dim>
MetricField<Dim> inverse_metric(const MetricField<Dim>& g) {
  MetricField<Dim> inv(g.grid(), TensorShape::inverse_metric());
  for_each_node(g.grid(), [&](std::size_t idx, const auto&) { inv.set(idx, g.at(idx).inverse()); });
  return inv;
}

}  // namespace rdlab

#endif  // RDLAB_FIELD_HPP
