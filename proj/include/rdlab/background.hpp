#ifndef RDLAB_BACKGROUND_HPP
#define RDLAB_BACKGROUND_HPP

#include <array>
#include <cmath>
#include <numbers>

#include "rdlab/curvature.hpp"

namespace rdlab {

/// Fixed reference metric h with its connection and curvature.
///
/// A flat background stores no lattices beyond h itself; every consumer checks `flat`
/// and skips the Gamma(h) and Rm(h) terms.
template <int Dim>
struct BackgroundGeometry {
  MetricField<Dim> h;
  MetricField<Dim> h_inv;
  Field<Dim> christoffel;   // Gamma(h), see gamma_index
  Field<Dim> dchristoffel;  // component a*D^3 + gamma_index(m,i,j): d_a Gamma^m_{ij}
  Field<Dim> riemann;       // R_{ijkl}(h), CurvatureBundle convention
  std::array<double, 5> nu{};
  bool flat = true;

  const GridSpec<Dim>& grid() const { return h.grid(); }

  /// sqrt(det h) at a node.
  double volume_density(std::size_t idx) const { return flat ? 1.0 : std::sqrt(h.at(idx).determinant()); }

  static BackgroundGeometry make_flat(const GridSpec<Dim>& grid) {
    BackgroundGeometry bg;
    bg.h = MetricField<Dim>::identity(grid);
    bg.h_inv = MetricField<Dim>(grid, TensorShape::inverse_metric());
    for (std::size_t idx = 0; idx < grid.size(); ++idx) bg.h_inv.set(idx, Mat<Dim>::Identity());
    bg.flat = true;
    return bg;
  }

  /// Smooth background from an arbitrary SPD lattice; Gamma and Rm by fourth-order differences.
  static BackgroundGeometry from_metric(const MetricField<Dim>& h) {
    BackgroundGeometry bg;
    bg.flat = false;
    bg.h = h;
    bg.h_inv = inverse_metric(h);
    auto bundle = riemann_ricci_scalar(h, {FdOrder::fourth, true});
    bg.christoffel = std::move(bundle.christoffel);
    bg.riemann = std::move(*bundle.riemann);
    constexpr int NG = Dim * Dim * Dim;
    bg.dchristoffel = Field<Dim>(h.grid(), TensorShape::covariant(4));
    for (int a = 0; a < Dim; ++a) {
      auto d = partial_derivative(bg.christoffel, a);
      for (int c = 0; c < NG; ++c) {
        auto src = d.component(c);
        std::copy(src.begin(), src.end(), bg.dchristoffel.component(a * NG + c).begin());
      }
    }
    bg.nu[0] = 0.0;
    for (std::size_t idx = 0; idx < h.grid().size(); ++idx) bg.nu[0] = std::max(bg.nu[0], riemann_norm_at(bg, idx));
    return bg;
  }

  /// h = delta + eta * s(x) with s a fixed smooth periodic symmetric perturbation.
  static BackgroundGeometry make_bump(const GridSpec<Dim>& grid, double eta) {
    return from_metric(bump_metric(grid, eta));
  }

  static MetricField<Dim> bump_metric(const GridSpec<Dim>& grid, double eta) {
    MetricField<Dim> h(grid);
    const double k = 2.0 * std::numbers::pi / grid.length;
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
      const Vec<Dim> x = grid.position(idx);
      Mat<Dim> s = Mat<Dim>::Zero();
      s(0, 0) = std::sin(k * x[1]) + 0.5 * std::cos(k * x[Dim - 1]);
      s(1, 1) = std::cos(k * x[0]);
      s(0, 1) = s(1, 0) = 0.5 * std::sin(k * x[Dim - 1]);
      if constexpr (Dim >= 3) {
        s(2, 2) = std::sin(k * (x[0] + x[1]));
        s(1, 2) = s(2, 1) = 0.5 * std::cos(k * x[0]);
      }
      if constexpr (Dim >= 4) {
        s(3, 3) = std::cos(k * x[2]);
        s(2, 3) = s(3, 2) = 0.5 * std::sin(k * x[1]);
      }
      h.set(idx, Mat<Dim>::Identity() + eta * s);
    }
    return h;
  }

  /// |Rm(h)|_h at one node, contracted in an h-orthonormal frame.
  static double riemann_norm_at(const BackgroundGeometry& bg, std::size_t idx) {
    if (bg.flat) return 0.0;
    Eigen::LLT<Mat<Dim>> llt(bg.h_inv.at(idx));
    const Mat<Dim> e = llt.matrixL();  // h^{-1} = e e^T
    double t[Dim][Dim][Dim][Dim];
    for (int i = 0; i < Dim; ++i)
      for (int j = 0; j < Dim; ++j)
        for (int k = 0; k < Dim; ++k)
          for (int l = 0; l < Dim; ++l) t[i][j][k][l] = bg.riemann(((i * Dim + j) * Dim + k) * Dim + l, idx);
    return std::sqrt(frame_norm2<4>(&t[0][0][0][0], e));
  }

  /// Squared norm of a covariant rank-R tensor (row-major) after transforming every slot by e^T.
  template <int R>
  static double frame_norm2(const double* t, const Mat<Dim>& e) {
    constexpr int N = ipow(Dim, R);
    std::array<double, N> a{}, b{};
    std::copy(t, t + N, a.begin());
    int stride = 1;
    for (int r = R - 1; r >= 0; --r) {
      for (int c = 0; c < N; ++c) {
        const int digit = (c / stride) % Dim;
        const int base = c - digit * stride;
        double s = 0.0;
        for (int p = 0; p < Dim; ++p) s += e(p, digit) * a[base + p * stride];
        b[c] = s;
      }
      a = b;
      stride *= Dim;
    }
    double n2 = 0.0;
    for (double v : a) n2 += v * v;
    return n2;
  }

  static constexpr int ipow(int b, int e) { return e == 0 ? 1 : b * ipow(b, e - 1); }
};

/// Upper estimates of sup |d^i Rm(h)| for i = 1..max_order, from iterated partial derivatives
/// of every Rm component and the bound |T|_h^2 <= lambda_max(h^{-1})^rank |T|_delta^2.
template <int Dim>
void estimate_curvature_derivative_bounds(BackgroundGeometry<Dim>& bg, int max_order = 4) {
  if (bg.flat) {
    bg.nu.fill(0.0);
    return;
  }
  const auto& grid = bg.grid();
  double lam = 0.0;
  for (std::size_t idx = 0; idx < grid.size(); ++idx)
    lam = std::max(lam, Eigen::SelfAdjointEigenSolver<Mat<Dim>>(bg.h_inv.at(idx)).eigenvalues()(Dim - 1));
  constexpr int NR = Dim * Dim * Dim * Dim;
  for (int order = 1; order <= std::min(max_order, 4); ++order) {
    std::vector<double> acc(grid.size(), 0.0);
    // enumerate non-decreasing multi-indices with their permutation counts
    std::vector<std::vector<int>> multis;
    std::vector<int> cur;
    auto rec = [&](auto&& self, int start) -> void {
      if (static_cast<int>(cur.size()) == order) {
        multis.push_back(cur);
        return;
      }
      for (int a = start; a < Dim; ++a) {
        cur.push_back(a);
        self(self, a);
        cur.pop_back();
      }
    };
    rec(rec, 0);
    for (int c = 0; c < NR; ++c) {
      Field<Dim> comp(grid, TensorShape::scalar());
      auto src = bg.riemann.component(c);
      std::copy(src.begin(), src.end(), comp.component(0).begin());
      for (const auto& mi : multis) {
        Field<Dim> d = comp;
        for (int a : mi) d = partial_derivative(d, a);
        // multinomial multiplicity of the sorted multi-index
        double mult = 1.0;
        {
          int fact = 1;
          for (int q = 2; q <= order; ++q) fact *= q;
          std::array<int, Dim> cnt{};
          for (int a : mi) ++cnt[a];
          int denom = 1;
          for (int a = 0; a < Dim; ++a)
            for (int q = 2; q <= cnt[a]; ++q) denom *= q;
          mult = static_cast<double>(fact) / denom;
        }
        for (std::size_t idx = 0; idx < grid.size(); ++idx) acc[idx] += mult * d(0, idx) * d(0, idx);
      }
    }
    double sup = 0.0;
    for (double v : acc) sup = std::max(sup, v);
    bg.nu[order] = std::sqrt(sup * std::pow(lam, 4 + order));
  }
}

}  // namespace rdlab

#endif  // RDLAB_BACKGROUND_HPP
