#ifndef RDLAB_CURVATURE_HPP
#define RDLAB_CURVATURE_HPP

#include <optional>
#include <vector>

#include "rdlab/error.hpp"
#include "rdlab/field.hpp"
#include "rdlab/stencil.hpp"

namespace rdlab {

/// Shape of a Christoffel lattice: component (m*D + i)*D + j holds Gamma^m_{ij}.
inline TensorShape christoffel_shape() { return {3, false, 1u}; }

template <int Dim>
constexpr int gamma_index(int m, int i, int j) {
  return (m * Dim + i) * Dim + j;
}

/// Gamma^m_{ij} = 1/2 g^{mk} (d_i g_{jk} + d_j g_{ik} - d_k g_{ij}).
template <int Dim>
Field<Dim> christoffel(const MetricField<Dim>& g, FdOrder order = FdOrder::fourth) {
  const auto& grid = g.grid();
  const Stencil st = Stencil::of(order);
  const double inv_dx = 1.0 / grid.dx();
  Field<Dim> gamma(grid, christoffel_shape());
  constexpr int NS = Dim * (Dim + 1) / 2;
  std::array<const double*, NS> comp{};
  for (int c = 0; c < NS; ++c) comp[c] = g.comp_ptr(c);

  std::size_t bad_node = grid.size();
  double bad_lambda = 0.0;
  for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
    NeighbourTable<Dim> nb(grid, m);
    std::array<Mat<Dim>, Dim> dg;
    for (int k = 0; k < Dim; ++k)
      for (int i = 0; i < Dim; ++i)
        for (int j = i; j < Dim; ++j)
          dg[k](i, j) = dg[k](j, i) = d1_at<Dim>(comp[sym_index<Dim>(i, j)], idx, nb, k, st, inv_dx);
    const Mat<Dim> gm = g.at(idx);
    Eigen::LLT<Mat<Dim>> llt(gm);
    if (llt.info() != Eigen::Success) {
#pragma omp critical
      if (idx < bad_node) {
        bad_node = idx;
        bad_lambda = Eigen::SelfAdjointEigenSolver<Mat<Dim>>(gm).eigenvalues()(0);
      }
      return;
    }
    const Mat<Dim> ginv = llt.solve(Mat<Dim>::Identity());
    for (int i = 0; i < Dim; ++i)
      for (int j = i; j < Dim; ++j) {
        Vec<Dim> lowered;
        for (int k = 0; k < Dim; ++k) lowered[k] = 0.5 * (dg[i](j, k) + dg[j](i, k) - dg[k](i, j));
        const Vec<Dim> up = ginv * lowered;
        for (int mm = 0; mm < Dim; ++mm) {
          gamma(gamma_index<Dim>(mm, i, j), idx) = up[mm];
          gamma(gamma_index<Dim>(mm, j, i), idx) = up[mm];
        }
      }
  });
  if (bad_node < grid.size()) throw NonPositiveDefinite(bad_node, bad_lambda);
  return gamma;
}

/// Christoffel symbols, Riemann, Ricci and scalar curvature of one metric lattice.
///
/// Conventions: R_{ijk}^l = d_i Gamma^l_{jk} - d_j Gamma^l_{ik} + Gamma^p_{jk} Gamma^l_{ip}
/// - Gamma^p_{ik} Gamma^l_{jp}, lowered as R_{ijkl} = R_{ijk}^m g_{ml};
/// Rc_{jk} = R_{ijk}^i (symmetrised); R = g^{jk} Rc_{jk}. With these signs the round sphere
/// has positive scalar curvature.
template <int Dim>
struct CurvatureBundle {
  Field<Dim> christoffel;
  std::optional<Field<Dim>> riemann;  // rank 4, component ((i*D+j)*D+k)*D+l
  MetricField<Dim> ricci;
  Field<Dim> scalar;
};

struct CurvatureOptions {
  FdOrder order = FdOrder::fourth;
  bool keep_riemann = false;
};

template <int Dim>
CurvatureBundle<Dim> riemann_ricci_scalar(const MetricField<Dim>& g, CurvatureOptions opt = {}) {
  const auto& grid = g.grid();
  CurvatureBundle<Dim> out{christoffel(g, opt.order), std::nullopt, MetricField<Dim>(grid),
                           Field<Dim>(grid, TensorShape::scalar())};
  if (opt.keep_riemann) out.riemann.emplace(grid, TensorShape::covariant(4));
  const Stencil st = Stencil::of(opt.order);
  const double inv_dx = 1.0 / grid.dx();
  constexpr int NG = Dim * Dim * Dim;
  std::array<const double*, NG> gp{};
  for (int c = 0; c < NG; ++c) gp[c] = out.christoffel.comp_ptr(c);

  for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
    NeighbourTable<Dim> nb(grid, m);
    double G[Dim][Dim][Dim];
    double dG[Dim][Dim][Dim][Dim];  // dG[a][l][j][k] = d_a Gamma^l_{jk}
    for (int l = 0; l < Dim; ++l)
      for (int j = 0; j < Dim; ++j)
        for (int k = j; k < Dim; ++k) {
          const double* f = gp[gamma_index<Dim>(l, j, k)];
          G[l][j][k] = G[l][k][j] = f[idx];
          for (int a = 0; a < Dim; ++a) dG[a][l][j][k] = dG[a][l][k][j] = d1_at<Dim>(f, idx, nb, a, st, inv_dx);
        }
    const Mat<Dim> gm = g.at(idx);
    Mat<Dim> ric = Mat<Dim>::Zero();
    // Riemann R_{ijk}^l, computed for i < j and filled in by antisymmetry
    double up[Dim][Dim][Dim][Dim] = {};
    for (int i = 0; i < Dim; ++i)
      for (int j = i + 1; j < Dim; ++j)
        for (int k = 0; k < Dim; ++k)
          for (int l = 0; l < Dim; ++l) {
            double r = dG[i][l][j][k] - dG[j][l][i][k];
            for (int p = 0; p < Dim; ++p) r += G[p][j][k] * G[l][i][p] - G[p][i][k] * G[l][j][p];
            up[i][j][k][l] = r;
            up[j][i][k][l] = -r;
          }
    for (int i = 0; i < Dim; ++i)
      for (int j = 0; j < Dim; ++j)
        for (int k = 0; k < Dim; ++k) {
          ric(j, k) += up[i][j][k][i];
          if (out.riemann) {
            for (int l = 0; l < Dim; ++l) {
              double low = 0.0;
              for (int q = 0; q < Dim; ++q) low += up[i][j][k][q] * gm(q, l);
              (*out.riemann)(((i * Dim + j) * Dim + k) * Dim + l, idx) = low;
            }
          }
        }
    const Mat<Dim> ginv = gm.inverse();
    out.scalar(0, idx) = (ginv.cwiseProduct(ric)).sum();
    out.ricci.set(idx, 0.5 * (ric + ric.transpose()));
  });
  return out;
}

template <int Dim>
Field<Dim> scalar_curvature(const MetricField<Dim>& g, FdOrder order = FdOrder::fourth) {
  return riemann_ricci_scalar(g, {order, false}).scalar;
}

}  // namespace rdlab

#endif  // RDLAB_CURVATURE_HPP
