#ifndef RDLAB_JET_HPP
#define RDLAB_JET_HPP

#include <array>

#include "rdlab/background.hpp"

namespace rdlab {

/// Metric and its first two background-covariant derivatives at one node.
/// d[k](i,j) = nabla_k g_ij, dd[a][b](i,j) = nabla_a nabla_b g_ij.
template <int Dim>
struct MetricJet {
  Mat<Dim> g;
  std::array<Mat<Dim>, Dim> d;
  std::array<std::array<Mat<Dim>, Dim>, Dim> dd;
};

/// Builds jets of a metric lattice node by node. Partial derivatives come from the stencils;
/// Gamma(h) corrections are applied when the background is curved.
template <int Dim>
class JetBuilder {
 public:
  static constexpr int NS = Dim * (Dim + 1) / 2;

  JetBuilder(const MetricField<Dim>& g, const BackgroundGeometry<Dim>& bg, FdOrder order = FdOrder::fourth)
      : g_(g), bg_(bg), st_(Stencil::of(order)), inv_dx_(1.0 / g.grid().dx()) {
    for (int c = 0; c < NS; ++c) comp_[c] = g.comp_ptr(c);
  }

  MetricJet<Dim> operator()(std::size_t idx, const MultiIndex<Dim>& m, bool second = true) const {
    NeighbourTable<Dim> nb(g_.grid(), m);
    MetricJet<Dim> jet;
    jet.g = g_.at(idx);
    for (int i = 0; i < Dim; ++i)
      for (int j = i; j < Dim; ++j) {
        const double* f = comp_[sym_index<Dim>(i, j)];
        for (int k = 0; k < Dim; ++k) jet.d[k](i, j) = jet.d[k](j, i) = d1_at<Dim>(f, idx, nb, k, st_, inv_dx_);
        if (!second) continue;
        for (int a = 0; a < Dim; ++a)
          for (int b = a; b < Dim; ++b) {
            const double v = d2_at<Dim>(f, idx, nb, a, b, st_, inv_dx_);
            jet.dd[a][b](i, j) = jet.dd[a][b](j, i) = v;
            jet.dd[b][a](i, j) = jet.dd[b][a](j, i) = v;
          }
      }
    if (!bg_.flat) make_covariant(jet, idx, second);
    return jet;
  }

  /// Connection matrix C_b(i,p) = Gamma(h)^p_{bi}.
  Mat<Dim> connection(int b, std::size_t idx) const {
    Mat<Dim> c;
    for (int i = 0; i < Dim; ++i)
      for (int p = 0; p < Dim; ++p) c(i, p) = bg_.christoffel(gamma_index<Dim>(p, b, i), idx);
    return c;
  }

 private:
  void make_covariant(MetricJet<Dim>& jet, std::size_t idx, bool second) const {
    constexpr int NG = Dim * Dim * Dim;
    std::array<Mat<Dim>, Dim> C;
    for (int b = 0; b < Dim; ++b) C[b] = connection(b, idx);
    std::array<Mat<Dim>, Dim> cov;
    for (int b = 0; b < Dim; ++b) cov[b] = jet.d[b] - C[b] * jet.g - jet.g * C[b].transpose();
    if (second) {
      std::array<std::array<Mat<Dim>, Dim>, Dim> dd;
      for (int a = 0; a < Dim; ++a) {
        for (int b = 0; b < Dim; ++b) {
          Mat<Dim> dC;
          for (int i = 0; i < Dim; ++i)
            for (int p = 0; p < Dim; ++p) dC(i, p) = bg_.dchristoffel(a * NG + gamma_index<Dim>(p, b, i), idx);
          Mat<Dim> t = jet.dd[a][b] - dC * jet.g - C[b] * jet.d[a] - jet.d[a] * C[b].transpose() -
                       jet.g * dC.transpose();
          for (int p = 0; p < Dim; ++p) t -= bg_.christoffel(gamma_index<Dim>(p, a, b), idx) * cov[p];
          t -= C[a] * cov[b] + cov[b] * C[a].transpose();
          dd[a][b] = t;
        }
      }
      jet.dd = dd;
    }
    jet.d = cov;
  }

  const MetricField<Dim>& g_;
  const BackgroundGeometry<Dim>& bg_;
  Stencil st_;
  double inv_dx_;
  std::array<const double*, NS> comp_{};
};

/// h-orthonormal coframe at a node: columns e with h^{-1} = e e^T.
template <int Dim>
Mat<Dim> coframe(const BackgroundGeometry<Dim>& bg, std::size_t idx) {
  if (bg.flat) return Mat<Dim>::Identity();
  Eigen::LLT<Mat<Dim>> llt(bg.h_inv.at(idx));
  return llt.matrixL();
}

/// |nabla g|_h^2 from a jet.
template <int Dim>
double first_derivative_norm2(const MetricJet<Dim>& jet, const Mat<Dim>& e, bool flat) {
  if (flat) {
    double s = 0.0;
    for (int k = 0; k < Dim; ++k) s += jet.d[k].squaredNorm();
    return s;
  }
  double t[Dim * Dim * Dim];
  for (int k = 0; k < Dim; ++k)
    for (int i = 0; i < Dim; ++i)
      for (int j = 0; j < Dim; ++j) t[(k * Dim + i) * Dim + j] = jet.d[k](i, j);
  return BackgroundGeometry<Dim>::template frame_norm2<3>(t, e);
}

/// |nabla^2 g|_h^2 from a jet.
template <int Dim>
double second_derivative_norm2(const MetricJet<Dim>& jet, const Mat<Dim>& e, bool flat) {
  if (flat) {
    double s = 0.0;
    for (int a = 0; a < Dim; ++a)
      for (int b = 0; b < Dim; ++b) s += jet.dd[a][b].squaredNorm();
    return s;
  }
  double t[Dim * Dim * Dim * Dim];
  for (int a = 0; a < Dim; ++a)
    for (int b = 0; b < Dim; ++b)
      for (int i = 0; i < Dim; ++i)
        for (int j = 0; j < Dim; ++j) t[((a * Dim + b) * Dim + i) * Dim + j] = jet.dd[a][b](i, j);
  return BackgroundGeometry<Dim>::template frame_norm2<4>(t, e);
}

}  // namespace rdlab

#endif  // RDLAB_JET_HPP
