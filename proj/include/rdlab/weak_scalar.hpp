#ifndef RDLAB_WEAK_SCALAR_HPP
#define RDLAB_WEAK_SCALAR_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "rdlab/calculus.hpp"

namespace rdlab {

/// min over the grid of R(mollify(g0, s)) for each scale s (decreasing, all >= dx).
template <int Dim>
std::vector<double> weak_scalar_floor(const MetricField<Dim>& g0, const std::vector<double>& scales,
                                      FdOrder order = FdOrder::fourth) {
  std::vector<double> floors;
  floors.reserve(scales.size());
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (i > 0 && !(scales[i] < scales[i - 1])) throw std::invalid_argument("scales must be strictly decreasing");
    const auto r = scalar_curvature(mollify(g0, scales[i]), order);
    floors.push_back(*std::min_element(r.raw().begin(), r.raw().end()));
  }
  return floors;
}

struct WeakFloorVerdict {
  double C = 0.0;  // least-squares fit of deficit(s) = C sqrt(s)
  std::vector<double> deficits;
  bool accepted = false;
};

/// Lab rule for "R(g0) >= k": deficits max(0, k - floor(s)) are nonincreasing as s shrinks
/// and the smallest-scale deficit is within the fitted C sqrt(s) envelope (plus abs_tol).
inline WeakFloorVerdict weak_floor_acceptance(const std::vector<double>& scales, const std::vector<double>& floors,
                                              double k, double abs_tol = 1e-10) {
  WeakFloorVerdict v;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const double d = std::max(0.0, k - floors[i]);
    v.deficits.push_back(d);
    num += d * std::sqrt(scales[i]);
    den += scales[i];
  }
  v.C = den > 0.0 ? num / den : 0.0;
  bool monotone = true;
  for (std::size_t i = 1; i < v.deficits.size(); ++i)
    if (v.deficits[i] > v.deficits[i - 1] + abs_tol) monotone = false;
  const bool envelope = v.deficits.empty() || v.deficits.back() <= v.C * std::sqrt(scales.back()) + abs_tol;
  v.accepted = monotone && envelope;
  return v;
}

}  // namespace rdlab

#endif  // RDLAB_WEAK_SCALAR_HPP
