#ifndef RDLAB_DISTANCE_HPP
#define RDLAB_DISTANCE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "rdlab/deturck.hpp"
#include "rdlab/error.hpp"
#include "rdlab/field.hpp"
#include "rdlab/grid.hpp"

namespace rdlab {

/// Relative anisotropy of the k=2 stencil distance against Euclidean length on the flat metric.
inline constexpr double graph_anisotropy_tolerance = 0.08;

/// Node argument that does not take part in deduction (lets callers pass brace lists).
template <int Dim>
using NodeArg = std::type_identity_t<MultiIndex<Dim>>;

template <int Dim>
using NodePairs = std::type_identity_t<std::vector<std::pair<MultiIndex<Dim>, MultiIndex<Dim>>>>;

// ---------------------------------------------------------------------------
// shortest paths

/// Dijkstra over an implicit graph. `visit(u, emit)` calls emit(v, w) for each edge u->v, w > 0.
/// Stops early once `stop(u)` is true for a settled node; returns all tentative distances.
template <typename Visit, typename Stop>
std::vector<double> shortest_paths(std::size_t nodes, std::size_t source, Visit&& visit, Stop&& stop,
                                   std::size_t* reached = nullptr) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(nodes, inf);
  std::vector<char> done(nodes, 0);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;
  dist[source] = 0.0;
  pq.push({0.0, source});
  while (!pq.empty()) {
    auto [du, u] = pq.top();
    pq.pop();
    if (done[u]) continue;
    done[u] = 1;
    if (stop(u)) {
      if (reached) *reached = u;
      break;
    }
    visit(u, [&](std::size_t v, double w) {
      const double nd = du + w;
      if (nd < dist[v]) {
        dist[v] = nd;
        pq.push({nd, v});
      }
    });
  }
  return dist;
}

/// Explicit undirected weighted graph.
struct WeightedGraph {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;

  explicit WeightedGraph(std::size_t n = 0) : adj(n) {}
  std::size_t size() const { return adj.size(); }
  void add_edge(std::size_t u, std::size_t v, double w) {
    if (!(w > 0.0)) throw std::invalid_argument("edge weights must be > 0");
    adj.at(u).push_back({v, w});
    adj.at(v).push_back({u, w});
  }

  std::vector<double> distances_from(std::size_t source) const {
    return shortest_paths(
        size(), source,
        [&](std::size_t u, auto&& emit) {
          for (auto [v, w] : adj[u]) emit(v, w);
        },
        [](std::size_t) { return false; });
  }
};

// ---------------------------------------------------------------------------
// grid-metric distance

template <int Dim>
struct GraphMetricQuery {
  const MetricField<Dim>& g;
  int k = 2;
  MultiIndex<Dim> source{};
  MultiIndex<Dim> target{};
};

namespace detail {

template <int Dim>
struct StencilEdge {
  MultiIndex<Dim> off;
  std::array<double, Dim*(Dim + 1) / 2> coeff;  // v_i v_j dx^2 weights on packed components
};

template <int Dim>
std::vector<StencilEdge<Dim>> stencil_edges(const GridSpec<Dim>& grid, int k) {
  if (k < 1) throw std::invalid_argument("stencil radius must be >= 1");
  if (2 * k >= grid.n) throw std::invalid_argument("stencil radius too large for the grid");
  std::vector<StencilEdge<Dim>> out;
  MultiIndex<Dim> off;
  off.fill(-k);
  const double dx2 = grid.dx() * grid.dx();
  while (true) {
    if (std::any_of(off.begin(), off.end(), [](int o) { return o != 0; })) {
      StencilEdge<Dim> e{off, {}};
      for (int i = 0; i < Dim; ++i)
        for (int j = i; j < Dim; ++j) e.coeff[sym_index<Dim>(i, j)] = (i == j ? 1.0 : 2.0) * off[i] * off[j] * dx2;
      out.push_back(e);
    }
    int a = Dim - 1;
    while (a >= 0 && off[a] == k) off[a--] = -k;
    if (a < 0) break;
    ++off[a];
  }
  return out;
}

template <int Dim>
double quadratic_form(const MetricField<Dim>& g, std::size_t u, std::size_t v, const StencilEdge<Dim>& e) {
  double q = 0.0;
  for (int c = 0; c < Dim * (Dim + 1) / 2; ++c) q += e.coeff[c] * 0.5 * (g(c, u) + g(c, v));
  return q;
}

template <int Dim>
std::vector<double> grid_paths(const MetricField<Dim>& g, int k, std::size_t source, std::ptrdiff_t target) {
  const auto& grid = g.grid();
  const auto edges = stencil_edges(grid, k);
  return shortest_paths(
      grid.size(), source,
      [&](std::size_t u, auto&& emit) {
        const auto m = grid.multi(u);
        for (const auto& e : edges) {
          MultiIndex<Dim> w = m;
          for (int a = 0; a < Dim; ++a) w[a] += e.off[a];
          const std::size_t v = grid.index(w);
          const double q = quadratic_form(g, u, v, e);
          if (!(q > 0.0)) throw NonPositiveDefinite(u, q);
          emit(v, std::sqrt(q));
        }
      },
      [&](std::size_t u) { return static_cast<std::ptrdiff_t>(u) == target; });
}

}  // namespace detail

/// Dijkstra distance on the periodic grid graph; edges to every offset with |offset|_inf <= k,
/// weighted by the metric averaged over the two endpoints.
template <int Dim>
double graph_distance(const GraphMetricQuery<Dim>& q) {
  const auto& grid = q.g.grid();
  const std::size_t s = grid.index(q.source), t = grid.index(q.target);
  return detail::grid_paths(q.g, q.k, s, static_cast<std::ptrdiff_t>(t))[t];
}

template <int Dim>
double graph_distance(const MetricField<Dim>& g, const NodeArg<Dim>& source, const NodeArg<Dim>& target, int k = 2) {
  return graph_distance(GraphMetricQuery<Dim>{g, k, source, target});
}

/// Distances from `source` to every node.
template <int Dim>
std::vector<double> graph_distances_from(const MetricField<Dim>& g, const NodeArg<Dim>& source, int k = 2) {
  return detail::grid_paths(g, k, g.grid().index(source), -1);
}

/// Independent queries, evaluated in parallel.
template <int Dim>
std::vector<double> graph_distances(const MetricField<Dim>& g, const NodePairs<Dim>& pairs, int k = 2) {
  std::vector<double> out(pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(pairs.size()); ++i)
    out[i] = graph_distance(g, pairs[i].first, pairs[i].second, k);
  return out;
}

// ---------------------------------------------------------------------------
// Lebesgue lines

/// Axis-parallel segment of `length` cells from `start`; tube radii in chart units.
template <int Dim>
struct LebesgueLine {
  int axis = 0;
  MultiIndex<Dim> start{};
  int length = 0;
  std::vector<double> radii;

  double chart_length(const GridSpec<Dim>& grid) const { return length * grid.dx(); }
  MultiIndex<Dim> end() const {
    auto m = start;
    m[axis] += length;
    return m;
  }
  /// Segment fits a coordinate ball of radius `unit` with room to spare.
  bool admissible(const GridSpec<Dim>& grid, double unit) const { return chart_length(grid) <= 0.25 * unit; }
};

/// Transverse lattice disc: offsets orthogonal to `axis` within radius alpha.
template <int Dim>
struct TransverseDisc {
  std::vector<MultiIndex<Dim>> offsets;
  double mean_rho2 = 0.0;  // chart units squared
};

template <int Dim>
TransverseDisc<Dim> transverse_disc(const GridSpec<Dim>& grid, int axis, double alpha) {
  const double dx = grid.dx();
  const int r = static_cast<int>(std::floor(alpha / dx + 1e-9));
  if (2 * r >= grid.n) throw BallTooLarge(alpha);
  TransverseDisc<Dim> disc;
  MultiIndex<Dim> off;
  off.fill(-r);
  off[axis] = 0;
  double sum = 0.0;
  while (true) {
    long rr = 0;
    for (int a = 0; a < Dim; ++a) rr += static_cast<long>(off[a]) * off[a];
    if (rr * dx * dx <= alpha * alpha * (1.0 + 1e-12)) {
      disc.offsets.push_back(off);
      sum += rr * dx * dx;
    }
    int a = Dim - 1;
    while (a >= 0 && (a == axis || off[a] == r)) {
      if (a != axis) off[a] = -r;
      --a;
    }
    if (a < 0) break;
    ++off[a];
  }
  disc.mean_rho2 = sum / disc.offsets.size();
  return disc;
}

namespace detail {

/// Trapezoid sum of sqrt(g_aa) along the line through `start`, in chart units.
template <int Dim>
double line_sum(const MetricField<Dim>& g, int axis, const NodeArg<Dim>& start, int length) {
  const auto& grid = g.grid();
  const int c = sym_index<Dim>(axis, axis);
  double s = 0.0;
  for (int i = 0; i <= length; ++i) {
    auto m = start;
    m[axis] += i;
    const double w = (i == 0 || i == length) ? 0.5 : 1.0;
    s += w * std::sqrt(g(c, grid.index(m)));
  }
  return s * grid.dx();
}

/// Extrapolates tube averages T(alpha) = a + b * mean_rho2(alpha) to mean_rho2 = 0, pair by pair.
inline std::vector<double> moment_extrapolants(const std::vector<double>& values, const std::vector<double>& m2) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    const double d = m2[i] - m2[i + 1];
    out.push_back(d == 0.0 ? values[i + 1] : (m2[i] * values[i + 1] - m2[i + 1] * values[i]) / d);
  }
  return out;
}

}  // namespace detail

/// Averaged line integral of sqrt(g_aa) over the tube of radius alpha, normalized by the lattice disc.
template <int Dim>
double tube_average_length(const MetricField<Dim>& g, const LebesgueLine<Dim>& line, double alpha) {
  const auto& grid = g.grid();
  if (alpha < grid.dx() * (1.0 - 1e-12)) throw std::invalid_argument("tube radius must be >= dx");
  const auto disc = transverse_disc(grid, line.axis, alpha);
  double s = 0.0;
  for (const auto& off : disc.offsets) {
    auto m = line.start;
    for (int a = 0; a < Dim; ++a) m[a] += off[a];
    s += detail::line_sum(g, line.axis, m, line.length);
  }
  return s / disc.offsets.size();
}

struct LebesgueLength {
  double value = 0.0;
  std::vector<double> tube_values;
  std::vector<double> extrapolants;
  bool non_convergent = false;
};

/// alpha -> 0 limit of tube averages over the line's radius list (default 4, 3, 2 dx).
template <int Dim>
LebesgueLength lebesgue_length(const MetricField<Dim>& g, const LebesgueLine<Dim>& line) {
  const auto& grid = g.grid();
  auto radii = line.radii;
  if (radii.empty()) radii = {4 * grid.dx(), 3 * grid.dx(), 2 * grid.dx()};
  std::sort(radii.begin(), radii.end(), std::greater<>());
  LebesgueLength out;
  std::vector<double> m2;
  for (double r : radii) {
    out.tube_values.push_back(tube_average_length(g, line, r));
    m2.push_back(transverse_disc(grid, line.axis, r).mean_rho2);
  }
  out.extrapolants = detail::moment_extrapolants(out.tube_values, m2);
  if (out.extrapolants.empty()) {
    out.value = out.tube_values.back();
    return out;
  }
  out.value = out.extrapolants.back();
  for (std::size_t i = 1; i < out.extrapolants.size(); ++i)
    if (std::abs(out.extrapolants[i] - out.extrapolants[i - 1]) > 0.1 * std::abs(out.extrapolants[i]))
      out.non_convergent = true;
  return out;
}

/// Per-node Lebesgue density of axis `axis`: extrapolated disc averages of sqrt(g_aa).
/// Where the extrapolants disagree by more than 10% the smallest-disc average is kept.
template <int Dim>
Field<Dim> lebesgue_density(const MetricField<Dim>& g, int axis, std::vector<double> radii = {}) {
  const auto& grid = g.grid();
  if (radii.empty()) radii = {3 * grid.dx(), 2 * grid.dx(), grid.dx()};
  std::sort(radii.begin(), radii.end(), std::greater<>());
  std::vector<TransverseDisc<Dim>> discs;
  std::vector<double> m2;
  for (double r : radii) {
    discs.push_back(transverse_disc(grid, axis, r));
    m2.push_back(discs.back().mean_rho2);
  }
  const int c = sym_index<Dim>(axis, axis);
  Field<Dim> root(grid, TensorShape::scalar());
  for (std::size_t i = 0; i < grid.size(); ++i) root(0, i) = std::sqrt(g(c, i));
  Field<Dim> out(grid, TensorShape::scalar());
  for_each_node(grid, [&](std::size_t idx, const MultiIndex<Dim>& m) {
    std::vector<double> avg;
    for (const auto& d : discs) {
      double s = 0.0;
      for (const auto& off : d.offsets) {
        auto w = m;
        for (int a = 0; a < Dim; ++a) w[a] += off[a];
        s += root(0, grid.index(w));
      }
      avg.push_back(s / d.offsets.size());
    }
    const auto ex = detail::moment_extrapolants(avg, m2);
    double v = ex.empty() ? avg.back() : ex.back();
    for (std::size_t i = 1; i < ex.size(); ++i)
      if (std::abs(ex[i] - ex[i - 1]) > 0.1 * std::abs(ex[i])) v = avg.back();
    out(0, idx) = v > 0.0 ? v : avg.back();
  });
  return out;
}

// ---------------------------------------------------------------------------
// epsilon-approximative staircase curves

template <int Dim>
struct ApproxCurve {
  std::vector<LebesgueLine<Dim>> lines;
  double budget = 0.0;
  double jump_total = 0.0;
};

template <int Dim>
struct D0Estimate {
  double length = 0.0;
  double budget_used = 0.0;
  ApproxCurve<Dim> curve;
};

/// Best staircase length from x to y: unit axis segments priced by the Lebesgue density,
/// plus jumps of one cell (charged dx each against the budget eps, at no length cost).
template <int Dim>
D0Estimate<Dim> d0_estimate(const MetricField<Dim>& g0, const NodeArg<Dim>& x, const NodeArg<Dim>& y, double eps,
                            const std::vector<double>& radii = {}) {
  const auto& grid = g0.grid();
  const std::size_t sx = grid.index(x), sy = grid.index(y);
  if (sx == sy) throw std::invalid_argument("d0_estimate needs x != y");
  if (eps < 0.0) throw std::invalid_argument("jump budget must be >= 0");
  const double dx = grid.dx();
  const int J = static_cast<int>(std::floor(eps / dx + 1e-9));
  std::array<Field<Dim>, Dim> dens;
  for (int a = 0; a < Dim; ++a) dens[a] = lebesgue_density(g0, a, radii);
  const std::size_t nn = grid.size();
  std::size_t reached = 0;
  const auto dist = shortest_paths(
      nn * (J + 1), sx,
      [&](std::size_t s, auto&& emit) {
        const std::size_t u = s % nn, j = s / nn;
        for (int a = 0; a < Dim; ++a)
          for (int sgn : {-1, 1}) {
            MultiIndex<Dim> off{};
            off[a] = sgn;
            const std::size_t v = grid.shifted(u, off);
            emit(j * nn + v, 0.5 * dx * (dens[a](0, u) + dens[a](0, v)));
            if (static_cast<int>(j) < J) emit((j + 1) * nn + v, std::numeric_limits<double>::min());
          }
      },
      [&](std::size_t s) { return s % nn == sy; }, &reached);
  if (!std::isfinite(dist[reached]) || reached % nn != sy) throw NoCurveFound("no staircase connects x and y");
  D0Estimate<Dim> out;
  out.length = dist[reached];
  out.budget_used = static_cast<double>(reached / nn) * dx;
  out.curve.budget = eps;
  out.curve.jump_total = out.budget_used;
  return out;
}

// ---------------------------------------------------------------------------
// good slices

template <int Dim>
struct GoodSliceQuery {
  int axis = 0;
  MultiIndex<Dim> center{};
  int line_nodes = 0;  // 0: one full period
  double eps = 0.05;
};

struct GoodSlice {
  std::vector<int> offset;
  double integral = 0.0;
  double alpha = 0.0;            // integral of |g0 - delta|^2 over the block
  double bad_measure = 0.0;      // (n-1)-measure of offsets whose integral exceeds 1 + eps
  double alpha_eighth = 0.0;     // alpha^(1/8), the scale the bad set is compared against
  std::size_t candidates = 0;
  double bound = 0.0;
  bool within_bound = false;
  bool calibrated = false;       // alpha <= eps^4
};

template <int Dim>
double l2_deviation_from_identity(const MetricField<Dim>& g0) {
  const auto& grid = g0.grid();
  double s = 0.0;
  for (std::size_t idx = 0; idx < grid.size(); ++idx)
    s += (g0.at(idx) - Mat<Dim>::Identity()).squaredNorm();
  return s * grid.cell_volume();
}

/// Scans offsets in the transverse disc of radius eps and returns the one minimizing the axis line integral
/// (ties: smallest offset). Raises SearchFailed if alpha <= eps^4 and the minimum exceeds 1 + eps.
template <int Dim>
GoodSlice good_slice_search(const MetricField<Dim>& g0, const GoodSliceQuery<Dim>& q) {
  const auto& grid = g0.grid();
  const int len = q.line_nodes > 0 ? q.line_nodes : grid.n;
  const auto disc = transverse_disc(grid, q.axis, std::max(q.eps, 0.0));
  GoodSlice out;
  out.alpha = l2_deviation_from_identity(g0);
  out.alpha_eighth = std::pow(out.alpha, 0.125);
  out.bound = (len * grid.dx()) * (1.0 + q.eps);
  out.calibrated = out.alpha <= std::pow(q.eps, 4);
  out.candidates = disc.offsets.size();
  std::vector<double> vals(disc.offsets.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(vals.size()); ++i) {
    auto m = q.center;
    for (int a = 0; a < Dim; ++a) m[a] += disc.offsets[i][a];
    vals[i] = detail::line_sum(g0, q.axis, m, len);
  }
  std::size_t best = 0;
  auto norm2 = [&](std::size_t i) {
    long s = 0;
    for (int o : disc.offsets[i]) s += static_cast<long>(o) * o;
    return s;
  };
  std::size_t bad = 0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (vals[i] > out.bound) ++bad;
    if (vals[i] < vals[best] || (vals[i] == vals[best] && norm2(i) < norm2(best))) best = i;
  }
  out.offset.assign(disc.offsets[best].begin(), disc.offsets[best].end());
  out.integral = vals[best];
  out.bad_measure = bad * std::pow(grid.dx(), Dim - 1);
  out.within_bound = out.integral <= out.bound;
  if (out.calibrated && !out.within_bound) throw SearchFailed(out.integral, out.bound);
  return out;
}

// ---------------------------------------------------------------------------
// comparisons along a flow

struct DistanceSeries {
  std::vector<double> times;
  std::vector<double> d;
};

template <int Dim>
DistanceSeries distance_series(const std::vector<Snapshot<Dim>>& traj, const NodeArg<Dim>& x,
                               const NodeArg<Dim>& y, int k = 2) {
  DistanceSeries s;
  for (const auto& snap : traj) {
    s.times.push_back(snap.t);
    s.d.push_back(graph_distance(snap.g, x, y, k));
  }
  return s;
}

struct LowerBoundReport {
  double line_length = 0.0;  // L_{g0}(sigma)
  std::vector<double> times;
  std::vector<double> distances;
  std::vector<double> ratios;
  double liminf = 0.0;  // min ratio over the three smallest positive times
  double eps_tol = 0.05;
  bool pass = false;
};

/// r(t) = L_{g0}(sigma) / d(g(t))(sigma endpoints) along the trajectory.
template <int Dim>
LowerBoundReport lower_bound_check(const MetricField<Dim>& g0, const std::vector<Snapshot<Dim>>& traj,
                                   const LebesgueLine<Dim>& sigma, int k = 2, double eps_tol = 0.05) {
  LowerBoundReport rep;
  rep.eps_tol = eps_tol;
  rep.line_length = lebesgue_length(g0, sigma).value;
  const auto ds = distance_series(traj, sigma.start, sigma.end(), k);
  rep.times = ds.times;
  rep.distances = ds.d;
  std::vector<std::pair<double, double>> positive;
  for (std::size_t i = 0; i < ds.d.size(); ++i) {
    rep.ratios.push_back(rep.line_length / ds.d[i]);
    if (ds.times[i] > 0.0) positive.push_back({ds.times[i], rep.ratios.back()});
  }
  std::sort(positive.begin(), positive.end());
  if (positive.empty()) {
    rep.liminf = rep.ratios.empty() ? 0.0 : rep.ratios.front();
  } else {
    rep.liminf = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < std::min<std::size_t>(3, positive.size()); ++i)
      rep.liminf = std::min(rep.liminf, positive[i].second);
  }
  rep.pass = rep.liminf >= 1.0 - eps_tol;
  return rep;
}

// ---------------------------------------------------------------------------
// CSV

struct DistanceRow {
  std::string source;
  std::string target;
  double param = 0.0;  // eps or t
  double value = 0.0;
  double budget = 0.0;
  double tolerance = graph_anisotropy_tolerance;
};

template <int Dim>
std::string node_label(const MultiIndex<Dim>& m) {
  std::string s;
  for (int a = 0; a < Dim; ++a) s += (a ? ":" : "") + std::to_string(m[a]);
  return s;
}

inline std::string distance_csv(const std::vector<DistanceRow>& rows, const std::string& param_name = "t") {
  std::ostringstream os;
  os.precision(17);
  os << "source,target," << param_name << ",value,budget,tolerance\n";
  for (const auto& r : rows)
    os << r.source << ',' << r.target << ',' << r.param << ',' << r.value << ',' << r.budget << ',' << r.tolerance
       << '\n';
  return os.str();
}

}  // namespace rdlab

#endif  // RDLAB_DISTANCE_HPP
