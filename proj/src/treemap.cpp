#include "hypochain/treemap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "hypochain/error.hpp"

namespace hypochain::layout {

using geometry::LabeledPolygon;
using geometry::Point;
using geometry::Polygon;

namespace {

constexpr int kRegionEdge = -1;
constexpr int kMaxLineSearch = 30;

double Dist2(const Point& a, const Point& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

// Strict interior test for a counter-clockwise convex polygon.
bool StrictlyInside(const Point& p, const Polygon& convex) {
  const std::size_t n = convex.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = convex[i];
    const Point& b = convex[(i + 1) % n];
    if ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) <= 0.0) return false;
  }
  return true;
}

Polygon CounterClockwise(Polygon polygon) {
  if (geometry::SignedArea(polygon) < 0.0) std::reverse(polygon.begin(), polygon.end());
  return polygon;
}

std::vector<LabeledPolygon> LabeledCells(const Polygon& region, std::span<const Point> sites,
                                         std::span<const double> w) {
  const std::size_t n = sites.size();
  LabeledPolygon base{region, std::vector<int>(region.size(), kRegionEdge)};
  std::vector<LabeledPolygon> cells(n);
  for (std::size_t i = 0; i < n; ++i) {
    LabeledPolygon cell = base;
    const Point& p = sites[i];
    const double pp = p.x * p.x + p.y * p.y;
    for (std::size_t j = 0; j < n && !cell.vertices.empty(); ++j) {
      if (j == i) continue;
      const Point& q = sites[j];
      const double nx = 2.0 * (q.x - p.x);
      const double ny = 2.0 * (q.y - p.y);
      const double c = q.x * q.x + q.y * q.y - pp + w[i] - w[j];
      if (nx == 0.0 && ny == 0.0) {
        // Coincident sites: the heavier one takes the whole overlap.
        if (c < 0.0 || (c == 0.0 && j < i)) cell.vertices.clear();
        continue;
      }
      cell = geometry::ClipHalfPlane(cell, nx, ny, c, static_cast<int>(j));
    }
    cells[i] = std::move(cell);
  }
  return cells;
}

struct Evaluation {
  std::vector<LabeledPolygon> cells;
  std::vector<double> areas;
  double max_relative_error = 0.0;
  double residual_norm = 0.0;
};

Evaluation Evaluate(const Polygon& region, std::span<const Point> sites,
                    std::span<const double> w, std::span<const double> targets) {
  Evaluation e;
  e.cells = LabeledCells(region, sites, w);
  e.areas.resize(sites.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    e.areas[i] = geometry::Area(e.cells[i].vertices);
    const double diff = e.areas[i] - targets[i];
    e.max_relative_error = std::max(e.max_relative_error, std::abs(diff) / targets[i]);
    sq += diff * diff;
  }
  e.residual_norm = std::sqrt(sq);
  return e;
}

// Keeps every site inside its own cell: w_i - w_j <= d_ij^2 holds for all
// pairs when 0 <= w_i <= min_j d_ij^2.
void CapWeights(std::span<const Point> sites, std::vector<double>& w, double floor) {
  const std::size_t n = sites.size();
  for (std::size_t i = 0; i < n; ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) nearest = std::min(nearest, Dist2(sites[i], sites[j]));
    }
    w[i] = std::clamp(w[i], floor, std::max(floor, nearest));
  }
}

// Newton direction for area(w) = targets with sites fixed. The Jacobian is the
// weighted Laplacian of the cell adjacency; weight 0 is pinned.
std::vector<double> NewtonStep(const Evaluation& e, std::span<const Point> sites,
                               std::span<const double> targets) {
  const auto n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& cell = e.cells[static_cast<std::size_t>(i)];
    const std::size_t m = cell.vertices.size();
    for (std::size_t k = 0; k < m; ++k) {
      const int j = cell.edge_labels[k];
      if (j < 0) continue;
      const double len = std::sqrt(Dist2(cell.vertices[k], cell.vertices[(k + 1) % m]));
      const double d = std::sqrt(Dist2(sites[static_cast<std::size_t>(i)],
                                       sites[static_cast<std::size_t>(j)]));
      const double h = len / (2.0 * d);
      jac(i, j) -= h;
      jac(i, i) += h;
    }
  }
  jac = 0.5 * (jac + jac.transpose());
  Eigen::VectorXd residual(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    residual(i) = targets[static_cast<std::size_t>(i)] - e.areas[static_cast<std::size_t>(i)];
  }
  const Eigen::Index r = n - 1;
  Eigen::MatrixXd reduced = jac.bottomRightCorner(r, r);
  const double ridge = 1e-12 * std::max(1.0, reduced.diagonal().cwiseAbs().maxCoeff());
  reduced.diagonal().array() += ridge;
  const Eigen::VectorXd delta = reduced.ldlt().solve(residual.tail(r));
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index i = 0; i < r; ++i) out[static_cast<std::size_t>(i + 1)] = delta(i);
  return out;
}

Polygon Unlabeled(const LabeledPolygon& cell) { return cell.vertices; }

}  // namespace

std::uint64_t SplitMix64::Next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t HashSeed(std::uint64_t seed, const std::string& salt) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : salt) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  SplitMix64 mix(seed ^ h);
  return mix.Next();
}

std::vector<Polygon> PowerDiagram(const Polygon& region, std::span<const Point> sites,
                                  std::span<const double> power_weights) {
  const auto ccw = CounterClockwise(region);
  auto cells = LabeledCells(ccw, sites, power_weights);
  std::vector<Polygon> out;
  out.reserve(cells.size());
  for (const auto& c : cells) out.push_back(Unlabeled(c));
  return out;
}

std::vector<Point> JitteredGridSites(const Polygon& region_in, std::size_t n,
                                     std::uint64_t seed) {
  const auto region = CounterClockwise(region_in);
  if (n == 0) return {};
  if (n == 1) return {geometry::Centroid(region)};
  double min_x = region[0].x, max_x = region[0].x;
  double min_y = region[0].y, max_y = region[0].y;
  for (const auto& p : region) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double area = geometry::Area(region);
  double density = 1.5;
  for (int attempt = 0; attempt < 16; ++attempt, density *= 2.0) {
    SplitMix64 rng(seed + static_cast<std::uint64_t>(attempt));
    const double step = std::sqrt(area / (static_cast<double>(n) * density));
    const auto cols = static_cast<std::size_t>(std::ceil((max_x - min_x) / step));
    const auto rows = static_cast<std::size_t>(std::ceil((max_y - min_y) / step));
    std::vector<Point> points;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const Point p{min_x + (static_cast<double>(c) + 0.15 + 0.7 * rng.Uniform()) * step,
                      min_y + (static_cast<double>(r) + 0.15 + 0.7 * rng.Uniform()) * step};
        if (StrictlyInside(p, region)) points.push_back(p);
      }
    }
    if (points.size() < n) continue;
    for (std::size_t i = points.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.Uniform() * static_cast<double>(i + 1));
      std::swap(points[i], points[std::min(j, i)]);
    }
    points.resize(n);
    return points;
  }
  throw ContractError("cannot place layout sites inside a degenerate region");
}

Partition PartitionConvex(const Polygon& region_in, std::span<const double> weights,
                          std::uint64_t seed, const TreemapOptions& options) {
  const auto region = CounterClockwise(region_in);
  const double region_area = geometry::Area(region);
  if (!(region_area > 0.0)) throw ContractError("zero-area layout container");
  const std::size_t n = weights.size();
  if (n == 0) throw ContractError("nothing to lay out");
  for (const double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw ContractError("layout weights must be finite and strictly positive");
    }
  }

  Partition out;
  if (n == 1) {
    out.cells = {region};
    out.sites = {geometry::Centroid(region)};
    out.power_weights = {0.0};
    out.converged = true;
    return out;
  }

  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<double> targets(n);
  for (std::size_t i = 0; i < n; ++i) targets[i] = region_area * weights[i] / total;

  std::vector<Point> sites = JitteredGridSites(region, n, seed);
  // Heavier entities get sites nearer the region centre, which leaves them
  // room to grow.
  {
    const Point centre = geometry::Centroid(region);
    std::vector<std::size_t> by_weight(n), by_centrality(n);
    std::iota(by_weight.begin(), by_weight.end(), 0);
    std::iota(by_centrality.begin(), by_centrality.end(), 0);
    std::stable_sort(by_weight.begin(), by_weight.end(),
                     [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
    std::stable_sort(by_centrality.begin(), by_centrality.end(), [&](std::size_t a, std::size_t b) {
      return Dist2(sites[a], centre) < Dist2(sites[b], centre);
    });
    std::vector<Point> assigned(n);
    for (std::size_t k = 0; k < n; ++k) assigned[by_weight[k]] = sites[by_centrality[k]];
    sites = std::move(assigned);
  }

  const double floor = region_area * 1e-12;
  std::vector<double> w(n, region_area / static_cast<double>(n) * 1e-2);
  CapWeights(sites, w, floor);

  const int budget = options.max_iterations;
  int iteration = 0;
  Evaluation eval = Evaluate(region, sites, w, targets);

  // Relaxation: centroid moves plus multiplicative weight adaptation.
  while (eval.max_relative_error >= options.level_tolerance && iteration < budget &&
         iteration < options.relaxation_iterations) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!eval.cells[i].vertices.empty()) sites[i] = geometry::Centroid(eval.cells[i].vertices);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double ratio = eval.areas[i] > 0.0 ? targets[i] / eval.areas[i] : 2.0;
      w[i] *= std::clamp(ratio, 0.5, 2.0);
    }
    CapWeights(sites, w, floor);
    eval = Evaluate(region, sites, w, targets);
    ++iteration;
  }

  // Refinement: damped Newton on the weights with sites held fixed.
  while (eval.max_relative_error >= options.level_tolerance && iteration < budget) {
    const auto step = NewtonStep(eval, sites, targets);
    const double min_target = *std::min_element(targets.begin(), targets.end());
    const double min_area = *std::min_element(eval.areas.begin(), eval.areas.end());
    const double area_floor = 0.5 * std::min(min_target, min_area);
    double tau = 1.0;
    bool accepted = false;
    for (int k = 0; k < kMaxLineSearch; ++k, tau *= 0.5) {
      std::vector<double> trial(w);
      for (std::size_t i = 0; i < n; ++i) trial[i] += tau * step[i];
      auto next = Evaluate(region, sites, trial, targets);
      const double next_min = *std::min_element(next.areas.begin(), next.areas.end());
      if (next_min >= area_floor && next.residual_norm <= (1.0 - tau / 2.0) * eval.residual_norm) {
        w = std::move(trial);
        eval = std::move(next);
        accepted = true;
        break;
      }
    }
    ++iteration;
    if (!accepted) break;
  }

  out.iterations = iteration;
  out.max_relative_error = eval.max_relative_error;
  out.converged = eval.max_relative_error < options.level_tolerance;
  out.sites = std::move(sites);
  out.power_weights = std::move(w);
  out.cells.reserve(n);
  for (const auto& c : eval.cells) out.cells.push_back(Unlabeled(c));
  return out;
}

}  // namespace hypochain::layout
