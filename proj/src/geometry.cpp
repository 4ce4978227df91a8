#include "hypochain/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace hypochain::geometry {

Polygon Rect::polygon() const {
  return {{x, y}, {x + width, y}, {x + width, y + height}, {x, y + height}};
}

double SignedArea(const Polygon& polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = polygon[i];
    const Point& b = polygon[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return twice / 2.0;
}

double Area(const Polygon& polygon) { return std::abs(SignedArea(polygon)); }

Point Centroid(const Polygon& polygon) {
  const std::size_t n = polygon.size();
  if (n == 0) return {};
  const double area = SignedArea(polygon);
  if (std::abs(area) < 1e-300) {
    Point mean;
    for (const auto& p : polygon) {
      mean.x += p.x;
      mean.y += p.y;
    }
    return {mean.x / static_cast<double>(n), mean.y / static_cast<double>(n)};
  }
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = polygon[i];
    const Point& b = polygon[(i + 1) % n];
    const double cross = a.x * b.y - b.x * a.y;
    cx += (a.x + b.x) * cross;
    cy += (a.y + b.y) * cross;
  }
  return {cx / (6.0 * area), cy / (6.0 * area)};
}

LabeledPolygon ClipHalfPlane(const LabeledPolygon& polygon, double nx, double ny, double c,
                             int label) {
  const auto& v = polygon.vertices;
  const std::size_t n = v.size();
  LabeledPolygon out;
  if (n == 0) return out;

  std::vector<double> side(n);
  bool all_inside = true;
  bool all_outside = true;
  for (std::size_t i = 0; i < n; ++i) {
    side[i] = nx * v[i].x + ny * v[i].y - c;
    all_inside = all_inside && side[i] <= 0.0;
    all_outside = all_outside && side[i] > 0.0;
  }
  if (all_inside) return polygon;
  if (all_outside) return out;

  out.vertices.reserve(n + 1);
  out.edge_labels.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const bool in_i = side[i] <= 0.0;
    const bool in_j = side[j] <= 0.0;
    const int edge_label = polygon.edge_labels[i];
    if (in_i) {
      out.vertices.push_back(v[i]);
      // Edge i..j keeps its label; if it leaves the half-plane, the edge
      // from the exit point runs along the clip line.
      if (in_j) {
        out.edge_labels.push_back(edge_label);
      } else {
        const double t = side[i] / (side[i] - side[j]);
        out.edge_labels.push_back(edge_label);
        out.vertices.push_back({v[i].x + t * (v[j].x - v[i].x), v[i].y + t * (v[j].y - v[i].y)});
        out.edge_labels.push_back(label);
      }
    } else if (in_j) {
      const double t = side[i] / (side[i] - side[j]);
      out.vertices.push_back({v[i].x + t * (v[j].x - v[i].x), v[i].y + t * (v[j].y - v[i].y)});
      out.edge_labels.push_back(edge_label);
    }
  }
  if (out.vertices.size() < 3) return {};
  return out;
}

bool PointInPolygon(const Point& p, const Polygon& polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = polygon[i];
    const Point& b = polygon[j];
    // On-segment test: collinear and within the bounding box.
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if (cross == 0.0 && p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) &&
        p.y >= std::min(a.y, b.y) && p.y <= std::max(a.y, b.y)) {
      return true;
    }
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

}  // namespace hypochain::geometry
