#pragma once

#include <vector>

namespace hypochain::geometry {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

using Polygon = std::vector<Point>;

struct Rect {
  double x = 0.0;
  double y = 0.0;
  double width = 0.0;
  double height = 0.0;

  double area() const { return width * height; }
  /// Counter-clockwise corners starting at (x, y).
  Polygon polygon() const;
};

/// Shoelace signed area; positive for counter-clockwise vertex order.
double SignedArea(const Polygon& polygon);
double Area(const Polygon& polygon);
/// Area centroid. Falls back to the vertex mean for degenerate polygons.
Point Centroid(const Polygon& polygon);

/// Vertex ring with one label per edge; edge k runs from vertex k to k+1.
struct LabeledPolygon {
  Polygon vertices;
  std::vector<int> edge_labels;
};

/// Keeps the part of a convex polygon where nx*x + ny*y <= c. The new edge
/// along the clip line receives `label`.
LabeledPolygon ClipHalfPlane(const LabeledPolygon& polygon, double nx, double ny, double c,
                             int label);

/// Ray-casting membership; points on an edge or vertex count as inside.
bool PointInPolygon(const Point& p, const Polygon& polygon);

}  // namespace hypochain::geometry
