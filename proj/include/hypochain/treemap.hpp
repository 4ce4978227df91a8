#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hypochain/geometry.hpp"

namespace hypochain::layout {

struct TreemapOptions {
  int max_iterations = 500;
  /// Convergence bound on max |area share - weight share| / weight share.
  /// Applied to each partition level, so the two-level product stays within
  /// the 5% layout guarantee.
  double level_tolerance = 0.02;
  /// Iterations of centroid moves + multiplicative weight updates before the
  /// weights alone are refined with sites held fixed.
  int relaxation_iterations = 60;
};

/// Power diagram of `sites` inside a convex region. Cell i satisfies
/// |x - s_i|^2 - w_i <= |x - s_j|^2 - w_j for all j. Empty cells come back as
/// empty polygons.
std::vector<geometry::Polygon> PowerDiagram(const geometry::Polygon& region,
                                            std::span<const geometry::Point> sites,
                                            std::span<const double> power_weights);

struct Partition {
  std::vector<geometry::Polygon> cells;
  std::vector<geometry::Point> sites;
  std::vector<double> power_weights;
  int iterations = 0;
  double max_relative_error = 0.0;
  bool converged = false;
};

/// Splits a convex region into one cell per weight with cell area
/// proportional to weight. Deterministic for a given seed.
Partition PartitionConvex(const geometry::Polygon& region, std::span<const double> weights,
                          std::uint64_t seed, const TreemapOptions& options = {});

/// `n` deterministic jittered-grid points strictly inside a convex region.
std::vector<geometry::Point> JitteredGridSites(const geometry::Polygon& region, std::size_t n,
                                               std::uint64_t seed);

/// SplitMix64: portable deterministic stream for layout seeding.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t Next();
  /// Uniform in [0, 1).
  double Uniform() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

std::uint64_t HashSeed(std::uint64_t seed, const std::string& salt);

}  // namespace hypochain::layout
