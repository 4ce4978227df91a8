#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hypochain/chain_engine.hpp"
#include "hypochain/geometry.hpp"
#include "hypochain/kg_store.hpp"
#include "hypochain/prediction_store.hpp"
#include "hypochain/treemap.hpp"

namespace hypochain::layout {

enum class LayerKind { kOneHop, kHypothesisAligned };

std::string_view LayerKindName(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::kOneHop;
  /// 1..3 for hypothesis-aligned layers; 0 for a merged one-hop layer, or the
  /// path position of the anchor entity when one-hop layers are split.
  int position = 0;
  std::vector<std::string> members;
  std::map<std::string, double> weights;
  std::map<std::string, std::string> categories;  // member -> category
  bool empty = false;

  /// Throws a contract error unless members are distinct, non-empty (for a
  /// non-empty layer) and every member has a finite positive weight.
  void Validate() const;
};

struct LayerOptions {
  bool split_one_hop = false;
};

/// One-hop layer(s) over the path entities followed by one hypothesis-aligned
/// layer per resolved chain position. Weights are degrees restricted to the
/// path entities plus the layer members, floored at 1.
std::vector<LayerSpec> BuildLayers(const predictions::InterpretativePath& path,
                                   const chain::HypothesisChain* chain,
                                   const kg::KnowledgeGraph& g,
                                   const LayerOptions& options = {});

struct CellLayout {
  std::string entity_id;
  std::string category;
  geometry::Polygon polygon;
  geometry::Point site;
  double area_share = 0.0;    // cell area / container area
  double target_share = 0.0;  // weight / total weight
};

struct CategoryRegion {
  std::string category;
  geometry::Polygon polygon;
  double area_share = 0.0;
  double target_share = 0.0;
};

struct LayerLayout {
  LayerKind kind = LayerKind::kOneHop;
  int position = 0;
  bool empty = false;
  geometry::Rect container;
  std::vector<CellLayout> cells;  // in member order
  std::vector<CategoryRegion> category_regions;  // sorted by category
  int iterations = 0;             // summed over all partitions
  double max_relative_error = 0.0;  // max |area_share - target| / target
  bool converged = false;
};

/// Two-level Voronoi treemap: categories first, then entities inside each
/// category region. Non-convergence is reported through `converged`, not
/// thrown.
LayerLayout ComputeTreemap(const LayerSpec& layer, const geometry::Rect& container,
                           std::uint64_t seed, const TreemapOptions& options = {});

struct CrossEdge {
  std::string a;  // member of layer `layer`
  std::string b;  // member of layer `layer + 1`
  std::string relation;
  kg::Direction direction = kg::Direction::kOut;
  std::size_t layer = 0;
};

/// Every (a, b) with a in layer i, b in layer i+1 and a KG edge between them,
/// once per pair, ordered by (layer, a, b).
std::vector<CrossEdge> DeriveCrossEdges(std::span<const LayerSpec> layers,
                                        const kg::KnowledgeGraph& g);

struct StackOptions {
  double width = 960.0;
  double layer_height = 320.0;
  double gutter = 40.0;
  std::uint64_t seed = 0;
  TreemapOptions treemap;
};

struct StackedLayout {
  std::vector<LayerLayout> layers;
  std::vector<CrossEdge> cross_edges;
};

/// Lays the layers out top to bottom, each in its own container separated by
/// the gutter. Layer i uses a seed derived from the base seed and i.
StackedLayout ComputeStack(std::span<const LayerSpec> layers, const kg::KnowledgeGraph& g,
                           const StackOptions& options = {});

// ---------------------------------------------------------------------------
// Embedding scatter

struct EmbeddedPoint {
  std::string entity_id;
  double x = 0.0;
  double y = 0.0;
};

/// CSV with header `entity_id,x,y`. When `g` is given every id must exist.
std::vector<EmbeddedPoint> LoadEmbedding(const std::filesystem::path& file,
                                         const kg::KnowledgeGraph* g = nullptr);

/// Ids of the points inside `polygon` (boundary counts as inside), sorted.
/// Throws a contract error for fewer than 3 vertices.
std::vector<std::string> LassoSelect(std::span<const EmbeddedPoint> points,
                                     const geometry::Polygon& polygon);

}  // namespace hypochain::layout
