#include "hypochain/layout_engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

#include "hypochain/error.hpp"
#include "text_util.hpp"

namespace hypochain::layout {

namespace {

constexpr std::string_view kEmbeddingHeader = "entity_id,x,y";
constexpr std::string_view kNoCategory = "uncategorized";

double RestrictedDegree(const kg::KnowledgeGraph& g, const std::string& id,
                        const std::unordered_set<std::string>& scope) {
  std::size_t d = 0;
  for (const auto& n : g.neighbors(id, kg::Direction::kBoth)) {
    if (scope.count(n.entity->id)) ++d;
  }
  return static_cast<double>(std::max<std::size_t>(d, 1));
}

LayerSpec MakeLayer(LayerKind kind, int position, std::vector<std::string> members,
                    const std::unordered_set<std::string>& path_entities,
                    const kg::KnowledgeGraph& g) {
  LayerSpec layer;
  layer.kind = kind;
  layer.position = position;
  layer.members = std::move(members);
  layer.empty = layer.members.empty();
  std::unordered_set<std::string> scope(path_entities);
  scope.insert(layer.members.begin(), layer.members.end());
  for (const auto& m : layer.members) {
    layer.weights[m] = RestrictedDegree(g, m, scope);
    layer.categories[m] = g.entity(m).category;
  }
  return layer;
}

std::vector<std::string> OneHopMembers(const kg::KnowledgeGraph& g,
                                       std::span<const std::string> anchors,
                                       const std::unordered_set<std::string>& exclude) {
  std::set<std::string> members;
  for (const auto& a : anchors) {
    for (const auto& n : g.neighbors(a, kg::Direction::kBoth)) {
      if (!exclude.count(n.entity->id)) members.insert(n.entity->id);
    }
  }
  return {members.begin(), members.end()};
}

double ParseCoordinate(std::string_view text, const std::string& file, std::size_t line) {
  text = detail::Trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw FormatError(file, line, "invalid coordinate \"" + std::string(text) + "\"");
  }
  return v;
}

}  // namespace

std::string_view LayerKindName(LayerKind kind) {
  return kind == LayerKind::kOneHop ? "one_hop" : "hypothesis_aligned";
}

void LayerSpec::Validate() const {
  if (empty) return;
  if (members.empty()) throw ContractError("layer has no members");
  std::unordered_set<std::string> seen;
  for (const auto& m : members) {
    if (!seen.insert(m).second) throw ContractError("duplicate layer member \"" + m + "\"");
    const auto it = weights.find(m);
    if (it == weights.end()) throw ContractError("layer member \"" + m + "\" has no weight");
    if (!(it->second > 0.0) || !std::isfinite(it->second)) {
      throw ContractError("layer member \"" + m + "\" has a non-positive weight");
    }
  }
}

std::vector<LayerSpec> BuildLayers(const predictions::InterpretativePath& path,
                                   const chain::HypothesisChain* chain,
                                   const kg::KnowledgeGraph& g, const LayerOptions& options) {
  std::vector<std::string> anchors;
  std::unordered_set<std::string> path_entities;
  for (std::size_t pos = 0; pos <= predictions::kPathHops; ++pos) {
    const auto& id = path.entity_at(pos);
    if (!g.contains(id)) throw ContractError("path entity \"" + id + "\" is not in the graph");
    if (path_entities.insert(id).second) anchors.push_back(id);
  }

  std::vector<LayerSpec> layers;
  if (options.split_one_hop) {
    for (std::size_t pos = 0; pos <= predictions::kPathHops; ++pos) {
      const auto& id = path.entity_at(pos);
      const std::string one[] = {id};
      layers.push_back(MakeLayer(LayerKind::kOneHop, static_cast<int>(pos),
                                 OneHopMembers(g, one, path_entities), path_entities, g));
    }
  } else {
    layers.push_back(MakeLayer(LayerKind::kOneHop, 0, OneHopMembers(g, anchors, path_entities),
                               path_entities, g));
  }

  if (chain != nullptr) {
    for (std::size_t i = 0; i < chain::kPositions; ++i) {
      const auto& node = chain->positions[i];
      if (!node.resolved()) continue;
      std::vector<std::string> members;
      std::unordered_set<std::string> seen;
      for (const auto& m : node.entities) {
        if (g.contains(m.entity_id) && seen.insert(m.entity_id).second) {
          members.push_back(m.entity_id);
        }
      }
      layers.push_back(MakeLayer(LayerKind::kHypothesisAligned, static_cast<int>(i + 1),
                                 std::move(members), path_entities, g));
    }
  }
  return layers;
}

LayerLayout ComputeTreemap(const LayerSpec& layer, const geometry::Rect& container,
                           std::uint64_t seed, const TreemapOptions& options) {
  if (!(container.width > 0.0) || !(container.height > 0.0)) {
    throw ContractError("zero-area layout container");
  }
  LayerLayout out;
  out.kind = layer.kind;
  out.position = layer.position;
  out.container = container;
  out.empty = layer.empty || layer.members.empty();
  if (out.empty) {
    out.converged = true;
    return out;
  }
  layer.Validate();

  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < layer.members.size(); ++i) {
    const auto it = layer.categories.find(layer.members[i]);
    const std::string cat =
        it == layer.categories.end() || it->second.empty() ? std::string(kNoCategory) : it->second;
    groups[cat].push_back(i);
  }

  double total = 0.0;
  std::vector<double> group_weights;
  for (const auto& [cat, idx] : groups) {
    double s = 0.0;
    for (const auto i : idx) s += layer.weights.at(layer.members[i]);
    group_weights.push_back(s);
    total += s;
  }

  const double container_area = container.area();
  const auto top = PartitionConvex(container.polygon(), group_weights,
                                   HashSeed(seed, "categories"), options);
  out.iterations = top.iterations;
  bool all_converged = top.converged;

  out.cells.resize(layer.members.size());
  std::size_t g = 0;
  for (const auto& [cat, idx] : groups) {
    const auto& region = top.cells[g];
    out.category_regions.push_back(CategoryRegion{cat, region,
                                                  geometry::Area(region) / container_area,
                                                  group_weights[g] / total});
    std::vector<double> w;
    for (const auto i : idx) w.push_back(layer.weights.at(layer.members[i]));
    if (geometry::Area(region) > 0.0) {
      const auto inner = PartitionConvex(region, w, HashSeed(seed, "category:" + cat), options);
      out.iterations += inner.iterations;
      all_converged = all_converged && inner.converged;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        auto& cell = out.cells[idx[k]];
        cell.polygon = inner.cells[k];
        cell.site = inner.sites[k];
      }
    } else {
      all_converged = false;
    }
    for (const auto i : idx) {
      auto& cell = out.cells[i];
      cell.entity_id = layer.members[i];
      cell.category = cat;
      cell.area_share = geometry::Area(cell.polygon) / container_area;
      cell.target_share = layer.weights.at(layer.members[i]) / total;
      out.max_relative_error =
          std::max(out.max_relative_error,
                   std::abs(cell.area_share - cell.target_share) / cell.target_share);
    }
    ++g;
  }
  out.converged = all_converged && out.max_relative_error < 0.05;
  return out;
}

std::vector<CrossEdge> DeriveCrossEdges(std::span<const LayerSpec> layers,
                                        const kg::KnowledgeGraph& g) {
  std::vector<CrossEdge> out;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    const auto& lower = layers[i + 1].members;
    const std::unordered_set<std::string> next(lower.begin(), lower.end());
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& a : layers[i].members) {
      for (const auto& n : g.neighbors(a, kg::Direction::kBoth)) {
        if (next.count(n.entity->id)) pairs.emplace(a, n.entity->id);
      }
    }
    for (const auto& [a, b] : pairs) {
      const auto hit = g.edge_exists(a, b);
      if (!hit) continue;
      out.push_back(CrossEdge{a, b, hit->relation, hit->direction, i});
    }
  }
  return out;
}

StackedLayout ComputeStack(std::span<const LayerSpec> layers, const kg::KnowledgeGraph& g,
                           const StackOptions& options) {
  StackedLayout out;
  double y = 0.0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const geometry::Rect box{0.0, y, options.width, options.layer_height};
    out.layers.push_back(ComputeTreemap(layers[i], box,
                                        HashSeed(options.seed, "layer:" + std::to_string(i)),
                                        options.treemap));
    y += options.layer_height + options.gutter;
  }
  out.cross_edges = DeriveCrossEdges(layers, g);
  return out;
}

std::vector<EmbeddedPoint> LoadEmbedding(const std::filesystem::path& path,
                                         const kg::KnowledgeGraph* g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFormat, "cannot open " + path.string());
  const std::string file = path.string();
  std::string line;
  if (!std::getline(in, line) || detail::StripCr(line) != kEmbeddingHeader) {
    throw FormatError(file, 1, "expected header \"entity_id,x,y\"");
  }
  std::vector<EmbeddedPoint> points;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = detail::StripCr(line);
    if (detail::Trim(row).empty()) continue;
    const auto fields = detail::Split(row, ',');
    if (fields.size() != 3) {
      throw FormatError(file, line_no, "expected 3 fields, got " + std::to_string(fields.size()));
    }
    EmbeddedPoint p;
    p.entity_id = std::string(detail::Trim(fields[0]));
    if (p.entity_id.empty()) throw FormatError(file, line_no, "empty entity id");
    p.x = ParseCoordinate(fields[1], file, line_no);
    p.y = ParseCoordinate(fields[2], file, line_no);
    if (!seen.insert(p.entity_id).second) {
      throw FormatError(file, line_no, "duplicate entity id \"" + p.entity_id + "\"");
    }
    if (g != nullptr && !g->contains(p.entity_id)) {
      throw DanglingIdError(p.entity_id, file + ":" + std::to_string(line_no));
    }
    points.push_back(std::move(p));
  }
  return points;
}

std::vector<std::string> LassoSelect(std::span<const EmbeddedPoint> points,
                                     const geometry::Polygon& polygon) {
  if (polygon.size() < 3) throw ContractError("lasso polygon needs at least 3 vertices");
  std::vector<std::string> out;
  for (const auto& p : points) {
    if (geometry::PointInPolygon({p.x, p.y}, polygon)) out.push_back(p.entity_id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace hypochain::layout
