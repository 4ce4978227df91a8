#include "hypochain/wire.hpp"

#include "hypochain/error.hpp"

namespace hypochain::wire {

namespace {

template <typename T>
T Get(const json& j, const char* key) {
  const auto& v = Field(j, key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ContractError(std::string("field \"") + key + "\" has the wrong type");
  }
}

template <typename T>
std::optional<T> GetOptional(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || j[key].is_null()) return std::nullopt;
  return Get<T>(j, key);
}

json OptionalJson(const std::optional<std::string>& v) {
  return v ? json(*v) : json(nullptr);
}

json PointJson(const geometry::Point& p) { return json::array({p.x, p.y}); }

}  // namespace

const json& Field(const json& j, const char* key) {
  if (!j.is_object()) throw ContractError("expected a JSON object");
  const auto it = j.find(key);
  if (it == j.end()) throw ContractError(std::string("missing field \"") + key + "\"");
  return *it;
}

std::string StringField(const json& j, const char* key) { return Get<std::string>(j, key); }

std::optional<std::string> OptionalString(const json& j, const char* key) {
  return GetOptional<std::string>(j, key);
}

json EntityJson(const kg::Entity& e) {
  return {{"id", e.id}, {"name", e.name}, {"category", e.category}, {"description", e.description}};
}

json TripletJson(const kg::Triplet& t) {
  return {{"head", t.head}, {"relation", t.relation}, {"tail", t.tail}};
}

kg::Triplet TripletFromJson(const json& j) {
  return kg::Triplet{StringField(j, "head"), StringField(j, "relation"), StringField(j, "tail")};
}

json PathJson(const predictions::InterpretativePath& path) {
  json hops = json::array();
  for (const auto& h : path.hops) {
    hops.push_back({{"relation", h.relation}, {"weight", h.weight}, {"entity", h.entity}});
  }
  return {{"origin", path.origin}, {"hops", std::move(hops)}};
}

json RecordJson(const predictions::PredictionRecord& r, bool starred,
                std::optional<int> display_rank) {
  json j = {{"id", r.id},     {"head", r.head},        {"tail", r.tail},
            {"score", r.score}, {"rank", r.rank},      {"path", PathJson(r.path)},
            {"starred", starred}};
  if (display_rank) j["display_rank"] = *display_rank;
  return j;
}

predictions::PredictionFilter FilterFromJson(const json& j) {
  if (!j.is_object()) throw ContractError("filter must be a JSON object");
  predictions::PredictionFilter f;
  f.head = OptionalString(j, "head");
  f.category = OptionalString(j, "category");
  f.exclude_relation_homogeneous = OptionalString(j, "exclude_relation_homogeneous");
  f.min_score = GetOptional<double>(j, "min_score");
  if (j.contains("entity_terms")) {
    for (const auto& t : j["entity_terms"]) {
      f.entity_terms.push_back({Get<int>(t, "position"), StringField(t, "entity")});
    }
  }
  if (j.contains("relation_terms")) {
    for (const auto& t : j["relation_terms"]) {
      f.relation_terms.push_back({Get<int>(t, "position"), StringField(t, "relation")});
    }
  }
  f.Validate();
  return f;
}

predictions::SortKey SortKeyFromJson(const json& j) {
  predictions::SortKey key;
  const auto column = StringField(j, "column");
  if (column == "score") {
    key.column = predictions::SortColumn::kScore;
  } else if (column == "edge_weight") {
    key.column = predictions::SortColumn::kEdgeWeight;
    key.hop = Get<int>(j, "hop");
  } else {
    throw ContractError("unknown sort column \"" + column + "\"");
  }
  const auto order = OptionalString(j, "order").value_or("desc");
  if (order == "asc") {
    key.order = predictions::SortOrder::kAscending;
  } else if (order == "desc") {
    key.order = predictions::SortOrder::kDescending;
  } else {
    throw ContractError("sort order must be asc or desc");
  }
  return key;
}

std::vector<chain::PositionInput> PositionsFromJson(const json& positions) {
  if (!positions.is_array()) throw ContractError("positions must be an array");
  std::vector<chain::PositionInput> out;
  for (const auto& p : positions) {
    chain::PositionInput in;
    if (p.is_string()) {
      in.description = p.get<std::string>();
    } else {
      in.description = StringField(p, "description");
      in.relation = OptionalString(p, "relation").value_or("");
      if (p.contains("relation_labels")) {
        in.relation_labels = Get<std::vector<std::string>>(p, "relation_labels");
      }
    }
    out.push_back(std::move(in));
  }
  return out;
}

json ChainJson(const chain::HypothesisChain& c) {
  json positions = json::array();
  for (const auto& node : c.positions) {
    json entities = json::array();
    for (const auto& m : node.entities) {
      entities.push_back({{"entity_id", m.entity_id},
                          {"entity_name", m.entity_name},
                          {"category", m.category},
                          {"justification", m.justification},
                          {"alignment_rank", m.alignment_rank}});
    }
    positions.push_back({{"description", node.description},
                         {"relation", node.relation},
                         {"relation_labels", node.relation_labels},
                         {"entities", std::move(entities)}});
  }
  json analysis = nullptr;
  if (c.analysis) {
    analysis = {{"chain_assessment", c.analysis->chain_assessment},
                {"biological_interpretation", c.analysis->biological_interpretation},
                {"suggested_improvements", c.analysis->suggested_improvements}};
  }
  return {{"id", c.id},
          {"head", OptionalJson(c.head)},
          {"status", chain::StatusName(c.status)},
          {"positions", std::move(positions)},
          {"critique", c.critique},
          {"analysis", std::move(analysis)}};
}

chain::HypothesisChain ChainFromJson(const json& j) {
  auto c = chain::CreateChain(StringField(j, "id"), PositionsFromJson(Field(j, "positions")),
                              OptionalString(j, "head"));
  const auto& positions = Field(j, "positions");
  for (std::size_t i = 0; i < chain::kPositions; ++i) {
    const auto& p = positions[i];
    if (!p.is_object() || !p.contains("entities")) continue;
    for (const auto& m : p["entities"]) {
      chain::EntityMatch match;
      match.entity_id = StringField(m, "entity_id");
      match.entity_name = OptionalString(m, "entity_name").value_or(match.entity_id);
      match.category = OptionalString(m, "category").value_or("");
      match.justification = OptionalString(m, "justification").value_or("");
      match.alignment_rank = GetOptional<int>(m, "alignment_rank")
                                 .value_or(static_cast<int>(c.positions[i].entities.size() + 1));
      c.positions[i].entities.push_back(std::move(match));
    }
  }
  if (const auto status = OptionalString(j, "status")) c.status = chain::ParseStatus(*status);
  c.critique = OptionalString(j, "critique").value_or("");
  if (j.contains("analysis") && j["analysis"].is_object()) {
    const auto& a = j["analysis"];
    c.analysis = chain::ChainAnalysis{StringField(a, "chain_assessment"),
                                      StringField(a, "biological_interpretation"),
                                      StringField(a, "suggested_improvements")};
  }
  return c;
}

json ReportJson(const chain::ChainMatchReport& r, bool include_masks) {
  json exclusive = json::object();
  for (chain::Mask m = 0; m <= chain::kFullMask; ++m) {
    exclusive[chain::MaskString(m)] = r.exclusive[m];
  }
  json j = {{"chain_id", r.chain_id},
            {"dataset_id", r.dataset_id},
            {"total", r.total()},
            {"matched", r.matched()},
            {"aligned", r.exclusive[chain::kFullMask]},
            {"exclusive", std::move(exclusive)},
            {"per_hypothesis", r.per_hypothesis},
            {"warnings", r.warnings}};
  if (include_masks) {
    json masks = json::array();
    for (const auto m : r.masks) masks.push_back(chain::MaskString(m));
    j["masks"] = std::move(masks);
  }
  return j;
}

geometry::Polygon PolygonFromJson(const json& j) {
  if (!j.is_array()) throw ContractError("polygon must be an array of [x, y] pairs");
  geometry::Polygon out;
  for (const auto& v : j) {
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
      out.push_back({v[0].get<double>(), v[1].get<double>()});
    } else if (v.is_object()) {
      out.push_back({Get<double>(v, "x"), Get<double>(v, "y")});
    } else {
      throw ContractError("polygon vertex must be [x, y] or {x, y}");
    }
  }
  return out;
}

json PolygonJson(const geometry::Polygon& p) {
  json out = json::array();
  for (const auto& v : p) out.push_back(PointJson(v));
  return out;
}

json LayerJson(const layout::LayerLayout& layer) {
  json cells = json::array();
  for (const auto& c : layer.cells) {
    cells.push_back({{"entity_id", c.entity_id},
                     {"category", c.category},
                     {"polygon", PolygonJson(c.polygon)},
                     {"site", PointJson(c.site)},
                     {"area_share", c.area_share},
                     {"target_share", c.target_share}});
  }
  json regions = json::array();
  for (const auto& r : layer.category_regions) {
    regions.push_back({{"category", r.category},
                       {"polygon", PolygonJson(r.polygon)},
                       {"area_share", r.area_share},
                       {"target_share", r.target_share}});
  }
  const auto& box = layer.container;
  return {{"kind", layout::LayerKindName(layer.kind)},
          {"position", layer.position},
          {"empty", layer.empty},
          {"container",
           {{"x", box.x}, {"y", box.y}, {"width", box.width}, {"height", box.height}}},
          {"cells", std::move(cells)},
          {"category_regions", std::move(regions)},
          {"iterations", layer.iterations},
          {"max_relative_error", layer.max_relative_error},
          {"converged", layer.converged}};
}

json StackJson(const layout::StackedLayout& stack) {
  json layers = json::array();
  for (const auto& l : stack.layers) layers.push_back(LayerJson(l));
  json edges = json::array();
  for (const auto& e : stack.cross_edges) {
    edges.push_back({{"a", e.a},
                     {"b", e.b},
                     {"relation", e.relation},
                     {"direction", kg::DirectionName(e.direction)},
                     {"layers", json::array({e.layer, e.layer + 1})}});
  }
  return {{"layers", std::move(layers)}, {"cross_edges", std::move(edges)}};
}

metrics::RankedList RankedListFromJson(const json& j) {
  metrics::RankedList list;
  list.query_id = StringField(j, "query_id");
  list.candidates = Get<std::vector<std::string>>(j, "candidates");
  for (const auto& r : Get<std::vector<std::string>>(j, "relevant")) list.relevant.insert(r);
  list.universe_size = GetOptional<std::size_t>(j, "universe_size");
  list.Validate();
  return list;
}

json MetricReportJson(const metrics::MetricReport& r) {
  json macro = json::object();
  json contributing = json::object();
  for (const auto m : r.metrics) {
    const auto label = metrics::MetricLabel(m, r.n, r.k);
    const auto it = r.macro.find(m);
    macro[label] = it == r.macro.end() ? json(nullptr) : json(it->second);
    const auto c = r.contributing_queries.find(m);
    contributing[label] = c == r.contributing_queries.end() ? 0 : c->second;
  }
  json per_query = json::object();
  for (const auto& [q, values] : r.per_query) {
    json row = json::object();
    for (const auto& [m, v] : values) row[metrics::MetricLabel(m, r.n, r.k)] = v;
    per_query[q] = std::move(row);
  }
  return {{"n", r.n},
          {"k", r.k},
          {"metrics", std::move(macro)},
          {"contributing_queries", std::move(contributing)},
          {"per_query", std::move(per_query)}};
}

}  // namespace hypochain::wire
