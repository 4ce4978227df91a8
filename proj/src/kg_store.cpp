#include "hypochain/kg_store.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <ostream>
#include <set>

#include "hypochain/error.hpp"
#include "text_util.hpp"

namespace hypochain::kg {

namespace {

constexpr std::string_view kEntityHeader = "id\tname\tcategory\tdescription";
constexpr std::string_view kTripletHeader = "head\trelation\ttail";

std::ifstream OpenOrThrow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kFormat, "cannot open " + path.string());
  }
  return in;
}

std::vector<Entity> ReadEntities(const std::filesystem::path& path) {
  auto in = OpenOrThrow(path);
  const std::string file = path.string();
  std::vector<Entity> entities;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw FormatError(file, 1, "missing header");
  ++line_no;
  if (detail::StripCr(line) != kEntityHeader) {
    throw FormatError(file, line_no,
                      "expected header \"id<TAB>name<TAB>category<TAB>description\"");
  }
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = detail::StripCr(line);
    if (row.empty()) throw FormatError(file, line_no, "empty row");
    const auto fields = detail::Split(row, '\t');
    if (fields.size() != 4) {
      throw FormatError(file, line_no,
                        "expected 4 tab-separated fields, got " +
                            std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw FormatError(file, line_no, "empty entity id");
    if (fields[1].empty()) throw FormatError(file, line_no, "empty entity name");
    if (fields[2].empty()) throw FormatError(file, line_no, "empty category");
    entities.push_back(Entity{std::string(fields[0]), std::string(fields[1]),
                              std::string(fields[2]), std::string(fields[3])});
  }
  return entities;
}

}  // namespace

std::string_view DirectionName(Direction d) {
  switch (d) {
    case Direction::kOut:
      return "out";
    case Direction::kIn:
      return "in";
    case Direction::kBoth:
      return "both";
  }
  return "both";
}

std::string FoldCase(std::string_view text) {
  std::string out(text);
  for (auto& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string NormalizeName(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  bool pending_space = false;
  for (const char c : detail::Trim(name)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::size_t KnowledgeGraph::RowHash::operator()(const Row& r) const noexcept {
  std::uint64_t h = r.head;
  h = h * 0x9E3779B97F4A7C15ULL + r.relation;
  h = h * 0x9E3779B97F4A7C15ULL + r.tail;
  return static_cast<std::size_t>(h ^ (h >> 29));
}

KnowledgeGraph KnowledgeGraph::Load(const std::filesystem::path& entity_file,
                                    const std::filesystem::path& triplet_file,
                                    std::ostream* diagnostics) {
  KnowledgeGraph g;
  {
    auto entities = ReadEntities(entity_file);
    g.entities_.reserve(entities.size());
    for (std::size_t i = 0; i < entities.size(); ++i) {
      auto [it, inserted] =
          g.id_index_.emplace(entities[i].id, static_cast<Index>(i));
      if (!inserted) {
        // +2: header line plus 1-based numbering.
        throw FormatError(entity_file.string(), i + 2,
                          "duplicate entity id \"" + entities[i].id + "\"");
      }
    }
    g.entities_ = std::move(entities);
  }
  g.out_.resize(g.entities_.size());
  g.in_.resize(g.entities_.size());

  auto in = OpenOrThrow(triplet_file);
  const std::string file = triplet_file.string();
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw FormatError(file, 1, "missing header");
  if (detail::StripCr(line) != kTripletHeader) {
    throw FormatError(file, 1, "expected header \"head<TAB>relation<TAB>tail\"");
  }
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = detail::StripCr(line);
    if (row.empty()) throw FormatError(file, line_no, "empty row");
    const auto fields = detail::Split(row, '\t');
    if (fields.size() != 3) {
      throw FormatError(file, line_no,
                        "expected 3 tab-separated fields, got " +
                            std::to_string(fields.size()));
    }
    if (fields[1].empty()) throw FormatError(file, line_no, "empty relation");
    const std::string where = file + ":" + std::to_string(line_no);
    const auto head = g.id_index_.find(std::string(fields[0]));
    if (head == g.id_index_.end()) {
      throw DanglingIdError(std::string(fields[0]), where);
    }
    const auto tail = g.id_index_.find(std::string(fields[2]));
    if (tail == g.id_index_.end()) {
      throw DanglingIdError(std::string(fields[2]), where);
    }
    const Row r{head->second, g.InternRelation(std::string(fields[1])),
                tail->second};
    if (!g.row_set_.insert(r).second) {
      ++g.duplicates_skipped_;
      if (diagnostics) {
        *diagnostics << where << ": warning: duplicate triplet skipped\n";
      }
      continue;
    }
    g.rows_.push_back(r);
    g.out_[r.head].push_back(Edge{r.relation, r.tail});
    g.in_[r.tail].push_back(Edge{r.relation, r.head});
  }
  for (auto& edges : g.out_) g.SortAdjacency(edges);
  for (auto& edges : g.in_) g.SortAdjacency(edges);
  g.BuildNameIndex();
  return g;
}

KnowledgeGraph KnowledgeGraph::FromRows(std::vector<Entity> entities,
                                        const std::vector<Triplet>& triplets) {
  KnowledgeGraph g;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    const auto& e = entities[i];
    if (e.id.empty() || e.name.empty() || e.category.empty()) {
      throw ContractError("entity row " + std::to_string(i) +
                          " has an empty id, name or category");
    }
    if (!g.id_index_.emplace(e.id, static_cast<Index>(i)).second) {
      throw ContractError("duplicate entity id \"" + e.id + "\"");
    }
  }
  g.entities_ = std::move(entities);
  g.out_.resize(g.entities_.size());
  g.in_.resize(g.entities_.size());
  g.BuildNameIndex();
  g.AppendTriplets(triplets);
  return g;
}

KnowledgeGraph::Index KnowledgeGraph::InternRelation(const std::string& label) {
  auto [it, inserted] =
      relation_index_.emplace(label, static_cast<Index>(relations_.size()));
  if (inserted) relations_.push_back(label);
  return it->second;
}

bool KnowledgeGraph::EdgeLess(const Edge& x, const Edge& y) const {
  if (x.relation != y.relation) {
    return relations_[x.relation] < relations_[y.relation];
  }
  return entities_[x.neighbor].id < entities_[y.neighbor].id;
}

void KnowledgeGraph::SortAdjacency(std::vector<Edge>& edges) const {
  std::sort(edges.begin(), edges.end(),
            [this](const Edge& x, const Edge& y) { return EdgeLess(x, y); });
}

void KnowledgeGraph::InsertSorted(std::vector<Edge>& edges, Edge edge) const {
  const auto pos = std::upper_bound(
      edges.begin(), edges.end(), edge,
      [this](const Edge& x, const Edge& y) { return EdgeLess(x, y); });
  edges.insert(pos, edge);
}

bool KnowledgeGraph::InsertRow(Row row) {
  if (!row_set_.insert(row).second) return false;
  rows_.push_back(row);
  InsertSorted(out_[row.head], Edge{row.relation, row.tail});
  InsertSorted(in_[row.tail], Edge{row.relation, row.head});
  return true;
}

void KnowledgeGraph::BuildNameIndex() {
  names_exact_.clear();
  names_folded_.clear();
  names_normalized_.clear();
  for (Index i = 0; i < entities_.size(); ++i) {
    const auto& name = entities_[i].name;
    names_exact_[name].push_back(i);
    names_folded_[FoldCase(name)].push_back(i);
    names_normalized_[NormalizeName(name)].push_back(i);
  }
}

KnowledgeGraph::Index KnowledgeGraph::IndexOf(std::string_view id) const {
  const auto it = id_index_.find(std::string(id));
  if (it == id_index_.end()) {
    throw NotFoundError("unknown entity id \"" + std::string(id) + "\"");
  }
  return it->second;
}

GraphCounts KnowledgeGraph::counts() const {
  return GraphCounts{entities_.size(), rows_.size(), relations_.size(),
                     duplicates_skipped_};
}

bool KnowledgeGraph::contains(std::string_view id) const {
  return id_index_.count(std::string(id)) != 0;
}

const Entity* KnowledgeGraph::find(std::string_view id) const {
  const auto it = id_index_.find(std::string(id));
  return it == id_index_.end() ? nullptr : &entities_[it->second];
}

const Entity& KnowledgeGraph::entity(std::string_view id) const {
  return entities_[IndexOf(id)];
}

std::vector<Triplet> KnowledgeGraph::triplets() const {
  std::vector<Triplet> out;
  out.reserve(rows_.size());
  for (const auto& r : rows_) {
    out.push_back(Triplet{entities_[r.head].id, relations_[r.relation],
                          entities_[r.tail].id});
  }
  return out;
}

std::vector<std::string> KnowledgeGraph::relation_vocabulary() const {
  std::vector<std::string> out = relations_;
  std::sort(out.begin(), out.end());
  return out;
}

bool KnowledgeGraph::has_relation(std::string_view label) const {
  return relation_index_.count(std::string(label)) != 0;
}

std::vector<std::string> KnowledgeGraph::categories() const {
  std::set<std::string> seen;
  for (const auto& e : entities_) seen.insert(e.category);
  return {seen.begin(), seen.end()};
}

std::vector<Neighbor> KnowledgeGraph::neighbors(std::string_view id,
                                                Direction direction) const {
  const Index self = IndexOf(id);
  std::vector<Neighbor> out;
  const auto to_neighbor = [this](const Edge& e, Direction d) {
    return Neighbor{relations_[e.relation], &entities_[e.neighbor], d};
  };
  const auto& outs = out_[self];
  const auto& ins = in_[self];
  switch (direction) {
    case Direction::kOut:
      out.reserve(outs.size());
      for (const auto& e : outs) out.push_back(to_neighbor(e, Direction::kOut));
      break;
    case Direction::kIn:
      out.reserve(ins.size());
      for (const auto& e : ins) out.push_back(to_neighbor(e, Direction::kIn));
      break;
    case Direction::kBoth: {
      out.reserve(outs.size() + ins.size());
      std::size_t i = 0, j = 0;
      while (i < outs.size() || j < ins.size()) {
        if (j == ins.size() || (i < outs.size() && !EdgeLess(ins[j], outs[i]))) {
          out.push_back(to_neighbor(outs[i++], Direction::kOut));
        } else {
          out.push_back(to_neighbor(ins[j++], Direction::kIn));
        }
      }
      break;
    }
  }
  return out;
}

std::size_t KnowledgeGraph::degree(std::string_view id) const {
  const Index self = IndexOf(id);
  return out_[self].size() + in_[self].size();
}

std::optional<EdgeHit> KnowledgeGraph::edge_exists(std::string_view a,
                                                   std::string_view b) const {
  const Index from = IndexOf(a);
  const Index to = IndexOf(b);
  const Edge* best_out = nullptr;
  for (const auto& e : out_[from]) {
    if (e.neighbor == to) {
      best_out = &e;
      break;
    }
  }
  const Edge* best_in = nullptr;
  for (const auto& e : in_[from]) {
    if (e.neighbor == to) {
      best_in = &e;
      break;
    }
  }
  if (best_out && (!best_in || !EdgeLess(*best_in, *best_out))) {
    return EdgeHit{relations_[best_out->relation], Direction::kOut};
  }
  if (best_in) return EdgeHit{relations_[best_in->relation], Direction::kIn};
  return std::nullopt;
}

GraphCounts KnowledgeGraph::AppendTriplets(std::span<const Triplet> triplets) {
  for (const auto& t : triplets) {
    if (!contains(t.head)) throw DanglingIdError(t.head);
    if (!contains(t.tail)) throw DanglingIdError(t.tail);
    if (t.relation.empty()) {
      throw ContractError("empty relation label in appended triplet");
    }
  }
  for (const auto& t : triplets) {
    const Row r{id_index_.at(t.head), InternRelation(t.relation),
                id_index_.at(t.tail)};
    if (!InsertRow(r)) ++duplicates_skipped_;
  }
  return counts();
}

std::optional<std::string> KnowledgeGraph::ResolveName(std::string_view name) const {
  const auto tier = [this](const auto& index,
                           const std::string& key) -> std::optional<std::string> {
    const auto it = index.find(key);
    if (it == index.end()) return std::nullopt;
    if (it->second.size() == 1) return entities_[it->second.front()].id;
    std::string candidates;
    for (const Index i : it->second) {
      if (!candidates.empty()) candidates += ", ";
      candidates += entities_[i].id;
    }
    throw ContractError("ambiguous entity name \"" + key + "\"", candidates);
  };
  if (auto hit = tier(names_exact_, std::string(name))) return hit;
  if (auto hit = tier(names_folded_, FoldCase(name))) return hit;
  const auto normalized = NormalizeName(name);
  if (normalized.empty()) return std::nullopt;
  return tier(names_normalized_, normalized);
}

}  // namespace hypochain::kg
