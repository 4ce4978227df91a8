#include "hypochain/prediction_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "hypochain/chain_engine.hpp"
#include "hypochain/error.hpp"
#include "text_util.hpp"

namespace hypochain::predictions {

using nlohmann::json;

namespace {

const json& RequireKey(const json& obj, const char* key, const std::string& source,
                       std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw FormatError(source, line, std::string("missing key \"") + key + "\"");
  }
  return *it;
}

std::string RequireString(const json& obj, const char* key,
                          const std::string& source, std::size_t line) {
  const auto& v = RequireKey(obj, key, source, line);
  if (!v.is_string()) {
    throw FormatError(source, line, std::string("\"") + key + "\" must be a string");
  }
  return v.get<std::string>();
}

double RequireNumber(const json& obj, const char* key, const std::string& source,
                     std::size_t line) {
  const auto& v = RequireKey(obj, key, source, line);
  if (!v.is_number()) {
    throw FormatError(source, line, std::string("\"") + key + "\" must be a number");
  }
  const double d = v.get<double>();
  if (!std::isfinite(d)) {
    throw FormatError(source, line, std::string("\"") + key + "\" is not finite");
  }
  return d;
}

// Entity ids referenced by a filter are resolved once per query.
struct ResolvedTerms {
  std::vector<std::pair<int, std::optional<std::string>>> entities;
};

ResolvedTerms ResolveTerms(const PredictionFilter& f, const kg::KnowledgeGraph& g) {
  ResolvedTerms out;
  for (const auto& term : f.entity_terms) {
    if (g.contains(term.entity)) {
      out.entities.emplace_back(term.position, term.entity);
    } else {
      out.entities.emplace_back(term.position, g.ResolveName(term.entity));
    }
  }
  return out;
}

bool MatchesResolved(const PredictionRecord& r, const PredictionFilter& f,
                     const ResolvedTerms& terms, const kg::KnowledgeGraph& g) {
  if (f.head && r.head != *f.head) return false;
  if (f.min_score && r.score < *f.min_score) return false;
  if (f.category) {
    const auto* tail = g.find(r.tail);
    if (!tail || tail->category != *f.category) return false;
  }
  for (const auto& [position, id] : terms.entities) {
    if (!id || r.path.entity_at(static_cast<std::size_t>(position)) != *id) {
      return false;
    }
  }
  for (const auto& term : f.relation_terms) {
    if (r.path.hops[static_cast<std::size_t>(term.position - 1)].relation !=
        term.relation) {
      return false;
    }
  }
  if (f.exclude_relation_homogeneous &&
      IsRelationHomogeneous(r.path, *f.exclude_relation_homogeneous)) {
    return false;
  }
  return true;
}

bool CanonicalLess(const PredictionRecord* a, const PredictionRecord* b) {
  if (a->rank != b->rank) return a->rank < b->rank;
  if (a->head != b->head) return a->head < b->head;
  return a->id < b->id;
}

}  // namespace

void PredictionFilter::Validate() const {
  for (const auto& t : entity_terms) {
    if (t.position < 0 || t.position > 3) {
      throw ContractError("entity term hop position " + std::to_string(t.position) +
                          " outside 0..3");
    }
  }
  for (const auto& t : relation_terms) {
    if (t.position < 1 || t.position > 3) {
      throw ContractError("relation term hop position " +
                          std::to_string(t.position) + " outside 1..3");
    }
  }
}

bool IsRelationHomogeneous(const InterpretativePath& path, const std::string& label) {
  return std::all_of(path.hops.begin(), path.hops.end(),
                     [&](const Hop& h) { return h.relation == label; });
}

PredictionStore PredictionStore::Load(const std::filesystem::path& file,
                                      const kg::KnowledgeGraph& g,
                                      std::string dataset_id,
                                      std::ostream* diagnostics) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFormat, "cannot open " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return Parse(buffer.str(), g, std::move(dataset_id), file.string(), diagnostics);
}

PredictionStore PredictionStore::Parse(std::string_view text,
                                       const kg::KnowledgeGraph& g,
                                       std::string dataset_id,
                                       const std::string& source,
                                       std::ostream* diagnostics) {
  PredictionStore store;
  store.dataset_id_ = std::move(dataset_id);
  std::vector<std::size_t> line_of;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = detail::StripCr(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (detail::Trim(line).empty()) continue;

    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(source, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw FormatError(source, line_no, "record is not an object");

    PredictionRecord r;
    r.id = store.records_.size();
    r.head = RequireString(obj, "head", source, line_no);
    r.tail = RequireString(obj, "tail", source, line_no);
    r.score = RequireNumber(obj, "score", source, line_no);
    const auto& rank = RequireKey(obj, "rank", source, line_no);
    if (!rank.is_number_integer() || rank.get<long long>() < 1) {
      throw FormatError(source, line_no, "\"rank\" must be a positive integer");
    }
    r.rank = rank.get<int>();
    const std::string where = source + ":" + std::to_string(line_no);
    for (const auto* id : {&r.head, &r.tail}) {
      if (!g.contains(*id)) throw DanglingIdError(*id, where);
    }

    const auto& path = RequireKey(obj, "path", source, line_no);
    if (!path.is_array() || path.size() != kPathHops) {
      throw FormatError(source, line_no,
                        "malformed hop count: path must be an array of exactly 3 hops");
    }
    r.path.origin = r.head;
    for (std::size_t h = 0; h < kPathHops; ++h) {
      const auto& hop = path[h];
      if (!hop.is_object()) {
        throw FormatError(source, line_no, "hop " + std::to_string(h + 1) +
                                               " is not an object");
      }
      Hop& out = r.path.hops[h];
      out.relation = RequireString(hop, "relation", source, line_no);
      if (out.relation.empty()) {
        throw FormatError(source, line_no, "empty relation in hop " +
                                               std::to_string(h + 1));
      }
      out.entity = RequireString(hop, "entity", source, line_no);
      if (!g.contains(out.entity)) throw DanglingIdError(out.entity, where);
      out.weight = RequireNumber(hop, "weight", source, line_no);
      if (out.weight < 0.0 || out.weight > 1.0) {
        if (diagnostics) {
          *diagnostics << where << ": warning: hop " << h + 1 << " weight "
                       << out.weight << " clamped to [0,1]\n";
        }
        out.weight = std::clamp(out.weight, 0.0, 1.0);
        ++store.load_report_.clamped_weights;
      }
    }
    if (r.path.hops.back().entity != r.tail) {
      throw FormatError(source, line_no, "last hop entity \"" +
                                             r.path.hops.back().entity +
                                             "\" differs from tail \"" + r.tail + "\"");
    }
    r.source_line = std::string(line);
    store.records_.push_back(std::move(r));
    line_of.push_back(line_no);
  }

  // Per head: ranks form 1..n and follow descending score, ties by tail id.
  std::map<std::string, std::vector<const PredictionRecord*>> by_head;
  for (const auto& r : store.records_) by_head[r.head].push_back(&r);
  for (auto& [head, group] : by_head) {
    std::sort(group.begin(), group.end(),
              [](const auto* a, const auto* b) { return a->rank < b->rank; });
    for (std::size_t i = 0; i < group.size(); ++i) {
      const auto* r = group[i];
      if (r->rank != static_cast<int>(i + 1)) {
        throw FormatError(source, line_of[r->id],
                          "ranks for head \"" + head +
                              "\" are not a permutation of 1.." +
                              std::to_string(group.size()));
      }
      if (i == 0) continue;
      const auto* prev = group[i - 1];
      const bool ordered =
          prev->score > r->score || (prev->score == r->score && prev->tail <= r->tail);
      if (!ordered) {
        throw FormatError(source, line_of[r->id],
                          "rank/score inconsistency for head \"" + head + "\" at rank " +
                              std::to_string(r->rank));
      }
    }
  }

  store.stars_.assign(store.records_.size(), false);
  store.load_report_.records = store.records_.size();
  return store;
}

const PredictionRecord& PredictionStore::record(RecordId id) const {
  if (id >= records_.size()) {
    throw NotFoundError("unknown prediction record " + std::to_string(id));
  }
  return records_[id];
}

bool PredictionStore::has_head(const std::string& head) const {
  return std::any_of(records_.begin(), records_.end(),
                     [&](const auto& r) { return r.head == head; });
}

std::vector<std::string> PredictionStore::heads() const {
  std::vector<std::string> out;
  for (const auto& r : records_) out.push_back(r.head);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<const PredictionRecord*> PredictionStore::top_tails(
    const std::string& head, std::size_t n) const {
  std::vector<const PredictionRecord*> group;
  for (const auto& r : records_) {
    if (r.head == head) group.push_back(&r);
  }
  if (group.empty()) {
    throw NotFoundError("no predictions for head \"" + head + "\"");
  }
  std::sort(group.begin(), group.end(), CanonicalLess);
  if (group.size() > n) group.resize(n);
  return group;
}

std::vector<const PredictionRecord*> PredictionStore::canonical_order() const {
  std::vector<const PredictionRecord*> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(&r);
  std::sort(out.begin(), out.end(), CanonicalLess);
  return out;
}

std::vector<RankedRecord> PredictionStore::filter_and_rerank(
    const PredictionFilter& filter, const kg::KnowledgeGraph& g) const {
  const auto ordered = canonical_order();
  const auto selected = Select(ordered, filter, g);
  std::vector<RankedRecord> out;
  out.reserve(selected.size());
  for (std::size_t i = 0; i < selected.size(); ++i) {
    out.push_back(RankedRecord{selected[i], static_cast<int>(i + 1)});
  }
  return out;
}

std::string PredictionStore::echo_jsonl() const {
  std::string out;
  for (const auto& r : records_) {
    out += r.source_line;
    out += '\n';
  }
  return out;
}

void PredictionStore::mark_alignment(const chain::ChainMatchReport& report,
                                     bool require_all) {
  if (report.dataset_id != dataset_id_ || report.masks.size() != records_.size()) {
    throw ContractError("match report belongs to dataset \"" + report.dataset_id +
                        "\" (" + std::to_string(report.masks.size()) +
                        " records), store holds \"" + dataset_id_ + "\" (" +
                        std::to_string(records_.size()) + " records)");
  }
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto mask = report.masks[i];
    stars_[i] = require_all ? mask == chain::kFullMask : mask != 0;
  }
}

void PredictionStore::clear_alignment() { stars_.assign(records_.size(), false); }

bool PredictionStore::starred(RecordId id) const {
  if (id >= stars_.size()) {
    throw NotFoundError("unknown prediction record " + std::to_string(id));
  }
  return stars_[id];
}

std::vector<RecordId> PredictionStore::starred_ids() const {
  std::vector<RecordId> out;
  for (std::size_t i = 0; i < stars_.size(); ++i) {
    if (stars_[i]) out.push_back(i);
  }
  return out;
}

bool Matches(const PredictionRecord& r, const PredictionFilter& f,
             const kg::KnowledgeGraph& g) {
  f.Validate();
  return MatchesResolved(r, f, ResolveTerms(f, g), g);
}

std::vector<const PredictionRecord*> Select(
    std::span<const PredictionRecord* const> ordered, const PredictionFilter& f,
    const kg::KnowledgeGraph& g) {
  f.Validate();
  const auto terms = ResolveTerms(f, g);
  std::vector<const PredictionRecord*> out;
  for (const auto* r : ordered) {
    if (MatchesResolved(*r, f, terms, g)) out.push_back(r);
  }
  return out;
}

std::vector<const PredictionRecord*> SortBy(
    std::span<const PredictionRecord* const> records, const SortKey& key) {
  if (key.column == SortColumn::kEdgeWeight && (key.hop < 1 || key.hop > 3)) {
    throw ContractError("edge weight hop " + std::to_string(key.hop) +
                        " outside 1..3");
  }
  const auto extract = [&key](const PredictionRecord* r) {
    return key.column == SortColumn::kScore
               ? r->score
               : r->path.hops[static_cast<std::size_t>(key.hop - 1)].weight;
  };
  std::vector<const PredictionRecord*> out(records.begin(), records.end());
  std::stable_sort(out.begin(), out.end(),
                   [&](const PredictionRecord* a, const PredictionRecord* b) {
                     const double ka = extract(a);
                     const double kb = extract(b);
                     if (ka != kb) {
                       return key.order == SortOrder::kAscending ? ka < kb : ka > kb;
                     }
                     return a->tail < b->tail;
                   });
  return out;
}

}  // namespace hypochain::predictions
