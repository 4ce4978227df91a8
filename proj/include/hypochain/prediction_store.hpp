#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hypochain/kg_store.hpp"

namespace hypochain::chain {
struct ChainMatchReport;
}

namespace hypochain::predictions {

inline constexpr std::size_t kPathHops = 3;
inline constexpr std::size_t kDefaultTopTails = 50;

struct Hop {
  std::string relation;
  double weight = 0.0;
  std::string entity;  // the entity this hop arrives at
};

/// The 3-hop justification a model emits for one (head, tail) prediction.
struct InterpretativePath {
  std::string origin;
  std::array<Hop, kPathHops> hops;

  /// Entity at position 0..3; 0 is the origin, i is the target of hop i.
  const std::string& entity_at(std::size_t position) const {
    return position == 0 ? origin : hops[position - 1].entity;
  }
};

using RecordId = std::size_t;

struct PredictionRecord {
  RecordId id = 0;  // 0-based line order in the source file
  std::string head;
  std::string tail;
  double score = 0.0;
  int rank = 0;
  InterpretativePath path;
  std::string source_line;  // verbatim JSON line
};

struct EntityTerm {
  int position = 0;    // 0..3
  std::string entity;  // id or display name
};

struct RelationTerm {
  int position = 1;    // 1..3
  std::string relation;
};

/// Prediction View filter. All present terms must hold (conjunction).
struct PredictionFilter {
  std::optional<std::string> head;
  std::optional<std::string> category;  // category of the tail entity
  std::vector<EntityTerm> entity_terms;
  std::vector<RelationTerm> relation_terms;
  std::optional<std::string> exclude_relation_homogeneous;
  std::optional<double> min_score;

  /// Throws a contract error on an out-of-range hop position.
  void Validate() const;
};

struct RankedRecord {
  const PredictionRecord* record = nullptr;
  int display_rank = 0;
};

enum class SortColumn { kScore, kEdgeWeight };
enum class SortOrder { kAscending, kDescending };

struct SortKey {
  SortColumn column = SortColumn::kScore;
  int hop = 0;  // 1..3 for kEdgeWeight
  SortOrder order = SortOrder::kDescending;
};

struct LoadReport {
  std::size_t records = 0;
  std::size_t clamped_weights = 0;
};

/// Ranked predictions with interpretative paths for one dataset.
///
/// Records are immutable after load. Star flags (hypothesis alignment) are the
/// only mutable state; callers serialize MarkAlignment() against readers.
class PredictionStore {
 public:
  PredictionStore() = default;

  static PredictionStore Load(const std::filesystem::path& file,
                              const kg::KnowledgeGraph& g,
                              std::string dataset_id,
                              std::ostream* diagnostics = nullptr);

  /// Parses JSON-lines text already in memory; `source` labels diagnostics.
  static PredictionStore Parse(std::string_view text, const kg::KnowledgeGraph& g,
                               std::string dataset_id,
                               const std::string& source = "<memory>",
                               std::ostream* diagnostics = nullptr);

  const std::string& dataset_id() const { return dataset_id_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<PredictionRecord>& records() const { return records_; }
  const PredictionRecord& record(RecordId id) const;
  const LoadReport& load_report() const { return load_report_; }

  bool has_head(const std::string& head) const;
  /// Heads with at least one prediction, ascending.
  std::vector<std::string> heads() const;

  /// Best `n` records for `head` in ascending rank. Throws NotFound when the
  /// head has no predictions.
  std::vector<const PredictionRecord*> top_tails(const std::string& head,
                                                 std::size_t n = kDefaultTopTails) const;

  /// All records in the canonical display order: original rank ascending,
  /// then head id, then record id.
  std::vector<const PredictionRecord*> canonical_order() const;

  /// Records passing `filter`, in canonical order, with display ranks 1..k.
  std::vector<RankedRecord> filter_and_rerank(const PredictionFilter& filter,
                                              const kg::KnowledgeGraph& g) const;

  /// Records of the JSON-lines file, verbatim.
  std::string echo_jsonl() const;

  /// Sets star flags from a match report over this dataset. With
  /// `require_all` a star needs every hypothesis satisfied; otherwise any one.
  void mark_alignment(const chain::ChainMatchReport& report, bool require_all = true);
  void clear_alignment();
  bool starred(RecordId id) const;
  std::vector<RecordId> starred_ids() const;

 private:
  std::string dataset_id_;
  std::vector<PredictionRecord> records_;
  std::vector<bool> stars_;
  LoadReport load_report_;
};

/// True iff every hop of the path uses `label`.
bool IsRelationHomogeneous(const InterpretativePath& path, const std::string& label);

/// Whether one record passes every term of the filter.
bool Matches(const PredictionRecord& r, const PredictionFilter& f,
             const kg::KnowledgeGraph& g);

/// Order-preserving selection: the records of `ordered` that pass `f`.
std::vector<const PredictionRecord*> Select(
    std::span<const PredictionRecord* const> ordered, const PredictionFilter& f,
    const kg::KnowledgeGraph& g);

/// Stable sort by the key; equal keys fall back to tail id ascending.
/// Throws a contract error for a hop outside 1..3.
std::vector<const PredictionRecord*> SortBy(
    std::span<const PredictionRecord* const> records, const SortKey& key);

}  // namespace hypochain::predictions
