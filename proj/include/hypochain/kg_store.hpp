#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace hypochain::kg {

struct Entity {
  std::string id;
  std::string name;
  std::string category;
  std::string description;
};

struct Triplet {
  std::string head;
  std::string relation;
  std::string tail;

  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

enum class Direction { kOut, kIn, kBoth };

std::string_view DirectionName(Direction d);

/// One incident edge as seen from the queried entity. `direction` is kOut when
/// the queried entity is the triplet head, kIn when it is the tail.
struct Neighbor {
  std::string relation;
  const Entity* entity = nullptr;
  Direction direction = Direction::kOut;
};

/// First edge between two entities. kOut means a -relation-> b.
struct EdgeHit {
  std::string relation;
  Direction direction = Direction::kOut;

  friend bool operator==(const EdgeHit&, const EdgeHit&) = default;
};

struct GraphCounts {
  std::size_t entities = 0;
  std::size_t triplets = 0;
  std::size_t relations = 0;
  std::size_t duplicates_skipped = 0;
};

/// Typed entities plus relation triplets, indexed in both directions.
///
/// Entity ids are opaque strings at the API boundary; internally every entity
/// and relation label is interned into a dense index. Adjacency lists are kept
/// sorted by (relation label, neighbor id) so every query is deterministic.
///
/// Concurrency: const member functions are safe for any number of concurrent
/// readers. AppendTriplets() needs exclusive access.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  /// Loads the entity and triplet TSV files. Line-numbered diagnostics
  /// (duplicate triplet warnings) go to `diagnostics` when non-null.
  static KnowledgeGraph Load(const std::filesystem::path& entity_file,
                             const std::filesystem::path& triplet_file,
                             std::ostream* diagnostics = nullptr);

  /// Builds a graph from in-memory rows with the same validation as Load().
  static KnowledgeGraph FromRows(std::vector<Entity> entities,
                                 const std::vector<Triplet>& triplets);

  GraphCounts counts() const;
  std::size_t entity_count() const { return entities_.size(); }
  std::size_t triplet_count() const { return rows_.size(); }

  bool contains(std::string_view id) const;
  const Entity& entity(std::string_view id) const;
  const Entity* find(std::string_view id) const;
  const std::vector<Entity>& entities() const { return entities_; }

  /// Triplets in load/append order (duplicates removed).
  std::vector<Triplet> triplets() const;
  std::vector<std::string> relation_vocabulary() const;
  bool has_relation(std::string_view label) const;
  std::vector<std::string> categories() const;

  /// Incident edges ordered by (relation, neighbor id); for kBoth, out-edges
  /// precede in-edges on equal keys. Throws NotFound for an unknown id.
  std::vector<Neighbor> neighbors(std::string_view id, Direction direction) const;

  /// Number of incident triplets in both directions.
  std::size_t degree(std::string_view id) const;

  std::optional<EdgeHit> edge_exists(std::string_view a, std::string_view b) const;

  /// Adds triplets, skipping ones already present. All ids are checked before
  /// anything is inserted, so a dangling id leaves the graph untouched.
  GraphCounts AppendTriplets(std::span<const Triplet> triplets);

  /// Name -> id lookup: exact match, then case-insensitive, then normalized
  /// (trimmed, whitespace collapsed, case-folded). Returns nullopt when no tier
  /// matches; throws a contract error listing candidates when the first
  /// matching tier is ambiguous.
  std::optional<std::string> ResolveName(std::string_view name) const;

 private:
  using Index = std::uint32_t;

  struct Edge {
    Index relation;
    Index neighbor;
  };

  struct Row {
    Index head;
    Index relation;
    Index tail;

    friend bool operator==(const Row&, const Row&) = default;
  };

  struct RowHash {
    std::size_t operator()(const Row& r) const noexcept;
  };

  Index InternRelation(const std::string& label);
  bool InsertRow(Row row);
  void SortAdjacency(std::vector<Edge>& edges) const;
  void InsertSorted(std::vector<Edge>& edges, Edge edge) const;
  bool EdgeLess(const Edge& x, const Edge& y) const;
  Index IndexOf(std::string_view id) const;
  void BuildNameIndex();

  std::vector<Entity> entities_;
  std::unordered_map<std::string, Index> id_index_;
  std::vector<std::string> relations_;
  std::unordered_map<std::string, Index> relation_index_;
  std::vector<Row> rows_;
  std::unordered_set<Row, RowHash> row_set_;
  std::vector<std::vector<Edge>> out_;
  std::vector<std::vector<Edge>> in_;
  std::size_t duplicates_skipped_ = 0;

  std::unordered_map<std::string, std::vector<Index>> names_exact_;
  std::unordered_map<std::string, std::vector<Index>> names_folded_;
  std::unordered_map<std::string, std::vector<Index>> names_normalized_;
};

/// Trim, collapse internal whitespace runs to one space, ASCII case-fold.
std::string NormalizeName(std::string_view name);
std::string FoldCase(std::string_view text);

}  // namespace hypochain::kg
