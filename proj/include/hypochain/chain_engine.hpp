#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hypochain/kg_store.hpp"
#include "hypochain/prediction_store.hpp"

namespace hypochain::llm {
class Gateway;
}

namespace hypochain::chain {

inline constexpr std::size_t kPositions = 3;

/// Bit i of a satisfaction mask is hypothesis H(i+1).
using Mask = std::uint8_t;
inline constexpr Mask kFullMask = 0b111;

/// Renders a mask in H1H2H3 order, e.g. {H2,H3} -> "011".
std::string MaskString(Mask mask);

/// Accepts "011", "H2,H3" or "2,3". Throws a contract error on an empty or
/// malformed subset.
Mask ParseSubset(const std::string& text);

struct EntityMatch {
  std::string entity_id;
  std::string entity_name;
  std::string category;
  std::string justification;
  int alignment_rank = 0;
};

/// One hypothesis position: it constrains the entity reached by the hop with
/// the same index, and optionally that hop's relation label.
struct HypothesisNode {
  std::string description;
  std::string relation;                     // free-text descriptor
  std::vector<std::string> relation_labels;  // KG labels it maps to
  std::vector<EntityMatch> entities;

  bool resolved() const { return !entities.empty(); }
};

enum class ChainStatus { kDraft, kAnalyzed, kRetrieved };

std::string_view StatusName(ChainStatus s);
ChainStatus ParseStatus(std::string_view s);

struct ChainAnalysis {
  std::string chain_assessment;
  std::string biological_interpretation;
  std::string suggested_improvements;
};

struct HypothesisChain {
  std::string id;
  std::optional<std::string> head;  // optional anchor for the source slot
  std::array<HypothesisNode, kPositions> positions;
  ChainStatus status = ChainStatus::kDraft;
  std::string critique;  // verbatim analyze response
  std::optional<ChainAnalysis> analysis;
};

struct PositionInput {
  std::string description;
  std::string relation;
  std::vector<std::string> relation_labels;
};

/// Draft chain with empty entity sets. Throws a contract error unless exactly
/// three non-empty descriptions are given.
HypothesisChain CreateChain(std::string id, const std::vector<PositionInput>& positions,
                            std::optional<std::string> head = std::nullopt);

struct ChainMatchReport {
  std::string chain_id;
  std::string dataset_id;
  std::vector<Mask> masks;  // indexed by prediction record id
  std::array<std::size_t, 8> exclusive{};  // index = mask; [0] = unmatched
  std::array<std::size_t, kPositions> per_hypothesis{};
  std::vector<std::string> warnings;

  std::size_t total() const { return masks.size(); }
  std::size_t matched() const { return masks.size() - exclusive[0]; }
};

/// Per-record satisfaction of the chain's three positions. Pure.
ChainMatchReport MatchChain(const HypothesisChain& chain,
                            const predictions::PredictionStore& store,
                            const kg::KnowledgeGraph& g);

/// Record ids whose mask equals `subset` (exclusive) or contains it.
std::vector<predictions::RecordId> UpsetSlice(const ChainMatchReport& report,
                                              Mask subset, bool exclusive);

/// Recomputes the aggregate counts from `masks`.
void Aggregate(ChainMatchReport& report);

inline constexpr int kDefaultPreviewCount = 20;

struct PreviewResult {
  std::vector<EntityMatch> matches;
  std::size_t dropped_unknown = 0;
  std::vector<std::string> warnings;
};

/// Asks the gateway for KG entities matching one hypothesis and resolves them
/// against the graph. Unknown names are dropped; survivors are deduplicated
/// and ranked 1..k in response order.
PreviewResult PreviewEntities(const HypothesisNode& node, int k,
                              llm::Gateway& gateway, const kg::KnowledgeGraph& g);

/// Sends the chain for critique. On success the verbatim response is stored
/// and the status becomes analyzed; on failure the chain is left untouched.
void AnalyzeChain(HypothesisChain& chain, llm::Gateway& gateway);

/// Human-readable chain text used as the analyze prompt input.
std::string DescribeChain(const HypothesisChain& chain);

}  // namespace hypochain::chain
