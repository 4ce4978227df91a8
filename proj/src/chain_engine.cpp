#include "hypochain/chain_engine.hpp"

#include <algorithm>
#include <unordered_set>

#include "hypochain/error.hpp"
#include "hypochain/llm_gateway.hpp"
#include "text_util.hpp"

namespace hypochain::chain {

std::string MaskString(Mask mask) {
  std::string out;
  for (std::size_t i = 0; i < kPositions; ++i) out.push_back((mask >> i) & 1 ? '1' : '0');
  return out;
}

Mask ParseSubset(const std::string& text) {
  const auto trimmed = detail::Trim(text);
  if (trimmed.empty()) throw ContractError("empty hypothesis subset");
  Mask mask = 0;
  if (trimmed.size() == kPositions &&
      trimmed.find_first_not_of("01") == std::string_view::npos) {
    for (std::size_t i = 0; i < kPositions; ++i) {
      if (trimmed[i] == '1') mask |= static_cast<Mask>(1u << i);
    }
  } else {
    for (auto part : detail::Split(trimmed, ',')) {
      part = detail::Trim(part);
      if (!part.empty() && (part.front() == 'H' || part.front() == 'h')) {
        part.remove_prefix(1);
      }
      if (part.size() != 1 || part[0] < '1' || part[0] > '3') {
        throw ContractError("malformed hypothesis subset \"" + std::string(trimmed) +
                            "\" (use H1..H3, 1..3 or a 3-digit mask)");
      }
      mask |= static_cast<Mask>(1u << (part[0] - '1'));
    }
  }
  if (mask == 0) throw ContractError("empty hypothesis subset");
  return mask;
}

std::string_view StatusName(ChainStatus s) {
  switch (s) {
    case ChainStatus::kDraft:
      return "draft";
    case ChainStatus::kAnalyzed:
      return "analyzed";
    case ChainStatus::kRetrieved:
      return "retrieved";
  }
  return "draft";
}

ChainStatus ParseStatus(std::string_view s) {
  if (s == "draft") return ChainStatus::kDraft;
  if (s == "analyzed") return ChainStatus::kAnalyzed;
  if (s == "retrieved") return ChainStatus::kRetrieved;
  throw ContractError("unknown chain status \"" + std::string(s) + "\"");
}

HypothesisChain CreateChain(std::string id, const std::vector<PositionInput>& positions,
                            std::optional<std::string> head) {
  if (positions.size() != kPositions) {
    throw ContractError("a hypothesis chain has exactly 3 positions, got " +
                        std::to_string(positions.size()));
  }
  HypothesisChain chain;
  chain.id = std::move(id);
  chain.head = std::move(head);
  for (std::size_t i = 0; i < kPositions; ++i) {
    if (detail::Trim(positions[i].description).empty()) {
      throw ContractError("hypothesis " + std::to_string(i + 1) + " has no description");
    }
    auto& node = chain.positions[i];
    node.description = positions[i].description;
    node.relation = positions[i].relation;
    node.relation_labels = positions[i].relation_labels;
  }
  return chain;
}

void Aggregate(ChainMatchReport& report) {
  report.exclusive.fill(0);
  report.per_hypothesis.fill(0);
  for (const Mask m : report.masks) {
    ++report.exclusive[m & kFullMask];
    for (std::size_t i = 0; i < kPositions; ++i) {
      if ((m >> i) & 1) ++report.per_hypothesis[i];
    }
  }
}

ChainMatchReport MatchChain(const HypothesisChain& chain,
                            const predictions::PredictionStore& store,
                            const kg::KnowledgeGraph& g) {
  ChainMatchReport report;
  report.chain_id = chain.id;
  report.dataset_id = store.dataset_id();

  std::array<std::unordered_set<std::string>, kPositions> entity_sets;
  std::array<std::optional<std::unordered_set<std::string>>, kPositions> label_sets;
  for (std::size_t i = 0; i < kPositions; ++i) {
    const auto& node = chain.positions[i];
    if (!node.resolved()) {
      throw ContractError("hypothesis " + std::to_string(i + 1) +
                          " has no resolved entities; preview it before retrieval");
    }
    for (const auto& m : node.entities) entity_sets[i].insert(m.entity_id);

    std::unordered_set<std::string> labels;
    for (const auto& l : node.relation_labels) {
      if (g.has_relation(l)) labels.insert(l);
    }
    if (node.relation_labels.empty() && g.has_relation(node.relation)) {
      labels.insert(node.relation);
    }
    if (!labels.empty()) {
      label_sets[i] = std::move(labels);
    } else if (!node.relation_labels.empty() || !detail::Trim(node.relation).empty()) {
      report.warnings.push_back("hypothesis " + std::to_string(i + 1) +
                                ": relation \"" + node.relation +
                                "\" maps to no KG relation label; not enforced");
    }
  }

  report.masks.assign(store.size(), 0);
  for (const auto& r : store.records()) {
    if (chain.head && r.head != *chain.head) continue;
    Mask m = 0;
    for (std::size_t i = 0; i < kPositions; ++i) {
      const auto& hop = r.path.hops[i];
      if (!entity_sets[i].count(hop.entity)) continue;
      if (label_sets[i] && !label_sets[i]->count(hop.relation)) continue;
      m |= static_cast<Mask>(1u << i);
    }
    report.masks[r.id] = m;
  }
  Aggregate(report);
  return report;
}

std::vector<predictions::RecordId> UpsetSlice(const ChainMatchReport& report,
                                              Mask subset, bool exclusive) {
  if ((subset & kFullMask) == 0) throw ContractError("empty hypothesis subset");
  std::vector<predictions::RecordId> out;
  for (std::size_t id = 0; id < report.masks.size(); ++id) {
    const Mask m = report.masks[id];
    const bool hit = exclusive ? m == subset : (m & subset) == subset;
    if (hit) out.push_back(id);
  }
  return out;
}

PreviewResult PreviewEntities(const HypothesisNode& node, int k, llm::Gateway& gateway,
                              const kg::KnowledgeGraph& g) {
  if (k <= 0) throw ContractError("preview size must be positive");
  if (detail::Trim(node.description).empty()) {
    throw ContractError("hypothesis description is empty");
  }
  std::string message = node.description;
  if (!node.relation.empty()) message += " (relation: " + node.relation + ")";
  if (k != kDefaultPreviewCount) {
    message += "\nReturn at most " + std::to_string(k) + " entities.";
  }

  llm::GatewayRequest request;
  request.template_name = llm::TemplateName::kRetrieveByHypothesis;
  request.mode = llm::Mode::kRag;
  request.message = message;
  request.kg_context = llm::AssembleKgContext(node.description, g, 1, 200).text;
  request.vector_context = llm::AssembleVectorContext(node.description, g);
  const auto response = gateway.Call(request, "user: " + message);

  PreviewResult result;
  result.warnings = response.parsed.warnings;
  std::unordered_set<std::string> seen;
  for (const auto& candidate : response.parsed.retrieved) {
    std::optional<std::string> id;
    try {
      id = g.ResolveName(candidate.entity_name);
    } catch (const Error& e) {
      result.warnings.push_back(std::string(e.what()) + ": " + e.detail());
    }
    if (!id) {
      ++result.dropped_unknown;
      result.warnings.push_back("dropped \"" + candidate.entity_name +
                                "\": not an entity of the knowledge graph");
      continue;
    }
    if (!seen.insert(*id).second) continue;
    if (static_cast<int>(result.matches.size()) == k) break;
    const auto& e = g.entity(*id);
    result.matches.push_back(EntityMatch{e.id, e.name, e.category, candidate.description,
                                         static_cast<int>(result.matches.size() + 1)});
  }
  if (result.matches.empty()) {
    throw ContractError("no retrieved entity resolves to the knowledge graph");
  }
  return result;
}

std::string DescribeChain(const HypothesisChain& chain) {
  std::string out = "[" + chain.head.value_or("source entity") + "]";
  for (const auto& node : chain.positions) {
    out += " -(" + (node.relation.empty() ? std::string("related to") : node.relation) +
           ")-> [" + node.description + "]";
  }
  return out;
}

void AnalyzeChain(HypothesisChain& chain, llm::Gateway& gateway) {
  if (chain.status == ChainStatus::kRetrieved) {
    throw ContractError("chain \"" + chain.id +
                        "\" was already retrieved; edit it before re-analysis");
  }
  llm::GatewayRequest request;
  request.template_name = llm::TemplateName::kAnalyzeImproveChain;
  request.mode = llm::Mode::kLlm;
  request.message = DescribeChain(chain);
  const auto response = gateway.Call(request, "user: " + request.message);

  chain.critique = response.raw;
  const auto& s = *response.parsed.sections;
  chain.analysis = ChainAnalysis{s.chain_assessment, s.biological_interpretation,
                                 s.suggested_improvements};
  chain.status = ChainStatus::kAnalyzed;
}

}  // namespace hypochain::chain
