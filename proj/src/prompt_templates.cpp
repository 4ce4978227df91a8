#include <algorithm>
#include <cctype>

#include "hypochain/error.hpp"
#include "hypochain/llm_gateway.hpp"
#include "prompt_bodies.inc"

namespace hypochain::llm {

namespace {

bool IsPlaceholderChar(char c, bool first) {
  const auto u = static_cast<unsigned char>(c);
  if (std::islower(u) || c == '_') return true;
  return !first && std::isdigit(u);
}

// Length of the `{name}` slot starting at body[pos], or 0 when none starts there.
std::size_t SlotLength(std::string_view body, std::size_t pos) {
  if (body[pos] != '{') return 0;
  std::size_t i = pos + 1;
  while (i < body.size() && IsPlaceholderChar(body[i], i == pos + 1)) ++i;
  if (i == pos + 1 || i >= body.size() || body[i] != '}') return 0;
  return i - pos + 1;
}

}  // namespace

std::string_view TemplateId(TemplateName name) {
  switch (name) {
    case TemplateName::kRecommendEntities:
      return "recommend_entities";
    case TemplateName::kAnalysePath:
      return "analyse_path";
    case TemplateName::kRetrieveByHypothesis:
      return "retrieve_by_hypothesis";
    case TemplateName::kAnalyzeImproveChain:
      return "analyze_improve_chain";
    case TemplateName::kGeneralResponse:
      return "general_response";
  }
  return "general_response";
}

TemplateName ParseTemplateName(std::string_view id) {
  for (const auto name : kAllTemplates) {
    if (TemplateId(name) == id) return name;
  }
  throw ContractError("unknown prompt template \"" + std::string(id) + "\"");
}

std::string_view TemplateBody(TemplateName name) {
  switch (name) {
    case TemplateName::kRecommendEntities:
      return bodies::kRecommendEntitiesBody;
    case TemplateName::kAnalysePath:
      return bodies::kAnalysePathBody;
    case TemplateName::kRetrieveByHypothesis:
      return bodies::kRetrieveByHypothesisBody;
    case TemplateName::kAnalyzeImproveChain:
      return bodies::kAnalyzeImproveChainBody;
    case TemplateName::kGeneralResponse:
      return bodies::kGeneralResponseBody;
  }
  return bodies::kGeneralResponseBody;
}

std::vector<std::string> Placeholders(std::string_view body) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const auto len = SlotLength(body, i);
    if (len == 0) continue;
    std::string name(body.substr(i + 1, len - 2));
    if (std::find(out.begin(), out.end(), name) == out.end()) {
      out.push_back(std::move(name));
    }
    i += len - 1;
  }
  return out;
}

std::string RenderText(std::string_view body, const Bindings& bindings) {
  const auto slots = Placeholders(body);
  for (const auto& [key, value] : bindings) {
    if (std::find(slots.begin(), slots.end(), key) == slots.end()) {
      throw ContractError("binding \"" + key + "\" matches no placeholder");
    }
  }
  std::string out;
  out.reserve(body.size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    const auto len = SlotLength(body, i);
    if (len == 0) {
      out.push_back(body[i]);
      continue;
    }
    const std::string name(body.substr(i + 1, len - 2));
    const auto it = bindings.find(name);
    if (it == bindings.end()) {
      throw ContractError("unbound placeholder {" + name + "}");
    }
    out += it->second;
    i += len - 1;
  }
  return out;
}

std::string Render(TemplateName name, const Bindings& bindings) {
  return RenderText(TemplateBody(name), bindings);
}

Bindings DefaultFormatSlots(TemplateName name) {
  switch (name) {
    case TemplateName::kRecommendEntities:
      return {{"recommend_entity_json_format",
               R"({"entities": [{"entity_name": "<exact entity name>", "category": "<category>", "reason": "<why this entity is relevant>"}], "suggestions": ["<follow-up question>"]})"}};
    case TemplateName::kAnalysePath:
      return {{"hypo_chain_format",
               "[Entity 1] -(relation 1)-> [Entity 2] -(relation 2)-> [Entity 3] "
               "-(relation 3)-> [Entity 4]"},
              {"path_output_format",
               R"({"hops": [{"subject": "<entity>", "relationship": "<relation>", "object": "<entity>", "explanation": "<biological meaning>"}], "hypothesis_chain": "<chain>", "suggestions": ["<follow-up question>"]})"}};
    case TemplateName::kRetrieveByHypothesis:
      return {{"retrieval_entity_json_format",
               R"({"entities": [{"entity_name": "<exact entity name>", "category": "<category>", "description": "<1-2 sentence relevance summary>"}]})"}};
    case TemplateName::kAnalyzeImproveChain:
      return {{"analyze_and_improve_output_format",
               R"({"chain_assessment": "<assessment>", "biological_interpretation": "<interpretation>", "suggested_improvements": "<improvements>"})"}};
    case TemplateName::kGeneralResponse:
      return {};
  }
  return {};
}

}  // namespace hypochain::llm
