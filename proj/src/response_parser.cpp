#include <algorithm>
#include <array>
#include <cctype>

#include "hypochain/error.hpp"
#include "hypochain/llm_gateway.hpp"
#include "text_util.hpp"

namespace hypochain::llm {

using nlohmann::json;

namespace {

// Index one past the bracket that closes raw[open], honoring JSON strings.
std::size_t MatchingClose(std::string_view raw, std::size_t open) {
  std::vector<char> stack{raw[open] == '{' ? '}' : ']'};
  bool in_string = false;
  for (std::size_t i = open + 1; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_string = true;
        break;
      case '{':
        stack.push_back('}');
        break;
      case '[':
        stack.push_back(']');
        break;
      case '}':
      case ']':
        if (stack.back() != c) return std::string_view::npos;
        stack.pop_back();
        if (stack.empty()) return i + 1;
        break;
      default:
        break;
    }
  }
  return std::string_view::npos;
}

Error SchemaError(const std::string& message) {
  return Error(ErrorCode::kFormat, "response schema violation: " + message);
}

const json& EntityArray(const json& value, std::initializer_list<const char*> keys) {
  if (value.is_array()) return value;
  if (value.is_object()) {
    for (const char* key : keys) {
      const auto it = value.find(key);
      if (it != value.end() && it->is_array()) return *it;
    }
  }
  throw SchemaError("expected an entity array");
}

// Reads the string fields of one entry; `fields` lists the required keys in
// schema order. Extra keys are reported as warnings.
std::vector<std::string> ReadEntry(const json& entry, std::size_t index,
                                   const std::array<const char*, 3>& fields,
                                   std::vector<std::string>& warnings) {
  const std::string where = "entry " + std::to_string(index);
  if (!entry.is_object()) throw SchemaError(where + " is not an object");
  std::vector<std::string> values;
  for (const char* key : fields) {
    const auto it = entry.find(key);
    if (it == entry.end()) {
      throw SchemaError(where + " missing key \"" + key + "\"");
    }
    if (!it->is_string()) {
      throw SchemaError(where + " key \"" + key + "\" is not a string");
    }
    values.push_back(it->get<std::string>());
  }
  for (const auto& [key, _] : entry.items()) {
    if (std::find_if(fields.begin(), fields.end(),
                     [&](const char* f) { return key == f; }) == fields.end()) {
      warnings.push_back(where + " has unexpected key \"" + key + "\"");
    }
  }
  return values;
}

void CheckCount(std::size_t count, std::size_t lo, std::size_t hi,
                std::vector<std::string>& warnings) {
  if (count < lo || count > hi) {
    warnings.push_back("expected " + std::to_string(lo) + "-" + std::to_string(hi) +
                       " entities, got " + std::to_string(count));
  }
}

std::string Lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Markdown fallback: sections introduced by their heading text, in any order.
std::optional<ChainSections> MarkdownSections(std::string_view raw) {
  static constexpr std::array<std::string_view, 3> kHeadings = {
      "chain assessment", "biological interpretation", "suggested improvements"};
  const std::string lower = Lower(raw);
  std::array<std::size_t, 3> heading_pos{};
  std::array<std::size_t, 3> body_pos{};
  for (std::size_t k = 0; k < kHeadings.size(); ++k) {
    const auto pos = lower.find(kHeadings[k]);
    if (pos == std::string::npos) return std::nullopt;
    const auto line_start = lower.rfind('\n', pos);
    heading_pos[k] = line_start == std::string::npos ? 0 : line_start + 1;
    const auto line_end = lower.find('\n', pos);
    body_pos[k] = line_end == std::string::npos ? lower.size() : line_end + 1;
  }
  const auto body = [&](std::size_t k) {
    std::size_t end = raw.size();
    for (std::size_t other = 0; other < kHeadings.size(); ++other) {
      if (heading_pos[other] > heading_pos[k]) end = std::min(end, heading_pos[other]);
    }
    if (body_pos[k] >= end) return std::string();
    return std::string(detail::Trim(raw.substr(body_pos[k], end - body_pos[k])));
  };
  return ChainSections{body(0), body(1), body(2)};
}

std::string SectionText(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string out;
    for (const auto& item : v) {
      if (!out.empty()) out += '\n';
      out += "- " + (item.is_string() ? item.get<std::string>() : item.dump());
    }
    return out;
  }
  return v.dump();
}

}  // namespace

std::optional<json> ExtractJson(std::string_view raw) {
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != '{' && raw[i] != '[') continue;
    const auto end = MatchingClose(raw, i);
    if (end == std::string_view::npos) continue;
    try {
      return json::parse(raw.substr(i, end - i));
    } catch (const json::parse_error&) {
      continue;
    }
  }
  return std::nullopt;
}

ParsedPayload ParseResponse(TemplateName name, std::string_view raw) {
  if (detail::Trim(raw).empty()) {
    throw Error(ErrorCode::kFormat, "empty response");
  }
  ParsedPayload out;
  out.template_name = name;
  out.json = ExtractJson(raw);

  const auto require_json = [&]() -> const json& {
    if (!out.json) throw Error(ErrorCode::kFormat, "no JSON value found in response");
    return *out.json;
  };

  switch (name) {
    case TemplateName::kRecommendEntities: {
      const auto& items = EntityArray(require_json(), {"entities", "recommendations"});
      for (std::size_t i = 0; i < items.size(); ++i) {
        auto v = ReadEntry(items[i], i, {"entity_name", "category", "reason"},
                           out.warnings);
        out.recommended.push_back(RecommendedEntity{v[0], v[1], v[2]});
      }
      CheckCount(out.recommended.size(), 5, 7, out.warnings);
      break;
    }
    case TemplateName::kRetrieveByHypothesis: {
      const auto& items = EntityArray(require_json(), {"entities"});
      for (std::size_t i = 0; i < items.size(); ++i) {
        auto v = ReadEntry(items[i], i, {"entity_name", "category", "description"},
                           out.warnings);
        out.retrieved.push_back(RetrievedEntity{v[0], v[1], v[2]});
      }
      CheckCount(out.retrieved.size(), 15, 20, out.warnings);
      break;
    }
    case TemplateName::kAnalyzeImproveChain: {
      static constexpr std::array<const char*, 3> kKeys = {
          "chain_assessment", "biological_interpretation", "suggested_improvements"};
      if (out.json && out.json->is_object() &&
          std::all_of(kKeys.begin(), kKeys.end(),
                      [&](const char* k) { return out.json->contains(k); })) {
        out.sections = ChainSections{SectionText((*out.json)[kKeys[0]]),
                                     SectionText((*out.json)[kKeys[1]]),
                                     SectionText((*out.json)[kKeys[2]])};
      } else {
        out.sections = MarkdownSections(raw);
      }
      if (!out.sections) {
        throw SchemaError(
            "expected sections Chain Assessment, Biological Interpretation and "
            "Suggested Improvements");
      }
      break;
    }
    case TemplateName::kAnalysePath: {
      const auto& value = require_json();
      if (value.is_object() && value.contains("hops") && !value["hops"].is_array()) {
        throw SchemaError("\"hops\" must be an array");
      }
      break;
    }
    case TemplateName::kGeneralResponse:
      break;
  }

  if (out.json && out.json->is_object()) {
    const auto it = out.json->find("suggestions");
    if (it != out.json->end() && it->is_array()) {
      for (const auto& s : *it) {
        if (s.is_string()) out.suggestions.push_back(s.get<std::string>());
      }
    }
  }
  return out;
}

}  // namespace hypochain::llm
