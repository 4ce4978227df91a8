#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hypochain/kg_store.hpp"

namespace hypochain::llm {

// ---------------------------------------------------------------------------
// Prompt templates

enum class TemplateName {
  kRecommendEntities,
  kAnalysePath,
  kRetrieveByHypothesis,
  kAnalyzeImproveChain,
  kGeneralResponse,
};

inline constexpr std::array<TemplateName, 5> kAllTemplates = {
    TemplateName::kRecommendEntities, TemplateName::kAnalysePath,
    TemplateName::kRetrieveByHypothesis, TemplateName::kAnalyzeImproveChain,
    TemplateName::kGeneralResponse};

std::string_view TemplateId(TemplateName name);
/// Throws a contract error for an unknown id.
TemplateName ParseTemplateName(std::string_view id);

/// Verbatim template text with `{placeholder}` slots.
std::string_view TemplateBody(TemplateName name);

/// Distinct placeholder names in order of first appearance.
std::vector<std::string> Placeholders(std::string_view body);

using Bindings = std::map<std::string, std::string>;

/// Substitutes every `{name}` slot in one pass; substituted text is never
/// re-scanned. Throws a contract error naming the first unbound placeholder,
/// or naming a binding that matches no placeholder.
std::string RenderText(std::string_view body, const Bindings& bindings);
std::string Render(TemplateName name, const Bindings& bindings);

/// Output-format slot values the gateway binds by default (the JSON shape
/// each response parser expects).
Bindings DefaultFormatSlots(TemplateName name);

// ---------------------------------------------------------------------------
// Response parsing

struct RecommendedEntity {
  std::string entity_name;
  std::string category;
  std::string reason;
};

struct RetrievedEntity {
  std::string entity_name;
  std::string category;
  std::string description;
};

struct ChainSections {
  std::string chain_assessment;
  std::string biological_interpretation;
  std::string suggested_improvements;
};

struct ParsedPayload {
  TemplateName template_name = TemplateName::kGeneralResponse;
  std::optional<nlohmann::json> json;  // embedded JSON value, when present
  std::vector<RecommendedEntity> recommended;
  std::vector<RetrievedEntity> retrieved;
  std::optional<ChainSections> sections;
  std::vector<std::string> suggestions;
  std::vector<std::string> warnings;
};

/// Finds the first balanced JSON object or array in `raw` that parses,
/// skipping surrounding prose and code fences.
std::optional<nlohmann::json> ExtractJson(std::string_view raw);

/// Typed payload for a template. Throws a format error when no JSON is found
/// for a JSON template, or when an entry misses a schema key (the message
/// names the entry index and key).
ParsedPayload ParseResponse(TemplateName name, std::string_view raw);

// ---------------------------------------------------------------------------
// Local context assembly

struct KgContext {
  std::string text;  // one "head —relation→ tail" line per cited triplet
  std::vector<kg::Triplet> cited;
  std::vector<std::string> seeds;  // entity ids matched in the query
};

/// Entities named in `query` (token n-grams resolved by name), expanded
/// `hops` steps, truncated to `cap` triplets by the degree of the reached
/// entity (descending) and then triplet ids.
KgContext AssembleKgContext(std::string_view query, const kg::KnowledgeGraph& g,
                            int hops, std::size_t cap);

/// Top-k entity descriptions by term frequency of the query's tokens.
std::string AssembleVectorContext(std::string_view query, const kg::KnowledgeGraph& g,
                                  std::size_t top_k = 5);

// ---------------------------------------------------------------------------
// Backends

enum class Mode { kLlm, kRag };
std::string_view ModeName(Mode mode);
Mode ParseMode(std::string_view text);

struct BackendRequest {
  TemplateName template_name = TemplateName::kGeneralResponse;
  Mode mode = Mode::kLlm;
  std::string prompt;
  Bindings bindings;
  std::chrono::milliseconds timeout{60000};
};

/// A chat-completion provider. Complete() returns the raw response text or
/// throws Error with kTimeout / kBackend.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual std::string Complete(const BackendRequest& request) = 0;
};

/// Deterministic offline backend. Its answers are derived from the request
/// bindings only, so identical requests yield identical responses.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(std::uint64_t seed = 0) : seed_(seed) {}
  std::string id() const override { return "mock"; }
  std::string Complete(const BackendRequest& request) override;

 private:
  std::uint64_t seed_;
};

struct HttpBackendConfig {
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string api_key;
  std::string model;
  int retries = 2;
  std::chrono::milliseconds initial_backoff{500};
};

/// Minimal chat-completion client: the rendered prompt is sent as a single
/// user message and the first choice's content is returned.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {}
  std::string id() const override { return "http:" + config_.model; }
  std::string Complete(const BackendRequest& request) override;

 private:
  HttpBackendConfig config_;
};

struct GatewaySettings {
  bool mock = true;
  std::uint64_t mock_seed = 0;
  HttpBackendConfig http;
  std::chrono::milliseconds timeout{60000};
};

/// Reads HYPOCHAIN_LLM_URL, HYPOCHAIN_LLM_KEY, HYPOCHAIN_LLM_MODEL and
/// HYPOCHAIN_MOCK_LLM. Without a URL the mock backend is selected.
GatewaySettings SettingsFromEnvironment();
std::shared_ptr<Backend> MakeBackend(const GatewaySettings& settings);

// ---------------------------------------------------------------------------
// Gateway

struct GatewayRequest {
  TemplateName template_name = TemplateName::kGeneralResponse;
  Mode mode = Mode::kLlm;
  std::string message;
  Bindings bindings;  // extra template bindings (e.g. selected path)
  std::optional<std::string> kg_context;
  std::optional<std::string> vector_context;
  std::optional<std::chrono::milliseconds> timeout;
};

struct GatewayResponse {
  std::string raw;
  ParsedPayload parsed;
  std::string backend_id;
  std::chrono::milliseconds latency{0};
};

class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Backend> backend,
                   std::chrono::milliseconds default_timeout = std::chrono::seconds(60))
      : backend_(std::move(backend)), default_timeout_(default_timeout) {}

  /// Renders the template with `history` bound to {history}, calls the
  /// backend and parses the answer. In rag mode both kg_context and
  /// vector_context must be supplied (contract error otherwise).
  GatewayResponse Call(const GatewayRequest& request, const std::string& history);

  const Backend& backend() const { return *backend_; }

 private:
  std::shared_ptr<Backend> backend_;
  std::chrono::milliseconds default_timeout_;
};

struct Exchange {
  std::size_t seq = 0;
  Mode mode = Mode::kLlm;
  TemplateName template_name = TemplateName::kGeneralResponse;
  std::string message;
  std::optional<std::string> response;  // absent on error
  bool error = false;
  std::string error_message;
  std::vector<std::string> suggestions;
};

nlohmann::json ToJson(const Exchange& e);
Exchange ExchangeFromJson(const nlohmann::json& j);

/// Append-only conversation log for one session. Mutations are serialized.
class ChatSession {
 public:
  ChatSession() = default;
  explicit ChatSession(std::vector<Exchange> history) : history_(std::move(history)) {}

  /// Sends one turn. On success the exchange is appended with its response;
  /// on timeout or backend failure an error marker is appended and the error
  /// is rethrown. Contract violations leave the history untouched.
  GatewayResponse Chat(Gateway& gateway, const GatewayRequest& request);

  std::vector<Exchange> history() const;
  std::size_t size() const;

  /// History rendered for the {history} slot, ending with `current` as the
  /// newest user turn.
  std::string RenderHistory(const std::string& current) const;

 private:
  mutable std::mutex mu_;
  std::vector<Exchange> history_;
};

}  // namespace hypochain::llm
