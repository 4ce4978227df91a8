#include <algorithm>

#include "hypochain/error.hpp"
#include "hypochain/llm_gateway.hpp"

namespace hypochain::llm {

using nlohmann::json;

std::string_view ModeName(Mode mode) { return mode == Mode::kRag ? "rag" : "llm"; }

Mode ParseMode(std::string_view text) {
  if (text == "llm") return Mode::kLlm;
  if (text == "rag") return Mode::kRag;
  throw ContractError("unknown retrieval mode \"" + std::string(text) +
                      "\" (expected llm or rag)");
}

GatewayResponse Gateway::Call(const GatewayRequest& request, const std::string& history) {
  if (request.mode == Mode::kRag && (!request.kg_context || !request.vector_context)) {
    throw ContractError(
        "rag mode requires kg_context and vector_context from the local stores");
  }

  Bindings bindings = DefaultFormatSlots(request.template_name);
  for (const auto& [key, value] : request.bindings) bindings[key] = value;
  const auto slots = Placeholders(TemplateBody(request.template_name));
  const auto has_slot = [&](const char* name) {
    return std::find(slots.begin(), slots.end(), name) != slots.end();
  };
  bindings["history"] = history;
  if (has_slot("kg_context")) bindings["kg_context"] = request.kg_context.value_or("");
  if (has_slot("vector_context")) {
    bindings["vector_context"] = request.vector_context.value_or("");
  }

  BackendRequest backend_request;
  backend_request.template_name = request.template_name;
  backend_request.mode = request.mode;
  backend_request.prompt = Render(request.template_name, bindings);
  backend_request.bindings = std::move(bindings);
  backend_request.timeout = request.timeout.value_or(default_timeout_);

  const auto start = std::chrono::steady_clock::now();
  GatewayResponse response;
  response.raw = backend_->Complete(backend_request);
  response.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  response.backend_id = backend_->id();
  try {
    response.parsed = ParseResponse(request.template_name, response.raw);
  } catch (const Error& e) {
    throw Error(ErrorCode::kBackend, std::string("unusable backend response: ") + e.what(),
                response.raw);
  }
  return response;
}

json ToJson(const Exchange& e) {
  json j = {{"seq", e.seq},
            {"mode", ModeName(e.mode)},
            {"template", TemplateId(e.template_name)},
            {"message", e.message},
            {"error", e.error},
            {"suggestions", e.suggestions}};
  j["response"] = e.response ? json(*e.response) : json(nullptr);
  if (e.error) j["error_message"] = e.error_message;
  return j;
}

Exchange ExchangeFromJson(const json& j) {
  Exchange e;
  e.seq = j.at("seq").get<std::size_t>();
  e.mode = ParseMode(j.at("mode").get<std::string>());
  e.template_name = ParseTemplateName(j.at("template").get<std::string>());
  e.message = j.at("message").get<std::string>();
  e.error = j.value("error", false);
  if (j.contains("response") && !j["response"].is_null()) {
    e.response = j["response"].get<std::string>();
  }
  e.error_message = j.value("error_message", "");
  e.suggestions = j.value("suggestions", std::vector<std::string>{});
  return e;
}

std::string ChatSession::RenderHistory(const std::string& current) const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& e : history_) {
    out += "user: " + e.message + "\n";
    if (e.response) {
      out += "assistant: " + *e.response + "\n";
    } else {
      out += "assistant: [error: " + e.error_message + "]\n";
    }
  }
  out += "user: " + current;
  return out;
}

GatewayResponse ChatSession::Chat(Gateway& gateway, const GatewayRequest& request) {
  const std::string history = RenderHistory(request.message);
  Exchange e;
  e.mode = request.mode;
  e.template_name = request.template_name;
  e.message = request.message;
  try {
    auto response = gateway.Call(request, history);
    e.response = response.raw;
    e.suggestions = response.parsed.suggestions;
    std::lock_guard lock(mu_);
    e.seq = history_.size();
    history_.push_back(std::move(e));
    return response;
  } catch (const Error& err) {
    if (err.code() != ErrorCode::kTimeout && err.code() != ErrorCode::kBackend) throw;
    e.error = true;
    e.error_message = err.what();
    std::lock_guard lock(mu_);
    e.seq = history_.size();
    history_.push_back(std::move(e));
    throw;
  }
}

std::vector<Exchange> ChatSession::history() const {
  std::lock_guard lock(mu_);
  return history_;
}

std::size_t ChatSession::size() const {
  std::lock_guard lock(mu_);
  return history_.size();
}

}  // namespace hypochain::llm
