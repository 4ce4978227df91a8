#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "hypochain/error.hpp"
#include "hypochain/llm_gateway.hpp"
#include "text_util.hpp"
#include "tokenize.hpp"

namespace hypochain::llm {

using nlohmann::json;

namespace {

std::uint64_t Fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string Binding(const BackendRequest& r, const std::string& key) {
  const auto it = r.bindings.find(key);
  return it == r.bindings.end() ? std::string() : it->second;
}

// Text after the newest "user: " marker of the rendered history.
std::string LatestUserTurn(const std::string& history) {
  const auto pos = history.rfind("user: ");
  if (pos == std::string::npos) return history;
  return std::string(detail::Trim(std::string_view(history).substr(pos + 6)));
}

// Entity names cited in KG context lines (head, relation arrow, tail), in order.
std::vector<std::string> ContextNames(const std::string& kg_context) {
  static const std::string kDash = " —";
  static const std::string kArrow = "→ ";
  std::vector<std::string> names;
  const auto add = [&](std::string_view name) {
    const std::string s(detail::Trim(name));
    if (!s.empty() && std::find(names.begin(), names.end(), s) == names.end()) {
      names.push_back(s);
    }
  };
  std::istringstream in(kg_context);
  std::string line;
  while (std::getline(in, line)) {
    const auto dash = line.find(kDash);
    const auto arrow = line.find(kArrow, dash == std::string::npos ? 0 : dash);
    if (dash == std::string::npos || arrow == std::string::npos) continue;
    add(std::string_view(line).substr(0, dash));
    add(std::string_view(line).substr(arrow + kArrow.size()));
  }
  return names;
}

std::vector<std::string> RankByOverlap(std::vector<std::string> names,
                                       const std::string& query, std::uint64_t seed) {
  std::vector<std::string> terms;
  for (const auto& t : detail::Tokenize(query)) {
    auto lower = detail::Lowercase(t);
    if (!detail::IsStopword(lower)) terms.push_back(std::move(lower));
  }
  const auto overlap = [&](const std::string& name) {
    std::size_t n = 0;
    for (const auto& t : detail::Tokenize(name)) {
      if (std::find(terms.begin(), terms.end(), detail::Lowercase(t)) != terms.end()) ++n;
    }
    return n;
  };
  std::vector<std::tuple<std::size_t, std::uint64_t, std::string>> keyed;
  for (auto& n : names) {
    keyed.emplace_back(overlap(n), Fnv1a(n, seed), std::move(n));
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::get<1>(a) < std::get<1>(b);
  });
  std::vector<std::string> out;
  for (auto& k : keyed) out.push_back(std::move(std::get<2>(k)));
  return out;
}

}  // namespace

std::string MockBackend::Complete(const BackendRequest& request) {
  const std::string query = LatestUserTurn(Binding(request, "history"));
  const auto names =
      RankByOverlap(ContextNames(Binding(request, "kg_context")), query, seed_);

  switch (request.template_name) {
    case TemplateName::kRecommendEntities: {
      json entities = json::array();
      for (std::size_t i = 0; i < names.size() && i < 6; ++i) {
        entities.push_back({{"entity_name", names[i]},
                            {"category", "unspecified"},
                            {"reason", "cited in the local knowledge graph context"}});
      }
      json suggestions = json::array();
      if (!names.empty()) suggestions.push_back("How is " + names.front() + " connected to the query?");
      return "Recommended entities:\n" +
             json{{"entities", entities}, {"suggestions", suggestions}}.dump(2);
    }
    case TemplateName::kRetrieveByHypothesis: {
      json entities = json::array();
      for (std::size_t i = 0; i < names.size() && i < 20; ++i) {
        entities.push_back({{"entity_name", names[i]},
                            {"category", "unspecified"},
                            {"description", "Matches the hypothesis: " + query}});
      }
      return json{{"entities", entities}}.dump(2);
    }
    case TemplateName::kAnalyzeImproveChain:
      return "1. **Chain Assessment**\n    - The chain \"" + query +
             "\" is internally consistent.\n"
             "2. **Biological Interpretation**\n"
             "    - Each hypothesis narrows the entities reached by one hop.\n"
             "3. **Suggested Improvements**\n"
             "    - Consider replacing vague relations such as \"related to\" with "
             "specific KG relations.\n";
    case TemplateName::kAnalysePath: {
      json hops = json::array();
      std::istringstream in(Binding(request, "selected_interpretable_path"));
      std::string line;
      while (std::getline(in, line)) {
        if (detail::Trim(line).empty()) continue;
        hops.push_back({{"subject", std::string(detail::Trim(line))},
                        {"relationship", ""},
                        {"object", ""},
                        {"explanation", "mock explanation"}});
      }
      return json{{"hops", hops},
                  {"hypothesis_chain", "[source] -> [intermediate] -> [process] -> [target]"},
                  {"suggestions", json::array({"Which processes connect these genes?"})}}
          .dump(2);
    }
    case TemplateName::kGeneralResponse:
      return "Mock response: " + query;
  }
  return {};
}

std::string HttpBackend::Complete(const BackendRequest& request) {
  httplib::Client client(config_.base_url);
  const auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(
      request.timeout - timeout_s);
  client.set_connection_timeout(timeout_s.count(), timeout_us.count());
  client.set_read_timeout(timeout_s.count(), timeout_us.count());
  client.set_write_timeout(timeout_s.count(), timeout_us.count());

  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }
  const json body = {{"model", config_.model},
                     {"messages", json::array({{{"role", "user"},
                                                {"content", request.prompt}}})}};
  const std::string payload = body.dump();

  auto backoff = config_.initial_backoff;
  std::string last_error;
  bool timed_out = false;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto res = client.Post(config_.path, headers, payload, "application/json");
    if (!res) {
      const auto err = res.error();
      timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
      last_error = httplib::to_string(err);
      continue;
    }
    timed_out = false;
    if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::kBackend, "backend returned HTTP " + std::to_string(res->status),
                  res->body);
    }
    try {
      const auto reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kBackend, "malformed chat-completion reply", e.what());
    }
  }
  if (timed_out) throw Error(ErrorCode::kTimeout, "backend timed out", last_error);
  throw Error(ErrorCode::kBackend, "backend unavailable", last_error);
}

GatewaySettings SettingsFromEnvironment() {
  GatewaySettings s;
  const auto env = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? v : "";
  };
  s.http.base_url = env("HYPOCHAIN_LLM_URL");
  s.http.api_key = env("HYPOCHAIN_LLM_KEY");
  s.http.model = env("HYPOCHAIN_LLM_MODEL");
  const auto mock = env("HYPOCHAIN_MOCK_LLM");
  s.mock = s.http.base_url.empty() || (!mock.empty() && mock != "0" && mock != "false");
  if (const auto t = env("HYPOCHAIN_LLM_TIMEOUT_MS"); !t.empty()) {
    s.timeout = std::chrono::milliseconds(std::stoll(t));
  }
  return s;
}

std::shared_ptr<Backend> MakeBackend(const GatewaySettings& settings) {
  if (settings.mock) return std::make_shared<MockBackend>(settings.mock_seed);
  return std::make_shared<HttpBackend>(settings.http);
}

}  // namespace hypochain::llm
