#include "hypochain/api_service.hpp"

namespace hypochain::api {

namespace {

struct Endpoint {
  const char* method;
  const char* path;
  const char* summary;
  std::vector<const char*> fields;  // body fields (POST) or query parameters (GET)
};

const std::vector<Endpoint>& Endpoints() {
  static const std::vector<Endpoint> kEndpoints = {
      {"get", "/openapi.json", "This document.", {}},
      {"get", "/datasets", "Registered datasets with load status.", {}},
      {"post", "/datasets", "Register a dataset and start loading it (202).",
       {"id", "entities", "triplets", "predictions", "embedding"}},
      {"get", "/datasets/{id}", "Dataset descriptor: status, files, counts when ready.", {}},
      {"get", "/search", "Top predicted tails for a head, optionally by tail category.",
       {"dataset_id", "head", "category", "n"}},
      {"post", "/predictions/filter", "Filter and re-rank predictions; display ranks 1..k.",
       {"dataset_id", "filter", "sort", "limit", "offset"}},
      {"get", "/embedding/{dataset}", "Embedding scatter points.", {}},
      {"post", "/lasso", "Entities inside a lasso polygon; recorded when session_id is given.",
       {"dataset_id", "session_id", "polygon"}},
      {"post", "/sessions", "Open a session on a dataset (201).", {"dataset_id"}},
      {"get", "/sessions/{id}", "Session state: chains, reports, lassos, chat history.", {}},
      {"post", "/chains", "Create a draft hypothesis chain (exactly 3 positions).",
       {"session_id", "id", "head", "positions"}},
      {"get", "/chains/{id}", "One chain.", {"session_id"}},
      {"post", "/chains/{id}/preview", "Retrieve KG entities per position.",
       {"session_id", "positions", "k"}},
      {"post", "/chains/{id}/edit", "Replace descriptions or entity sets; back to draft.",
       {"session_id", "positions", "entities"}},
      {"post", "/chains/{id}/analyze", "Critique the chain.", {"session_id"}},
      {"post", "/chains/{id}/retrieve", "Match the chain against every prediction.",
       {"session_id", "require_all", "include_masks"}},
      {"get", "/chains/{id}/upset", "Intersection counts and an optional subset slice.",
       {"session_id", "subset", "exclusive", "limit"}},
      {"post", "/layout", "Stacked treemap layers and cross-layer edges for a path.",
       {"dataset_id", "session_id", "record_id", "path", "chain_id", "split_one_hop", "seed",
        "width", "layer_height", "gutter"}},
      {"post", "/chat", "One chat turn in llm or rag mode.",
       {"session_id", "message", "mode", "template", "bindings", "record_id", "timeout_ms"}},
      {"post", "/kg/append", "Append triplets; requires confirm=true.",
       {"dataset_id", "triplets", "confirm"}},
      {"post", "/metrics/evaluate", "Ranking metrics for uploaded ranked lists.",
       {"lists", "jsonl", "metrics", "n", "k"}},
  };
  return kEndpoints;
}

nlohmann::json ErrorResponses() {
  return {{"404", {{"description", "unknown id"}}},
          {"409", {{"description", "dataset not ready"}}},
          {"422", {{"description", "contract or format violation"}}},
          {"502", {{"description", "backend failure"}}},
          {"504", {{"description", "backend timeout"}}}};
}

}  // namespace

nlohmann::json OpenApiDocument() {
  using nlohmann::json;
  json paths = json::object();
  for (const auto& e : Endpoints()) {
    json op = {{"summary", e.summary}, {"responses", ErrorResponses()}};
    op["responses"]["200"] = {{"description", "JSON body with revision (and dataset_id)"}};
    const std::string method = e.method;
    const std::string path = e.path;
    json params = json::array();
    if (const auto open = path.find('{'); open != std::string::npos) {
      params.push_back({{"name", path.substr(open + 1, path.find('}') - open - 1)},
                        {"in", "path"},
                        {"required", true},
                        {"schema", {{"type", "string"}}}});
    }
    if (method == "get") {
      for (const char* f : e.fields) {
        params.push_back({{"name", f}, {"in", "query"}, {"schema", {{"type", "string"}}}});
      }
    } else if (!e.fields.empty()) {
      json props = json::object();
      for (const char* f : e.fields) props[f] = json::object();
      op["requestBody"] = {
          {"content", {{"application/json", {{"schema", {{"type", "object"},
                                                         {"properties", props}}}}}}}};
    }
    if (!params.empty()) op["parameters"] = std::move(params);
    paths[e.path][e.method] = std::move(op);
  }
  return {{"openapi", "3.0.3"},
          {"info", {{"title", "hypochain service"}, {"version", "1.0.0"}}},
          {"paths", std::move(paths)}};
}

}  // namespace hypochain::api
