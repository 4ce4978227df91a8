#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include <json.hpp>

#include "hypochain/error.hpp"
#include "hypochain/llm_gateway.hpp"

namespace hypochain::api {

struct Request {
  std::string method;  // GET, POST, OPTIONS
  std::string path;    // without query string
  std::map<std::string, std::string> query;
  std::string body;
  std::map<std::string, std::string> headers;  // keys lower-case
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct ServiceOptions {
  std::filesystem::path data_dir;
  /// Start loading every registered dataset on construction.
  bool autoload = false;
  std::string cors_origin = "*";
  std::size_t idempotency_cache = 1024;
};

/// HTTP status for an error code.
int HttpStatus(ErrorCode code);

/// The HTTP facade as a plain request handler. Thread-safe; the socket layer
/// is a thin adapter (Serve) so tests drive Handle() directly.
///
/// Data directory layout:
///   datasets/<id>/dataset.json   descriptor with file paths
///   sessions/<id>.jsonl          append-only session event log
class Service {
 public:
  Service(ServiceOptions options, std::shared_ptr<llm::Backend> backend,
          std::chrono::milliseconds llm_timeout = std::chrono::seconds(60));
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response Handle(const Request& request);

  /// Blocks until no dataset is loading.
  void WaitForLoads();

  std::uint64_t revision() const;
  const ServiceOptions& options() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Endpoint listing served at /openapi.json.
nlohmann::json OpenApiDocument();

/// Blocking HTTP server on host:port. Returns false if the socket cannot be
/// bound.
bool Serve(Service& service, const std::string& host, int port);

/// Writes `dataset.json` for a dataset directory (used by `ingest`).
void WriteDescriptor(const std::filesystem::path& dataset_dir, const nlohmann::json& descriptor);

}  // namespace hypochain::api
