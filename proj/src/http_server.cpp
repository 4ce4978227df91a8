#include <httplib.h>

#include <algorithm>
#include <cctype>

#include "hypochain/api_service.hpp"

namespace hypochain::api {

namespace {

std::string Lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

bool Serve(Service& service, const std::string& host, int port) {
  httplib::Server server;
  const std::string origin = service.options().cors_origin;
  const auto handle = [&service, origin](const httplib::Request& req, httplib::Response& res) {
    Request r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    for (const auto& [k, v] : req.headers) r.headers.emplace(Lower(k), v);
    r.body = req.body;
    const auto out = service.Handle(r);
    res.status = out.status;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Idempotency-Key");
    res.set_content(out.body, out.content_type);
  };
  server.Get(".*", handle);
  server.Post(".*", handle);
  server.Options(".*", handle);
  return server.listen(host, port);
}

}  // namespace hypochain::api
