#include "hypochain/api_service.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <regex>
#include <shared_mutex>
#include <sstream>
#include <thread>

#include "hypochain/chain_engine.hpp"
#include "hypochain/kg_store.hpp"
#include "hypochain/layout_engine.hpp"
#include "hypochain/metrics.hpp"
#include "hypochain/prediction_store.hpp"
#include "hypochain/wire.hpp"
#include "text_util.hpp"

namespace hypochain::api {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class LoadStatus { kUnloaded, kLoading, kReady, kFailed };

std::string_view LoadStatusName(LoadStatus s) {
  switch (s) {
    case LoadStatus::kUnloaded:
      return "unloaded";
    case LoadStatus::kLoading:
      return "loading";
    case LoadStatus::kReady:
      return "ready";
    case LoadStatus::kFailed:
      return "failed";
  }
  return "unloaded";
}

struct DatasetFiles {
  fs::path entities;
  fs::path triplets;
  std::optional<fs::path> predictions;
  std::optional<fs::path> embedding;

  friend bool operator==(const DatasetFiles&, const DatasetFiles&) = default;
};

struct Dataset {
  std::string id;
  DatasetFiles files;
  mutable std::shared_mutex mu;
  LoadStatus status = LoadStatus::kUnloaded;
  std::string error;
  std::vector<std::string> warnings;
  kg::KnowledgeGraph graph;
  std::optional<predictions::PredictionStore> store;
  std::vector<layout::EmbeddedPoint> embedding;
};

struct Session {
  std::string id;
  std::string dataset_id;
  fs::path log;
  std::mutex mu;
  std::size_t next_seq = 0;
  std::unique_ptr<llm::ChatSession> chat = std::make_unique<llm::ChatSession>();
  std::vector<std::string> chain_order;
  std::map<std::string, chain::HypothesisChain> chains;
  std::map<std::string, chain::ChainMatchReport> reports;
  std::vector<std::string> lasso_order;
  std::map<std::string, std::vector<std::string>> lassos;
  std::optional<std::string> active_chain;
  std::vector<std::string> replay_warnings;
};

const std::regex kIdPattern("[A-Za-z0-9_.-]{1,128}");

void CheckId(const std::string& id, const char* what) {
  if (!std::regex_match(id, kIdPattern)) {
    throw ContractError(std::string("invalid ") + what + " id \"" + id +
                        "\" (letters, digits, _ . - only)");
  }
}

std::vector<std::string> SplitPath(const std::string& path) {
  std::vector<std::string> out;
  for (const auto part : detail::Split(path, '/')) {
    if (!part.empty()) out.emplace_back(part);
  }
  return out;
}

json ParseBody(const Request& r) {
  if (detail::Trim(r.body).empty()) return json::object();
  try {
    auto j = json::parse(r.body);
    if (!j.is_object()) throw ContractError("request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kFormat, "request body is not valid JSON", e.what());
  }
}

std::optional<std::string> QueryParam(const Request& r, const std::string& key) {
  const auto it = r.query.find(key);
  if (it == r.query.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

long ParseLong(const std::string& text, const std::string& key) {
  try {
    std::size_t used = 0;
    const long v = std::stol(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ContractError("parameter \"" + key + "\" must be an integer");
  }
}

bool ParseBool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ContractError("parameter \"" + key + "\" must be true or false");
}

template <typename T>
T BodyValue(const json& body, const char* key, T fallback) {
  if (!body.contains(key) || body[key].is_null()) return fallback;
  try {
    return body[key].get<T>();
  } catch (const json::exception&) {
    throw ContractError(std::string("field \"") + key + "\" has the wrong type");
  }
}

fs::path Resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

DatasetFiles FilesFromJson(const json& j, const fs::path& base) {
  DatasetFiles f;
  f.entities = Resolve(base, wire::StringField(j, "entities"));
  f.triplets = Resolve(base, wire::StringField(j, "triplets"));
  if (auto p = wire::OptionalString(j, "predictions")) f.predictions = Resolve(base, *p);
  if (auto p = wire::OptionalString(j, "embedding")) f.embedding = Resolve(base, *p);
  return f;
}

std::string PathText(const predictions::InterpretativePath& path, const kg::KnowledgeGraph& g) {
  const auto name = [&](const std::string& id) {
    const auto* e = g.find(id);
    return e ? e->name : id;
  };
  std::string out = name(path.origin);
  for (const auto& h : path.hops) {
    char weight[32];
    std::snprintf(weight, sizeof weight, "%.3f", h.weight);
    out += " -[" + h.relation + " (" + weight + ")]-> " + name(h.entity);
  }
  return out;
}

json ParsedJson(const llm::ParsedPayload& p) {
  json recommended = json::array();
  for (const auto& r : p.recommended) {
    recommended.push_back(
        {{"entity_name", r.entity_name}, {"category", r.category}, {"reason", r.reason}});
  }
  json retrieved = json::array();
  for (const auto& r : p.retrieved) {
    retrieved.push_back({{"entity_name", r.entity_name},
                         {"category", r.category},
                         {"description", r.description}});
  }
  json sections = nullptr;
  if (p.sections) {
    sections = {{"chain_assessment", p.sections->chain_assessment},
                {"biological_interpretation", p.sections->biological_interpretation},
                {"suggested_improvements", p.sections->suggested_improvements}};
  }
  return {{"template", llm::TemplateId(p.template_name)},
          {"recommended", std::move(recommended)},
          {"retrieved", std::move(retrieved)},
          {"sections", std::move(sections)},
          {"suggestions", p.suggestions},
          {"warnings", p.warnings}};
}

Response JsonResponse(int status, const json& body) {
  return Response{status, body.dump(), "application/json"};
}

}  // namespace

int HttpStatus(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFormat:
    case ErrorCode::kContract:
      return 422;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kNotReady:
      return 409;
    case ErrorCode::kBackend:
      return 502;
    case ErrorCode::kTimeout:
      return 504;
  }
  return 500;
}

void WriteDescriptor(const fs::path& dataset_dir, const json& descriptor) {
  fs::create_directories(dataset_dir);
  std::ofstream out(dataset_dir / "dataset.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kBackend, "cannot write " + (dataset_dir / "dataset.json").string());
  out << descriptor.dump(2) << "\n";
}

struct Service::Impl {
  using Handler = std::function<Response(Impl&, const Request&, const std::vector<std::string>&)>;

  ServiceOptions options;
  llm::Gateway gateway;
  std::atomic<std::uint64_t> revision{0};

  std::mutex registry_mu;
  std::map<std::string, std::shared_ptr<Dataset>> datasets;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::vector<std::thread> loaders;
  std::condition_variable loads_cv;
  std::size_t loads_in_flight = 0;

  std::mutex idem_mu;
  std::map<std::string, std::pair<std::string, Response>> idem;
  std::deque<std::string> idem_order;

  Impl(ServiceOptions o, std::shared_ptr<llm::Backend> backend, std::chrono::milliseconds t)
      : options(std::move(o)), gateway(std::move(backend), t) {}

  ~Impl() {
    for (auto& t : loaders) {
      if (t.joinable()) t.join();
    }
  }

  // -------------------------------------------------------------------------
  // Envelope

  Response Ok(json payload, const std::optional<std::string>& dataset_id = std::nullopt,
              int status = 200) {
    payload["revision"] = revision.load();
    if (dataset_id) payload["dataset_id"] = *dataset_id;
    return JsonResponse(status, payload);
  }

  Response Mutated(json payload, const std::optional<std::string>& dataset_id = std::nullopt,
                   int status = 200) {
    ++revision;
    return Ok(std::move(payload), dataset_id, status);
  }

  Response Fail(const Error& e) {
    return JsonResponse(HttpStatus(e.code()), {{"code", ErrorCodeName(e.code())},
                                               {"message", e.what()},
                                               {"detail", e.detail()},
                                               {"revision", revision.load()}});
  }

  // -------------------------------------------------------------------------
  // Datasets

  fs::path DatasetsDir() const { return options.data_dir / "datasets"; }
  fs::path SessionsDir() const { return options.data_dir / "sessions"; }

  void DiscoverDatasets() {
    std::error_code ec;
    if (!fs::is_directory(DatasetsDir(), ec)) return;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(DatasetsDir(), ec)) {
      if (fs::exists(entry.path() / "dataset.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
      std::ifstream in(dir / "dataset.json", std::ios::binary);
      try {
        const auto j = json::parse(in);
        auto ds = std::make_shared<Dataset>();
        ds->id = wire::StringField(j, "id");
        ds->files = FilesFromJson(j, dir);
        datasets[ds->id] = std::move(ds);
      } catch (const std::exception&) {
        // An unreadable descriptor just leaves the dataset unregistered.
      }
    }
  }

  std::shared_ptr<Dataset> FindDataset(const std::string& id) {
    std::lock_guard lock(registry_mu);
    const auto it = datasets.find(id);
    if (it == datasets.end()) throw NotFoundError("unknown dataset \"" + id + "\"");
    return it->second;
  }

  void StartLoad(const std::shared_ptr<Dataset>& ds) {
    {
      std::unique_lock lock(ds->mu);
      if (ds->status == LoadStatus::kLoading || ds->status == LoadStatus::kReady) return;
      ds->status = LoadStatus::kLoading;
      ds->error.clear();
    }
    ++revision;
    std::lock_guard lock(registry_mu);
    ++loads_in_flight;
    loaders.emplace_back([this, ds] { LoadDataset(ds); });
  }

  void LoadDataset(const std::shared_ptr<Dataset>& ds) {
    std::ostringstream diag;
    try {
      auto graph = kg::KnowledgeGraph::Load(ds->files.entities, ds->files.triplets, &diag);
      std::optional<predictions::PredictionStore> store;
      if (ds->files.predictions) {
        store = predictions::PredictionStore::Load(*ds->files.predictions, graph, ds->id, &diag);
      }
      std::vector<layout::EmbeddedPoint> embedding;
      if (ds->files.embedding) embedding = layout::LoadEmbedding(*ds->files.embedding, &graph);
      std::unique_lock lock(ds->mu);
      ds->graph = std::move(graph);
      ds->store = std::move(store);
      ds->embedding = std::move(embedding);
      ds->status = LoadStatus::kReady;
    } catch (const std::exception& e) {
      std::unique_lock lock(ds->mu);
      ds->status = LoadStatus::kFailed;
      ds->error = e.what();
    }
    {
      std::unique_lock lock(ds->mu);
      ds->warnings.clear();
      std::istringstream lines(diag.str());
      for (std::string line; std::getline(lines, line);) {
        if (!line.empty()) ds->warnings.push_back(line);
      }
    }
    ++revision;
    std::lock_guard lock(registry_mu);
    --loads_in_flight;
    loads_cv.notify_all();
  }

  json Descriptor(const Dataset& ds) {
    std::shared_lock lock(ds.mu);
    json files = {{"entities", ds.files.entities.string()},
                  {"triplets", ds.files.triplets.string()},
                  {"predictions", ds.files.predictions ? json(ds.files.predictions->string())
                                                       : json(nullptr)},
                  {"embedding", ds.files.embedding ? json(ds.files.embedding->string())
                                                   : json(nullptr)}};
    json j = {{"id", ds.id},
              {"status", LoadStatusName(ds.status)},
              {"files", std::move(files)},
              {"warnings", ds.warnings}};
    if (ds.status == LoadStatus::kReady) {
      const auto c = ds.graph.counts();
      j["counts"] = {{"entities", c.entities},
                     {"triplets", c.triplets},
                     {"relations", c.relations},
                     {"duplicates_skipped", c.duplicates_skipped},
                     {"predictions", ds.store ? ds.store->size() : 0},
                     {"embedding_points", ds.embedding.size()}};
    }
    if (ds.status == LoadStatus::kFailed) j["error"] = ds.error;
    return j;
  }

  /// Shared lock on a ready dataset.
  std::shared_lock<std::shared_mutex> ReadLock(const Dataset& ds) {
    std::shared_lock lock(ds.mu);
    RequireReady(ds);
    return lock;
  }

  std::unique_lock<std::shared_mutex> WriteLock(Dataset& ds) {
    std::unique_lock lock(ds.mu);
    RequireReady(ds);
    return lock;
  }

  static void RequireReady(const Dataset& ds) {
    if (ds.status != LoadStatus::kReady) {
      throw Error(ErrorCode::kNotReady, "dataset \"" + ds.id + "\" is " +
                                            std::string(LoadStatusName(ds.status)),
                  ds.error);
    }
  }

  static const predictions::PredictionStore& Store(const Dataset& ds) {
    if (!ds.store) throw ContractError("dataset \"" + ds.id + "\" has no predictions");
    return *ds.store;
  }

  std::string DatasetIdFor(const Request& r, const json& body) {
    if (auto id = wire::OptionalString(body, "dataset_id")) return *id;
    if (auto id = QueryParam(r, "dataset_id")) return *id;
    if (auto sid = wire::OptionalString(body, "session_id")) return GetSession(*sid)->dataset_id;
    if (auto sid = QueryParam(r, "session_id")) return GetSession(*sid)->dataset_id;
    std::lock_guard lock(registry_mu);
    if (datasets.size() == 1) return datasets.begin()->first;
    throw ContractError("dataset_id is required");
  }

  // -------------------------------------------------------------------------
  // Sessions

  void AppendEvent(Session& s, json event) {
    event["seq"] = s.next_seq++;
    fs::create_directories(s.log.parent_path());
    std::ofstream out(s.log, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::kBackend, "cannot append to " + s.log.string());
    out << event.dump() << "\n";
  }

  /// State transition shared by live requests and replay. Chat exchanges are
  /// only applied on replay; live chat appends through ChatSession.
  void ApplyEvent(Session& s, const json& event, bool replay,
                  std::vector<llm::Exchange>* replay_chat) {
    const auto type = wire::StringField(event, "type");
    if (type == "created") {
      s.dataset_id = wire::StringField(event, "dataset_id");
    } else if (type == "chain") {
      auto c = wire::ChainFromJson(wire::Field(event, "chain"));
      if (!s.chains.count(c.id)) s.chain_order.push_back(c.id);
      s.reports.erase(c.id);
      s.active_chain = c.id;
      const auto id = c.id;
      s.chains.insert_or_assign(id, std::move(c));
    } else if (type == "active") {
      s.active_chain = wire::StringField(event, "chain_id");
    } else if (type == "lasso") {
      const auto id = wire::StringField(event, "selection_id");
      if (!s.lassos.count(id)) s.lasso_order.push_back(id);
      s.lassos[id] = event.at("selected").get<std::vector<std::string>>();
    } else if (type == "retrieved") {
      const auto chain_id = wire::StringField(event, "chain_id");
      auto& c = s.chains.at(chain_id);
      auto ds = FindDataset(s.dataset_id);
      auto lock = WriteLock(*ds);
      auto report = chain::MatchChain(c, Store(*ds), ds->graph);
      ds->store->mark_alignment(report, event.value("require_all", true));
      c.status = chain::ChainStatus::kRetrieved;
      if (replay && event.contains("exclusive")) {
        const auto logged = event["exclusive"].get<std::vector<std::size_t>>();
        if (logged != std::vector<std::size_t>(report.exclusive.begin(), report.exclusive.end())) {
          s.replay_warnings.push_back("retrieval of " + chain_id +
                                      " no longer reproduces the logged counts");
        }
      }
      s.reports.insert_or_assign(chain_id, std::move(report));
    } else if (type == "chat") {
      if (replay && replay_chat) replay_chat->push_back(llm::ExchangeFromJson(event.at("exchange")));
    } else {
      throw Error(ErrorCode::kFormat, "unknown session event \"" + type + "\"");
    }
  }

  void Commit(Session& s, json event) {
    ApplyEvent(s, event, false, nullptr);
    AppendEvent(s, std::move(event));
  }

  std::shared_ptr<Session> ReplaySession(const std::string& id) {
    const auto log = SessionsDir() / (id + ".jsonl");
    std::ifstream in(log, std::ios::binary);
    if (!in) throw NotFoundError("unknown session \"" + id + "\"");
    auto s = std::make_shared<Session>();
    s->id = id;
    s->log = log;
    std::vector<llm::Exchange> chat;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::Trim(line).empty()) continue;
      json event;
      try {
        event = json::parse(line);
      } catch (const json::parse_error& e) {
        throw FormatError(log.string(), line_no, e.what());
      }
      ApplyEvent(*s, event, true, &chat);
      s->next_seq = event.value("seq", s->next_seq) + 1;
    }
    s->chat = std::make_unique<llm::ChatSession>(std::move(chat));
    return s;
  }

  std::shared_ptr<Session> GetSession(const std::string& id) {
    CheckId(id, "session");
    {
      std::lock_guard lock(registry_mu);
      const auto it = sessions.find(id);
      if (it != sessions.end()) return it->second;
    }
    auto s = ReplaySession(id);
    std::lock_guard lock(registry_mu);
    return sessions.emplace(id, std::move(s)).first->second;
  }

  std::string NextSessionId() {
    std::size_t next = 1;
    const auto bump = [&](const std::string& id) {
      if (id.rfind("session-", 0) != 0) return;
      try {
        next = std::max<std::size_t>(next, std::stoul(id.substr(8)) + 1);
      } catch (const std::exception&) {
      }
    };
    for (const auto& [id, s] : sessions) bump(id);
    std::error_code ec;
    if (fs::is_directory(SessionsDir(), ec)) {
      for (const auto& e : fs::directory_iterator(SessionsDir(), ec)) {
        if (e.path().extension() == ".jsonl") bump(e.path().stem().string());
      }
    }
    return "session-" + std::to_string(next);
  }

  json SessionJson(Session& s) {
    json chains = json::array();
    for (const auto& id : s.chain_order) chains.push_back(wire::ChainJson(s.chains.at(id)));
    json reports = json::object();
    for (const auto& [id, r] : s.reports) reports[id] = wire::ReportJson(r, false);
    json lassos = json::array();
    for (const auto& id : s.lasso_order) {
      lassos.push_back({{"selection_id", id}, {"selected", s.lassos.at(id)}});
    }
    json history = json::array();
    for (const auto& e : s.chat->history()) history.push_back(llm::ToJson(e));
    return {{"session_id", s.id},
            {"chains", std::move(chains)},
            {"active_chain", s.active_chain ? json(*s.active_chain) : json(nullptr)},
            {"reports", std::move(reports)},
            {"lassos", std::move(lassos)},
            {"history", std::move(history)},
            {"warnings", s.replay_warnings}};
  }

  chain::HypothesisChain& ChainOf(Session& s, const std::string& chain_id) {
    const auto it = s.chains.find(chain_id);
    if (it == s.chains.end()) {
      throw NotFoundError("unknown chain \"" + chain_id + "\" in session " + s.id);
    }
    return it->second;
  }

  std::string SessionIdFor(const Request& r, const json& body) {
    if (auto id = wire::OptionalString(body, "session_id")) return *id;
    if (auto id = QueryParam(r, "session_id")) return *id;
    throw ContractError("session_id is required");
  }

  // -------------------------------------------------------------------------
  // Endpoints

  Response ListDatasets(const Request&, const std::vector<std::string>&) {
    std::vector<std::shared_ptr<Dataset>> all;
    {
      std::lock_guard lock(registry_mu);
      for (const auto& [id, ds] : datasets) all.push_back(ds);
    }
    json list = json::array();
    for (const auto& ds : all) list.push_back(Descriptor(*ds));
    return Ok({{"datasets", std::move(list)}});
  }

  Response PostDataset(const Request& r, const std::vector<std::string>&) {
    const auto body = ParseBody(r);
    const auto id = wire::StringField(body, "id");
    CheckId(id, "dataset");
    std::shared_ptr<Dataset> ds;
    bool registered = false;
    if (body.contains("entities") || body.contains("triplets")) {
      auto files = FilesFromJson(body, options.data_dir);
      std::lock_guard lock(registry_mu);
      const auto it = datasets.find(id);
      if (it != datasets.end()) {
        if (!(it->second->files == files)) {
          throw ContractError("dataset \"" + id + "\" is already registered with other files");
        }
        ds = it->second;
      } else {
        ds = std::make_shared<Dataset>();
        ds->id = id;
        ds->files = std::move(files);
        datasets[id] = ds;
        registered = true;
      }
    } else {
      ds = FindDataset(id);
    }
    if (registered) {
      json d = {{"id", id},
                {"entities", fs::absolute(ds->files.entities).string()},
                {"triplets", fs::absolute(ds->files.triplets).string()}};
      if (ds->files.predictions) d["predictions"] = fs::absolute(*ds->files.predictions).string();
      if (ds->files.embedding) d["embedding"] = fs::absolute(*ds->files.embedding).string();
      WriteDescriptor(DatasetsDir() / id, d);
    }
    StartLoad(ds);
    return Mutated(Descriptor(*ds), id, 202);
  }

  Response GetDataset(const Request&, const std::vector<std::string>& parts) {
    auto ds = FindDataset(parts[1]);
    return Ok(Descriptor(*ds), ds->id);
  }

  Response Search(const Request& r, const std::vector<std::string>&) {
    const json none = json::object();
    const auto dataset_id = DatasetIdFor(r, none);
    auto ds = FindDataset(dataset_id);
    auto lock = ReadLock(*ds);
    const auto& store = Store(*ds);
    const auto n = static_cast<std::size_t>(
        std::max(0L, ParseLong(QueryParam(r, "n").value_or("50"), "n")));
    const auto head = QueryParam(r, "head");
    const auto category = QueryParam(r, "category");

    json rows = json::array();
    std::size_t total = 0;
    if (head && !category) {
      const auto top = store.top_tails(*head, n);
      total = top.size();
      for (const auto* rec : top) rows.push_back(wire::RecordJson(*rec, store.starred(rec->id)));
    } else {
      predictions::PredictionFilter f;
      f.head = head;
      f.category = category;
      const auto ranked = store.filter_and_rerank(f, ds->graph);
      total = ranked.size();
      for (std::size_t i = 0; i < ranked.size() && i < n; ++i) {
        rows.push_back(wire::RecordJson(*ranked[i].record, store.starred(ranked[i].record->id)));
      }
    }
    json heads = json::array();
    for (const auto& h : store.heads()) heads.push_back(h);
    return Ok({{"rows", std::move(rows)}, {"total", total}, {"heads", std::move(heads)}},
              dataset_id);
  }

  Response FilterPredictions(const Request& r, const std::vector<std::string>&) {
    const auto body = ParseBody(r);
    const auto dataset_id = DatasetIdFor(r, body);
    const auto filter = wire::FilterFromJson(body.value("filter", json::object()));
    const auto limit = BodyValue<long>(body, "limit", -1);
    const auto offset = std::max(0L, BodyValue<long>(body, "offset", 0));
    auto ds = FindDataset(dataset_id);
    auto lock = ReadLock(*ds);
    const auto& store = Store(*ds);
    const auto ranked = store.filter_and_rerank(filter, ds->graph);

    std::vector<const predictions::PredictionRecord*> order;
    std::map<predictions::RecordId, int> display;
    for (const auto& rr : ranked) {
      order.push_back(rr.record);
      display[rr.record->id] = rr.display_rank;
    }
    if (body.contains("sort") && !body["sort"].is_null()) {
      order = predictions::SortBy(order, wire::SortKeyFromJson(body["sort"]));
    }
    json rows = json::array();
    for (std::size_t i = static_cast<std::size_t>(offset); i < order.size(); ++i) {
      if (limit >= 0 && rows.size() >= static_cast<std::size_t>(limit)) break;
      const auto* rec = order[i];
      rows.push_back(wire::RecordJson(*rec, store.starred(rec->id), display[rec->id]));
    }
    return Ok({{"total", ranked.size()}, {"rows", std::move(rows)}}, dataset_id);
  }

  Response Embedding(const Request&, const std::vector<std::string>& parts) {
    auto ds = FindDataset(parts[1]);
    auto lock = ReadLock(*ds);
    json points = json::array();
    for (const auto& p : ds->embedding) {
      const auto& e = ds->graph.entity(p.entity_id);
      points.push_back({{"entity_id", p.entity_id},
                        {"name", e.name},
                        {"category", e.category},
                        {"x", p.x},
                        {"y", p.y}});
    }
    return Ok({{"points", std::move(points)}}, ds->id);
  }

  Response Lasso(const Request& r, const std::vector<std::string>&) {
    const auto body = ParseBody(r);
    const auto polygon = wire::PolygonFromJson(wire::Field(body, "polygon"));
    const auto session_id = wire::OptionalString(body, "session_id");
    const auto dataset_id = DatasetIdFor(r, body);
    auto ds = FindDataset(dataset_id);
    std::vector<std::string> selected;
    {
      auto lock = ReadLock(*ds);
      selected = layout::LassoSelect(ds->embedding, polygon);
    }
    if (!session_id) return Ok({{"selected", selected}}, dataset_id);

    auto s = GetSession(*session_id);
    std::lock_guard lock(s->mu);
    const auto selection_id = "lasso-" + std::to_string(s->lasso_order.size() + 1);
    Commit(*s, {{"type", "lasso"},
                {"selection_id", selection_id},
                {"polygon", wire::PolygonJson(polygon)},
                {"selected", selected}});
    return Mutated({{"selected", selected}, {"selection_id", selection_id}, {"session_id", s->id}},
                   dataset_id);
  }

  Response CreateSession(const Request& r, const std::vector<std::string>&) {
    const auto body = ParseBody(r);
    const auto dataset_id = wire::StringField(body, "dataset_id");
    FindDataset(dataset_id);
    auto s = std::make_shared<Session>();
    {
      std::lock_guard lock(registry_mu);
      s->id = NextSessionId();
      s->log = SessionsDir() / (s->id + ".jsonl");
      sessions[s->id] = s;
    }
    std::lock_guard lock(s->mu);
    Commit(*s, {{"type", "created"}, {"dataset_id", dataset_id}});
    return Mutated(SessionJson(*s), dataset_id, 201);
  }

  Response ShowSession(const Request&, const std::vector<std::string>& parts) {
    auto s = GetSession(parts[1]);
    std::lock_guard lock(s->mu);
    return Ok(SessionJson(*s), s->dataset_id);
  }

  Response CreateChainEndpoint(const Request& r, const std::vector<std::string>&) {
    const auto body = ParseBody(r);
    auto s = GetSession(SessionIdFor(r, body));
    std::lock_guard lock(s->mu);
    auto id = wire::OptionalString(body, "id")
                  .value_or("chain-" + std::to_string(s->chain_order.size() + 1));
    CheckId(id, "chain");
    if (s->chains.count(id)) throw ContractError("chain \"" + id + "\" already exists");
    auto c = chain::CreateChain(id, wire::PositionsFromJson(wire::Field(body, "positions")),
                                wire::OptionalString(body, "head"));
    if (c.head) {
      auto ds = FindDataset(s->dataset_id);
      auto dlock = ReadLock(*ds);
      if (!ds->graph.contains(*c.head)) {
        throw ContractError("head \"" + *c.head + "\" is not an entity of the graph");
      }
    }
    const auto out = wire::ChainJson(c);
    Commit(*s, {{"type", "chain"}, {"chain", out}});
    return Mutated({{"chain", out}, {"session_id", s->id}}, s->dataset_id, 201);
  }

  Response ShowChain(const Request& r, const std::vector<std::string>& parts) {
    auto s = GetSession(SessionIdFor(r, json::object()));
    std::lock_guard lock(s->mu);
    return Ok({{"chain", wire::ChainJson(ChainOf(*s, parts[1]))}, {"session_id", s->id}},
              s->dataset_id);
  }

  Response Preview(const Request& r, const std::vector<std::string>& parts) {
    const auto body = ParseBody(r);
    auto s = GetSession(SessionIdFor(r, body));
    std::lock_guard lock(s->mu);
    auto c = ChainOf(*s, parts[1]);
    const int k = BodyValue<int>(body, "k", chain::kDefaultPreviewCount);
    std::vector<int> positions = BodyValue<std::vector<int>>(body, "positions", {1, 2, 3});
    auto ds = FindDataset(s->dataset_id);
    json results = json::array();
    {
      auto dlock = ReadLock(*ds);
      for (const int p : positions) {
        if (p < 1 || p > static_cast<int>(chain::kPositions)) {
          throw ContractError("position must be 1..3, got " + std::to_string(p));
        }
        auto& node = c.positions[static_cast<std::size_t>(p - 1)];
        auto preview = chain::PreviewEntities(node, k, gateway, ds->graph);
        node.entities = std::move(preview.matches);
        results.push_back({{"position", p},
                           {"dropped_unknown", preview.dropped_unknown},
                           {"warnings", preview.warnings}});
      }
    }
    c.status = chain::ChainStatus::kDraft;
    const auto out = wire::ChainJson(c);
    Commit(*s, {{"type", "chain"}, {"chain", out}});
    return Mutated({{"chain", out}, {"previews", std::move(results)}, {"session_id", s->id}},
                   s->dataset_id);
  }

  Response EditChain(const Request& r, const std::vector<std::string>& parts) {
    const auto body = ParseBody(r);
    auto s = GetSession(SessionIdFor(r, body));
    std::lock_guard lock(s->mu);
    auto c = ChainOf(*s, parts[1]);
    if (body.contains("positions")) {
      auto fresh = chain::CreateChain(c.id, wire::PositionsFromJson(body["positions"]), c.head);
      for (std::size_t i = 0; i < chain::kPositions; ++i) {
        c.positions[i].description = fresh.positions[i].description;
        c.positions[i].relation = fresh.positions[i].relation;
        c.positions[i].relation_labels = fresh.positions[i].relation_labels;
      }
    }
    if (body.contains("entities")) {
      auto ds = FindDataset(s->dataset_id);
      auto dlock = ReadLock(*ds);
      for (const auto& edit : body["entities"]) {
        const int p = edit.at("position").get<int>();
        if (p < 1 || p > static_cast<int>(chain::kPositions)) {
          throw ContractError("position must be 1..3, got " + std::to_string(p));
        }
        std::vector<chain::EntityMatch> matches;
        for (const auto& id : edit.at("entity_ids").get<std::vector<std::string>>()) {
          const auto* e = ds->graph.find(id);
          if (!e) throw ContractError("entity \"" + id + "\" is not in the graph");
          matches.push_back({e->id, e->name, e->category, "manual",
                             static_cast<int>(matches.size() + 1)});
        }
        c.positions[static_cast<std::size_t>(p - 1)].entities = std::move(matches);
      }
    }
    c.status = chain::ChainStatus::kDraft;
    const auto out = wire::ChainJson(c);
    Commit(*s, {{"type", "chain"}, {"chain", out}});
    return Mutated({{"chain", out}, {"session_id", s->id}}, s->dataset_id);
  }

  Response Analyze(const Request& r, const std::vector<std::string>& parts) {
    const auto body = ParseBody(r);
    auto s = GetSession(SessionIdFor(r, body));
    std::lock_guard lock(s->mu);
    auto c = ChainOf(*s, parts[1]);
    chain::AnalyzeChain(c, gateway);
    const auto out = wire::ChainJson(c);
    Commit(*s, {{"type", "chain"}, {"chain", out}});
    return Mutated({{"chain", out}, {"session_id", s->id}}, s->dataset_id);
  }

  Response Retrieve(const Request& r, const std::vector<std::string>& parts) {
    const auto body = ParseBody(r);
    auto s = GetSession(SessionIdFor(r, body));
    std::lock_guard lock(s->mu);
    const auto& c = ChainOf(*s, parts[1]);
    const bool require_all = BodyValue<bool>(body, "require_all", true);
    std::array<std::size_t, 8> exclusive{};
    {
      // Validate before logging anything.
      auto ds = FindDataset(s->dataset_id);
      auto dlock = ReadLock(*ds);
      exclusive = chain::MatchChain(c, Store(*ds), ds->graph).exclusive;
    }
    Commit(*s, {{"type", "retrieved"},
                {"chain_id", c.id},
                {"require_all", require_all},
                {"exclusive", exclusive}});
    const auto& report = s->reports.at(c.id);
    auto j = wire::ReportJson(report, BodyValue<bool>(body, "include_masks", false));
    {
      auto ds = FindDataset(s->dataset_id);
      auto dlock = ReadLock(*ds);
      j["starred"] = ds->store->starred_ids().size();
    }
    j["session_id"] = s->id;
    j["chain"] = wire::ChainJson(c);
    return Mutated(std::move(j), s->dataset_id);
  }

  Response Upset(const Request& r, const std::vector<std::string>& parts) {
    auto s = GetSession(SessionIdFor(r, json::object()));
    std::lock_guard lock(s->mu);
    ChainOf(*s, parts[1]);
    const auto it = s->reports.find(parts[1]);
    if (it == s->reports.end()) {
      throw ContractError("chain \"" + parts[1] + "\" has not been retrieved");
    }
    const auto& report = it->second;
    auto j = wire::ReportJson(report, false);
    j["session_id"] = s->id;
    if (const auto subset = QueryParam(r, "subset")) {
      const auto mask = chain::ParseSubset(*subset);
      const bool exclusive = ParseBool(QueryParam(r, "exclusive").value_or("true"), "exclusive");
      const auto limit = ParseLong(QueryParam(r, "limit").value_or("50"), "limit");
      const auto ids = chain::UpsetSlice(report, mask, exclusive);
      auto ds = FindDataset(s->dataset_id);
      auto dlock = ReadLock(*ds);
      const auto& store = Store(*ds);
      json records = json::array();
      for (std::size_t i = 0; i < ids.size() && static_cast<long>(i) < limit; ++i) {
        records.push_back(wire::RecordJson(store.record(ids[i]), store.starred(ids[i])));
      }
      j["slice"] = {{"subset", chain::MaskString(mask)},
                    {"exclusive", exclusive},
                    {"count", ids.size()},
                    {"record_ids", ids},
                    {"records", std::move(records)}};
    }
    return Ok(std::move(j), s->dataset_id);
  }

  Response Layout(const Request& r, const std::vector<std::string>&) {
    const auto body = ParseBody(r);
    const auto dataset_id = DatasetIdFor(r, body);
    std::optional<chain::HypothesisChain> c;
    if (const auto chain_id = wire::OptionalString(body, "chain_id")) {
      auto s = GetSession(SessionIdFor(r, body));
      std::lock_guard lock(s->mu);
      c = ChainOf(*s, *chain_id);
    }
    layout::LayerOptions layer_options;
    layer_options.split_one_hop = BodyValue<bool>(body, "split_one_hop", false);
    layout::StackOptions stack;
    stack.seed = BodyValue<std::uint64_t>(body, "seed", 0);
    stack.width = BodyValue<double>(body, "width", stack.width);
    stack.layer_height = BodyValue<double>(body, "layer_height", stack.layer_height);
    stack.gutter = BodyValue<double>(body, "gutter", stack.gutter);

    auto ds = FindDataset(dataset_id);
    auto lock = ReadLock(*ds);
    predictions::InterpretativePath path;
    if (body.contains("record_id")) {
      path = Store(*ds).record(body["record_id"].get<predictions::RecordId>()).path;
    } else {
      const auto& p = wire::Field(body, "path");
      path.origin = wire::StringField(p, "origin");
      const auto& hops = wire::Field(p, "hops");
      if (!hops.is_array() || hops.size() != predictions::kPathHops) {
        throw ContractError("path needs exactly 3 hops");
      }
      for (std::size_t i = 0; i < predictions::kPathHops; ++i) {
        path.hops[i].relation = wire::OptionalString(hops[i], "relation").value_or("");
        path.hops[i].entity = wire::StringField(hops[i], "entity");
      }
    }
    const auto layers = layout::BuildLayers(path, c ? &*c : nullptr, ds->graph, layer_options);
    const auto result = layout::ComputeStack(layers, ds->graph, stack);
    auto j = wire::StackJson(result);
    json specs = json::array();
    for (const auto& l : layers) {
      specs.push_back({{"kind", layout::LayerKindName(l.kind)},
                       {"position", l.position},
                       {"members", l.members},
                       {"weights", l.weights},
                       {"empty", l.empty}});
    }
    j["layer_specs"] = std::move(specs);
    return Ok(std::move(j), dataset_id);
  }

  Response Chat(const Request& r, const std::vector<std::string>&) {
    const auto body = ParseBody(r);
    auto s = GetSession(SessionIdFor(r, body));
    std::lock_guard lock(s->mu);
    llm::GatewayRequest request;
    request.message = wire::StringField(body, "message");
    request.mode = llm::ParseMode(BodyValue<std::string>(body, "mode", "llm"));
    const auto default_template = request.mode == llm::Mode::kRag ? "recommend_entities"
                                                                   : "general_response";
    request.template_name =
        llm::ParseTemplateName(BodyValue<std::string>(body, "template", default_template));
    request.bindings = BodyValue<llm::Bindings>(body, "bindings", {});
    if (body.contains("timeout_ms")) {
      request.timeout = std::chrono::milliseconds(body["timeout_ms"].get<long>());
    }

    auto ds = FindDataset(s->dataset_id);
    {
      auto dlock = ReadLock(*ds);
      if (request.mode == llm::Mode::kRag) {
        request.kg_context = llm::AssembleKgContext(request.message, ds->graph, 1, 200).text;
        request.vector_context = llm::AssembleVectorContext(request.message, ds->graph);
      }
      if (request.template_name == llm::TemplateName::kAnalysePath) {
        const auto id = BodyValue<long>(body, "record_id", -1);
        if (id < 0) throw ContractError("analyse_path needs a record_id");
        const auto& rec = Store(*ds).record(static_cast<predictions::RecordId>(id));
        request.bindings["selected_interpretable_path"] = PathText(rec.path, ds->graph);
        if (s->active_chain) {
          request.bindings["hypo_chain_format"] =
              chain::DescribeChain(s->chains.at(*s->active_chain));
        }
      }
    }

    try {
      const auto response = s->chat->Chat(gateway, request);
      const auto exchange = s->chat->history().back();
      AppendEvent(*s, {{"type", "chat"}, {"exchange", llm::ToJson(exchange)}});
      return Mutated({{"exchange", llm::ToJson(exchange)},
                      {"parsed", ParsedJson(response.parsed)},
                      {"backend", response.backend_id},
                      {"latency_ms", response.latency.count()},
                      {"session_id", s->id}},
                     s->dataset_id);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kTimeout || e.code() == ErrorCode::kBackend) {
        AppendEvent(*s, {{"type", "chat"}, {"exchange", llm::ToJson(s->chat->history().back())}});
        ++revision;
      }
      throw;
    }
  }

  Response AppendKg(const Request& r, const std::vector<std::string>&) {
    const auto body = ParseBody(r);
    const auto dataset_id = DatasetIdFor(r, body);
    if (!BodyValue<bool>(body, "confirm", false)) {
      throw ContractError("appending to the knowledge graph requires \"confirm\": true");
    }
    std::vector<kg::Triplet> triplets;
    for (const auto& t : wire::Field(body, "triplets")) triplets.push_back(wire::TripletFromJson(t));
    auto ds = FindDataset(dataset_id);
    auto lock = WriteLock(*ds);
    const auto before = ds->graph.counts();
    const auto c = ds->graph.AppendTriplets(triplets);
    return Mutated({{"appended", c.triplets - before.triplets},
                    {"duplicates_skipped", c.duplicates_skipped - before.duplicates_skipped},
                    {"counts", {{"entities", c.entities}, {"triplets", c.triplets},
                                {"relations", c.relations}}}},
                   dataset_id);
  }

  Response EvaluateMetrics(const Request& r, const std::vector<std::string>&) {
    const auto body = ParseBody(r);
    std::vector<metrics::RankedList> lists;
    if (body.contains("jsonl")) {
      lists = metrics::ParseRankedLists(body["jsonl"].get<std::string>(), "jsonl");
    } else {
      for (const auto& l : wire::Field(body, "lists")) lists.push_back(wire::RankedListFromJson(l));
    }
    std::vector<metrics::Metric> which;
    for (const auto& m : BodyValue<std::vector<std::string>>(
             body, "metrics", {"ndcg", "precision", "recall", "mrr", "mpr", "hit"})) {
      which.push_back(metrics::ParseMetric(m));
    }
    const int n = BodyValue<int>(body, "n", metrics::kDefaultCutoff);
    const int k = BodyValue<int>(body, "k", n);
    const auto report = metrics::Evaluate(lists, which, n, k);
    auto j = wire::MetricReportJson(report);
    j["tsv"] = metrics::ReportTsv(report);
    return Ok(std::move(j));
  }

  Response OpenApi(const Request&, const std::vector<std::string>&) {
    return JsonResponse(200, OpenApiDocument());
  }

  // -------------------------------------------------------------------------
  // Routing

  struct Route {
    std::string method;
    std::vector<std::string> pattern;  // "*" matches one segment
    Handler handler;
    bool idempotent_key;               // honours Idempotency-Key
  };

  std::vector<Route> routes = {
      {"GET", {"openapi.json"}, &Impl::OpenApi, false},
      {"GET", {"datasets"}, &Impl::ListDatasets, false},
      {"POST", {"datasets"}, &Impl::PostDataset, true},
      {"GET", {"datasets", "*"}, &Impl::GetDataset, false},
      {"GET", {"search"}, &Impl::Search, false},
      {"POST", {"predictions", "filter"}, &Impl::FilterPredictions, false},
      {"GET", {"embedding", "*"}, &Impl::Embedding, false},
      {"POST", {"lasso"}, &Impl::Lasso, true},
      {"POST", {"sessions"}, &Impl::CreateSession, true},
      {"GET", {"sessions", "*"}, &Impl::ShowSession, false},
      {"POST", {"chains"}, &Impl::CreateChainEndpoint, true},
      {"GET", {"chains", "*"}, &Impl::ShowChain, false},
      {"POST", {"chains", "*", "preview"}, &Impl::Preview, true},
      {"POST", {"chains", "*", "edit"}, &Impl::EditChain, true},
      {"POST", {"chains", "*", "analyze"}, &Impl::Analyze, true},
      {"POST", {"chains", "*", "retrieve"}, &Impl::Retrieve, true},
      {"GET", {"chains", "*", "upset"}, &Impl::Upset, false},
      {"POST", {"layout"}, &Impl::Layout, false},
      {"POST", {"chat"}, &Impl::Chat, true},
      {"POST", {"kg", "append"}, &Impl::AppendKg, true},
      {"POST", {"metrics", "evaluate"}, &Impl::EvaluateMetrics, false},
  };

  static bool MatchPattern(const std::vector<std::string>& pattern,
                           const std::vector<std::string>& parts) {
    if (pattern.size() != parts.size()) return false;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (pattern[i] != "*" && pattern[i] != parts[i]) return false;
    }
    return true;
  }

  Response Dispatch(const Request& r) {
    if (r.method == "OPTIONS") return Response{204, "", "text/plain"};
    const auto parts = SplitPath(r.path);
    bool path_known = false;
    for (const auto& route : routes) {
      if (!MatchPattern(route.pattern, parts)) continue;
      path_known = true;
      if (route.method != r.method) continue;
      const auto key = r.headers.find("idempotency-key");
      if (!route.idempotent_key || key == r.headers.end() || key->second.empty()) {
        return route.handler(*this, r, parts);
      }
      return WithIdempotency(key->second, r, [&] { return route.handler(*this, r, parts); });
    }
    if (path_known) {
      return JsonResponse(405, {{"code", "method_not_allowed"},
                                {"message", r.method + " not allowed on " + r.path},
                                {"detail", ""},
                                {"revision", revision.load()}});
    }
    throw NotFoundError("no route for " + r.method + " " + r.path);
  }

  template <typename F>
  Response WithIdempotency(const std::string& key, const Request& r, F&& run) {
    const std::string fingerprint = r.method + " " + r.path + "\n" + r.body;
    {
      std::lock_guard lock(idem_mu);
      const auto it = idem.find(key);
      if (it != idem.end()) {
        if (it->second.first != fingerprint) {
          throw ContractError("Idempotency-Key \"" + key + "\" was used for a different request");
        }
        return it->second.second;
      }
    }
    Response response;
    try {
      response = run();
    } catch (const Error& e) {
      response = Fail(e);
    }
    if (response.status < 500) {
      std::lock_guard lock(idem_mu);
      if (idem.emplace(key, std::make_pair(fingerprint, response)).second) {
        idem_order.push_back(key);
        while (idem_order.size() > options.idempotency_cache) {
          idem.erase(idem_order.front());
          idem_order.pop_front();
        }
      }
    }
    return response;
  }
};

Service::Service(ServiceOptions options, std::shared_ptr<llm::Backend> backend,
                 std::chrono::milliseconds llm_timeout)
    : impl_(std::make_unique<Impl>(std::move(options), std::move(backend), llm_timeout)) {
  impl_->DiscoverDatasets();
  if (impl_->options.autoload) {
    std::vector<std::shared_ptr<Dataset>> all;
    for (const auto& [id, ds] : impl_->datasets) all.push_back(ds);
    for (const auto& ds : all) impl_->StartLoad(ds);
  }
}

Service::~Service() = default;

Response Service::Handle(const Request& request) {
  try {
    return impl_->Dispatch(request);
  } catch (const Error& e) {
    return impl_->Fail(e);
  } catch (const nlohmann::json::exception& e) {
    return impl_->Fail(Error(ErrorCode::kContract, "malformed request field", e.what()));
  } catch (const std::out_of_range& e) {
    return impl_->Fail(Error(ErrorCode::kNotFound, "unknown id", e.what()));
  } catch (const std::exception& e) {
    return JsonResponse(500, {{"code", "internal"},
                              {"message", e.what()},
                              {"detail", ""},
                              {"revision", impl_->revision.load()}});
  }
}

void Service::WaitForLoads() {
  std::unique_lock lock(impl_->registry_mu);
  impl_->loads_cv.wait(lock, [&] { return impl_->loads_in_flight == 0; });
}

std::uint64_t Service::revision() const { return impl_->revision.load(); }

const ServiceOptions& Service::options() const { return impl_->options; }

}  // namespace hypochain::api
