#include <gtest/gtest.h>

#include "hypochain/api_service.hpp"
#include "hypochain/chain_engine.hpp"
#include "synthetic.hpp"

using namespace hypochain;
using nlohmann::json;

namespace {

struct Reply {
  int status = 0;
  json body;
  std::string raw;
};

Reply Call(api::Service& svc, const std::string& method, const std::string& path,
           const json& body = nullptr, std::map<std::string, std::string> query = {},
           std::map<std::string, std::string> headers = {}) {
  api::Request r;
  r.method = method;
  r.path = path;
  r.query = std::move(query);
  r.headers = std::move(headers);
  if (!body.is_null()) r.body = body.dump();
  const auto resp = svc.Handle(r);
  Reply out;
  out.status = resp.status;
  out.raw = resp.body;
  if (!resp.body.empty()) out.body = json::parse(resp.body);
  return out;
}

json Strip(json j) {
  j.erase("revision");
  return j;
}

struct Env {
  std::filesystem::path root;
  testsupport::SyntheticDataset d;
  std::unique_ptr<api::Service> svc;

  explicit Env(const std::string& name, testsupport::SyntheticSpec spec = {})
      : root(testsupport::TempDir(name)), d(testsupport::MakeSynthetic(spec)) {
    testsupport::WriteDataset(d, root / "raw");
    svc = Open();
    const auto raw = root / "raw";
    const auto r = Call(*svc, "POST", "/datasets",
                        {{"id", "syn"},
                         {"entities", (raw / "entities.tsv").string()},
                         {"triplets", (raw / "triplets.tsv").string()},
                         {"predictions", (raw / "predictions.jsonl").string()},
                         {"embedding", (raw / "embedding.csv").string()}});
    EXPECT_EQ(r.status, 202) << r.raw;
    svc->WaitForLoads();
  }

  std::unique_ptr<api::Service> Open(bool autoload = false) {
    api::ServiceOptions o;
    o.data_dir = root / "data";
    o.autoload = autoload;
    return std::make_unique<api::Service>(o, std::make_shared<llm::MockBackend>());
  }

  std::string NewSession() {
    const auto r = Call(*svc, "POST", "/sessions", {{"dataset_id", "syn"}});
    EXPECT_EQ(r.status, 201) << r.raw;
    return r.body.at("session_id");
  }
};

json Positions() {
  return json::array({"genes linked to GN12", "drugs linked to DR13", "diseases linked to DS14"});
}

json PlantedEntityEdits(const testsupport::SyntheticDataset& d) {
  json edits = json::array();
  for (std::size_t p = 0; p < 3; ++p) {
    edits.push_back({{"position", p + 1}, {"entity_ids", d.position_sets[p]}});
  }
  return edits;
}

}  // namespace

TEST(ApiService, DatasetLifecycle) {
  Env env("api-datasets");
  const auto list = Call(*env.svc, "GET", "/datasets");
  ASSERT_EQ(list.status, 200);
  ASSERT_EQ(list.body["datasets"].size(), 1u);
  const auto ds = Call(*env.svc, "GET", "/datasets/syn");
  EXPECT_EQ(ds.body["status"], "ready");
  EXPECT_EQ(ds.body["dataset_id"], "syn");
  EXPECT_EQ(ds.body["counts"]["triplets"], 500);
  EXPECT_TRUE(std::filesystem::exists(env.root / "data" / "datasets" / "syn" / "dataset.json"));

  EXPECT_EQ(Call(*env.svc, "GET", "/datasets/nope").status, 404);
  const auto embedding = Call(*env.svc, "GET", "/embedding/syn");
  EXPECT_EQ(embedding.body["points"].size(), 100u);
}

TEST(ApiService, FailedDatasetIsNotReady) {
  Env env("api-failed");
  const auto dir = testsupport::FixtureDir() / "dangling";
  const auto r = Call(*env.svc, "POST", "/datasets",
                      {{"id", "bad"},
                       {"entities", (dir / "entities.tsv").string()},
                       {"triplets", (dir / "triplets.tsv").string()}});
  EXPECT_EQ(r.status, 202);
  env.svc->WaitForLoads();
  const auto ds = Call(*env.svc, "GET", "/datasets/bad");
  EXPECT_EQ(ds.body["status"], "failed");
  EXPECT_NE(ds.body["error"].get<std::string>().find("triplets.tsv:4"), std::string::npos);
  const auto search = Call(*env.svc, "GET", "/search", nullptr, {{"dataset_id", "bad"}});
  EXPECT_EQ(search.status, 409);
  EXPECT_EQ(search.body["code"], "not_ready");
}

TEST(ApiService, SearchReturnsFiftyRows) {
  testsupport::SyntheticSpec spec;
  spec.heads = 1;
  spec.records_per_head = 50;
  spec.planted = 3;
  Env env("api-search", spec);
  const auto r = Call(*env.svc, "GET", "/search", nullptr, {{"head", "E000"}});
  ASSERT_EQ(r.status, 200) << r.raw;
  ASSERT_EQ(r.body["rows"].size(), 50u);
  EXPECT_EQ(r.body["total"], 50);
  EXPECT_EQ(r.body["rows"][0]["rank"], 1);
  EXPECT_EQ(r.body["rows"][49]["rank"], 50);
  EXPECT_EQ(r.body["heads"], json::array({"E000"}));
  const auto few = Call(*env.svc, "GET", "/search", nullptr, {{"head", "E000"}, {"n", "5"}});
  EXPECT_EQ(few.body["rows"].size(), 5u);
  EXPECT_EQ(Call(*env.svc, "GET", "/search", nullptr, {{"head", "E099"}}).status, 404);
}

TEST(ApiService, ContractErrorsAreStructured) {
  Env env("api-errors");
  const auto sid = env.NewSession();
  const auto two = Call(*env.svc, "POST", "/chains",
                        {{"session_id", sid}, {"positions", json::array({"a", "b"})}});
  EXPECT_EQ(two.status, 422);
  EXPECT_EQ(two.body["code"], "contract_violation");
  EXPECT_TRUE(two.body.contains("message"));
  EXPECT_TRUE(two.body.contains("detail"));
  EXPECT_TRUE(two.body.contains("revision"));

  EXPECT_EQ(Call(*env.svc, "POST", "/chains", {{"positions", Positions()}}).status, 422);
  EXPECT_EQ(Call(*env.svc, "GET", "/sessions/session-99").status, 404);
  EXPECT_EQ(Call(*env.svc, "GET", "/chains/chain-9", nullptr, {{"session_id", sid}}).status, 404);
  EXPECT_EQ(Call(*env.svc, "GET", "/no/such/route").status, 404);
  EXPECT_EQ(Call(*env.svc, "POST", "/datasets/syn").status, 405);
  EXPECT_EQ(Call(*env.svc, "OPTIONS", "/chains").status, 204);

  api::Request bad;
  bad.method = "POST";
  bad.path = "/sessions";
  bad.body = "{not json";
  EXPECT_EQ(env.svc->Handle(bad).status, 422);

  // Retrieval of a draft without entities.
  Call(*env.svc, "POST", "/chains", {{"session_id", sid}, {"positions", Positions()}});
  const auto draft = Call(*env.svc, "POST", "/chains/chain-1/retrieve", {{"session_id", sid}});
  EXPECT_EQ(draft.status, 422);
  EXPECT_EQ(Call(*env.svc, "GET", "/chains/chain-1/upset", nullptr, {{"session_id", sid}}).status,
            422);
  EXPECT_EQ(Call(*env.svc, "POST", "/chains/chain-1/preview",
                 {{"session_id", sid}, {"k", 0}}).status,
            422);
}

TEST(ApiService, IdempotencyKeyReplaysResponse) {
  Env env("api-idem");
  const std::map<std::string, std::string> key = {{"idempotency-key", "k1"}};
  const auto a = Call(*env.svc, "POST", "/sessions", {{"dataset_id", "syn"}}, {}, key);
  const auto b = Call(*env.svc, "POST", "/sessions", {{"dataset_id", "syn"}}, {}, key);
  EXPECT_EQ(a.status, 201);
  EXPECT_EQ(a.raw, b.raw);
  const auto c = Call(*env.svc, "POST", "/sessions", {{"dataset_id", "syn"}});
  EXPECT_EQ(c.body["session_id"], "session-2");
  const auto clash = Call(*env.svc, "POST", "/sessions", {{"dataset_id", "other"}}, {}, key);
  EXPECT_EQ(clash.status, 422);
}

TEST(ApiService, ReadsAreByteIdenticalAndRevisionsGrow) {
  Env env("api-reads");
  const auto sid = env.NewSession();
  const auto r0 = env.svc->revision();
  const auto a = Call(*env.svc, "GET", "/sessions/" + sid);
  const auto b = Call(*env.svc, "GET", "/sessions/" + sid);
  EXPECT_EQ(a.raw, b.raw);
  const auto s1 = Call(*env.svc, "GET", "/search", nullptr, {{"category", "Gene"}});
  const auto s2 = Call(*env.svc, "GET", "/search", nullptr, {{"category", "Gene"}});
  EXPECT_EQ(s1.raw, s2.raw);
  EXPECT_EQ(env.svc->revision(), r0);

  Call(*env.svc, "POST", "/chains", {{"session_id", sid}, {"positions", Positions()}});
  EXPECT_GT(env.svc->revision(), r0);
  const auto c = Call(*env.svc, "GET", "/sessions/" + sid);
  EXPECT_GT(c.body["revision"].get<std::uint64_t>(), a.body["revision"].get<std::uint64_t>());
}

TEST(ApiService, KgAppendNeedsConfirmation) {
  Env env("api-append");
  const json t = {{"head", "E001"}, {"relation", "new_rel"}, {"tail", "E002"}};
  const json dup = {{"head", env.d.triplets[0].head},
                    {"relation", env.d.triplets[0].relation},
                    {"tail", env.d.triplets[0].tail}};
  EXPECT_EQ(Call(*env.svc, "POST", "/kg/append",
                 {{"dataset_id", "syn"}, {"triplets", json::array({t})}}).status,
            422);
  const auto ok = Call(*env.svc, "POST", "/kg/append",
                       {{"dataset_id", "syn"}, {"triplets", json::array({t, dup})}, {"confirm", true}});
  ASSERT_EQ(ok.status, 200) << ok.raw;
  EXPECT_EQ(ok.body["appended"], 1);
  EXPECT_EQ(ok.body["duplicates_skipped"], 1);
  EXPECT_EQ(ok.body["counts"]["triplets"], 501);
  const json dangling = {{"head", "E001"}, {"relation", "r"}, {"tail", "ZZZ"}};
  EXPECT_EQ(Call(*env.svc, "POST", "/kg/append",
                 {{"triplets", json::array({dangling})}, {"confirm", true}}).status,
            422);
}

TEST(ApiService, MetricsEndpointMatchesHandValues) {
  Env env("api-metrics");
  const json lists = json::array(
      {{{"query_id", "q"}, {"candidates", {"a", "b", "c"}}, {"relevant", {"a", "c"}}}});
  const auto r = Call(*env.svc, "POST", "/metrics/evaluate",
                      {{"lists", lists}, {"metrics", {"ndcg", "mrr"}}, {"n", 3}});
  ASSERT_EQ(r.status, 200) << r.raw;
  EXPECT_NEAR(r.body["metrics"]["NDCG@3"].get<double>(), 1.5 / (1.0 + 1.0 / std::log2(3.0)), 1e-12);
  EXPECT_NEAR(r.body["metrics"]["MRR"].get<double>(), (1.0 + 1.0 / 3.0) / 2.0, 1e-12);
  EXPECT_NE(r.body["tsv"].get<std::string>().find("MRR\t"), std::string::npos);
}

TEST(ApiService, OpenApiListsEndpoints) {
  Env env("api-openapi");
  const auto r = Call(*env.svc, "GET", "/openapi.json");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["openapi"], "3.0.3");
  EXPECT_TRUE(r.body["paths"].contains("/chains/{id}/upset"));
  EXPECT_TRUE(r.body["paths"].contains("/layout"));
}

TEST(ApiService, ScriptedSessionMatchesOraclesAndReplays) {
  Env env("api-session");
  const auto sid = env.NewSession();

  const auto search = Call(*env.svc, "GET", "/search", nullptr, {{"head", "E003"}});
  ASSERT_EQ(search.status, 200);
  EXPECT_EQ(search.body["rows"].size(), 20u);

  // Embedding points sit at (i%10+0.5, i/10+0.5): the box holds E000..E002 and E010..E012.
  const auto lasso = Call(*env.svc, "POST", "/lasso",
                          {{"session_id", sid},
                           {"polygon", json::array({{0, 0}, {3, 0}, {3, 2}, {0, 2}})}});
  ASSERT_EQ(lasso.status, 200) << lasso.raw;
  EXPECT_EQ(lasso.body["selected"],
            json::array({"E000", "E001", "E002", "E010", "E011", "E012"}));

  const auto filter = Call(*env.svc, "POST", "/predictions/filter",
                           {{"dataset_id", "syn"},
                            {"filter", {{"exclude_relation_homogeneous", "treats"}}},
                            {"sort", {{"column", "edge_weight"}, {"hop", 1}}},
                            {"limit", 10}});
  ASSERT_EQ(filter.status, 200) << filter.raw;
  EXPECT_LE(filter.body["rows"].size(), 10u);
  for (std::size_t i = 1; i < filter.body["rows"].size(); ++i) {
    EXPECT_GE(filter.body["rows"][i - 1]["path"]["hops"][0]["weight"].get<double>(),
              filter.body["rows"][i]["path"]["hops"][0]["weight"].get<double>());
  }

  const auto created = Call(*env.svc, "POST", "/chains",
                            {{"session_id", sid}, {"positions", Positions()}});
  ASSERT_EQ(created.status, 201) << created.raw;
  EXPECT_EQ(created.body["chain"]["id"], "chain-1");
  EXPECT_EQ(created.body["chain"]["status"], "draft");

  const auto preview = Call(*env.svc, "POST", "/chains/chain-1/preview", {{"session_id", sid}});
  ASSERT_EQ(preview.status, 200) << preview.raw;
  for (const auto& pos : preview.body["chain"]["positions"]) {
    EXPECT_FALSE(pos["entities"].empty());
  }

  // Pin the positions to the planted sets so the counts have a known oracle.
  const auto edited = Call(*env.svc, "POST", "/chains/chain-1/edit",
                           {{"session_id", sid}, {"entities", PlantedEntityEdits(env.d)}});
  ASSERT_EQ(edited.status, 200) << edited.raw;

  const auto analyzed = Call(*env.svc, "POST", "/chains/chain-1/analyze", {{"session_id", sid}});
  ASSERT_EQ(analyzed.status, 200) << analyzed.raw;
  EXPECT_EQ(analyzed.body["chain"]["status"], "analyzed");
  EXPECT_FALSE(analyzed.body["chain"]["critique"].get<std::string>().empty());

  const auto chat = Call(*env.svc, "POST", "/chat",
                         {{"session_id", sid}, {"message", "What links GN12 and DR13?"},
                          {"mode", "rag"}});
  ASSERT_EQ(chat.status, 200) << chat.raw;
  EXPECT_EQ(chat.body["backend"], "mock");

  const auto retrieved = Call(*env.svc, "POST", "/chains/chain-1/retrieve", {{"session_id", sid}});
  ASSERT_EQ(retrieved.status, 200) << retrieved.raw;

  // Module-level oracle on the same inputs.
  const auto g = testsupport::BuildGraph(env.d);
  const auto store = predictions::PredictionStore::Parse(env.d.predictions_jsonl, g, "syn");
  auto planted = testsupport::PlantedChain(env.d);
  const auto oracle = chain::MatchChain(planted, store, g);
  for (chain::Mask m = 0; m < 8; ++m) {
    EXPECT_EQ(retrieved.body["exclusive"][chain::MaskString(m)].get<std::size_t>(),
              oracle.exclusive[m])
        << chain::MaskString(m);
  }
  EXPECT_EQ(retrieved.body["starred"], env.d.planted.size());
  EXPECT_EQ(retrieved.body["chain"]["status"], "retrieved");

  const auto upset = Call(*env.svc, "GET", "/chains/chain-1/upset", nullptr,
                          {{"session_id", sid}, {"subset", "111"}});
  ASSERT_EQ(upset.status, 200) << upset.raw;
  EXPECT_EQ(upset.body["slice"]["count"], env.d.planted.size());
  EXPECT_EQ(upset.body["slice"]["record_ids"].get<std::vector<std::size_t>>(), env.d.planted);
  for (const auto& rec : upset.body["slice"]["records"]) EXPECT_TRUE(rec["starred"].get<bool>());

  const auto layout = Call(*env.svc, "POST", "/layout",
                           {{"session_id", sid}, {"chain_id", "chain-1"},
                            {"record_id", env.d.planted.front()}, {"seed", 3}});
  ASSERT_EQ(layout.status, 200) << layout.raw;
  ASSERT_EQ(layout.body["layers"].size(), 4u);
  for (const auto& l : layout.body["layers"]) EXPECT_TRUE(l["converged"].get<bool>());

  const auto before = Call(*env.svc, "GET", "/sessions/" + sid);
  ASSERT_EQ(before.status, 200);
  EXPECT_EQ(before.body["history"].size(), 1u);
  EXPECT_EQ(before.body["lassos"].size(), 1u);

  // A fresh process over the same data directory replays the log.
  env.svc.reset();
  auto fresh = env.Open(true);
  fresh->WaitForLoads();
  const auto after = Call(*fresh, "GET", "/sessions/" + sid);
  ASSERT_EQ(after.status, 200) << after.raw;
  EXPECT_EQ(Strip(after.body), Strip(before.body));
  EXPECT_TRUE(after.body["warnings"].empty());
  const auto upset_again = Call(*fresh, "GET", "/chains/chain-1/upset", nullptr,
                                {{"session_id", sid}, {"subset", "111"}});
  EXPECT_EQ(Strip(upset_again.body), Strip(upset.body));
}

TEST(ApiService, ChatTimeoutIsRecordedAs504) {
  class Slow : public llm::Backend {
   public:
    std::string id() const override { return "slow"; }
    std::string Complete(const llm::BackendRequest&) override {
      throw Error(ErrorCode::kTimeout, "backend timed out");
    }
  };
  Env env("api-timeout");
  env.svc.reset();
  api::ServiceOptions o;
  o.data_dir = env.root / "data";
  o.autoload = true;
  api::Service svc(o, std::make_shared<Slow>());
  svc.WaitForLoads();
  const auto sid = Call(svc, "POST", "/sessions", {{"dataset_id", "syn"}}).body["session_id"];
  const auto r = Call(svc, "POST", "/chat", {{"session_id", sid}, {"message", "hello"}});
  EXPECT_EQ(r.status, 504);
  EXPECT_EQ(r.body["code"], "timeout");
  const auto s = Call(svc, "GET", "/sessions/" + sid.get<std::string>());
  ASSERT_EQ(s.body["history"].size(), 1u);
  EXPECT_TRUE(s.body["history"][0]["error"].get<bool>());
}
