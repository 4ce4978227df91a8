#include <gtest/gtest.h>

#include "hypochain/error.hpp"
#include "hypochain/llm_gateway.hpp"
#include "synthetic.hpp"

using namespace hypochain;
using llm::TemplateName;

namespace {

std::string Fixture(const std::string& rel) {
  return testsupport::ReadText(testsupport::FixtureDir() / rel);
}

std::string TemplateFixture(TemplateName name) {
  return Fixture("templates/" + std::string(llm::TemplateId(name)) + ".txt");
}

// Plain find/replace over the checked-in body, independent of the renderer.
std::string ReplaceAll(std::string text, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

class ScriptedBackend : public llm::Backend {
 public:
  std::string id() const override { return "scripted"; }
  std::string Complete(const llm::BackendRequest& request) override {
    last = request;
    if (error) throw Error(*error, "scripted failure");
    return answer;
  }
  std::string answer = "plain answer";
  std::optional<ErrorCode> error;
  llm::BackendRequest last;
};

}  // namespace

TEST(LlmGateway, TemplateBodiesMatchCheckedInFixtures) {
  for (const auto name : llm::kAllTemplates) {
    EXPECT_EQ(std::string(llm::TemplateBody(name)), TemplateFixture(name)) << llm::TemplateId(name);
    EXPECT_EQ(llm::ParseTemplateName(llm::TemplateId(name)), name);
  }
  EXPECT_THROW(llm::ParseTemplateName("summarize"), Error);
}

TEST(LlmGateway, RenderMatchesIndependentSubstitution) {
  for (const auto name : llm::kAllTemplates) {
    const auto body = TemplateFixture(name);
    llm::Bindings b;
    std::string expected = body;
    for (const auto& slot : llm::Placeholders(body)) {
      // Values containing braces must not be re-expanded.
      b[slot] = "<" + slot + " value {history}>";
      expected = ReplaceAll(expected, "{" + slot + "}", "\x01" + slot + "\x02");
    }
    for (const auto& [slot, value] : b) expected = ReplaceAll(expected, "\x01" + slot + "\x02", value);
    EXPECT_EQ(llm::Render(name, b), expected) << llm::TemplateId(name);
  }
}

TEST(LlmGateway, SpotLinesArePresent) {
  const auto recommend = std::string(llm::TemplateBody(TemplateName::kRecommendEntities));
  const auto retrieve = std::string(llm::TemplateBody(TemplateName::kRetrieveByHypothesis));
  const auto path = std::string(llm::TemplateBody(TemplateName::kAnalysePath));
  EXPECT_NE(recommend.find("Return your answer in JSON format only"), std::string::npos);
  EXPECT_NE(recommend.find("return 5–7 of the most relevant entities"), std::string::npos);
  EXPECT_NE(retrieve.find("return **15–20 entities**"), std::string::npos);
  EXPECT_NE(retrieve.find("Return your answer in JSON format only"), std::string::npos);
  EXPECT_NE(path.find("Return your answer in JSON format only"), std::string::npos);
}

TEST(LlmGateway, PlaceholdersPerTemplate) {
  EXPECT_EQ(llm::Placeholders(llm::TemplateBody(TemplateName::kGeneralResponse)),
            (std::vector<std::string>{"history"}));
  const auto rec = llm::Placeholders(llm::TemplateBody(TemplateName::kRecommendEntities));
  EXPECT_EQ(std::set<std::string>(rec.begin(), rec.end()),
            (std::set<std::string>{"history", "kg_context", "vector_context",
                                   "recommend_entity_json_format"}));
}

TEST(LlmGateway, RenderRejectsMissingOrStrayBindings) {
  try {
    llm::Render(TemplateName::kGeneralResponse, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kContract);
    EXPECT_NE(std::string(e.what()).find("history"), std::string::npos);
  }
  EXPECT_THROW(llm::Render(TemplateName::kGeneralResponse, {{"history", "h"}, {"extra", "x"}}),
               Error);
  EXPECT_EQ(llm::RenderText("a {x} b {x}", {{"x", "{x}"}}), "a {x} b {x}");
}

TEST(LlmGateway, WellFormedFixtureParses) {
  const auto p = llm::ParseResponse(TemplateName::kRecommendEntities,
                                    Fixture("responses/recommend_wellformed.txt"));
  ASSERT_EQ(p.recommended.size(), 6u);
  EXPECT_EQ(p.recommended[1].entity_name, "Olaparib");
  EXPECT_EQ(p.recommended[3].category, "Pathway");
  EXPECT_TRUE(p.warnings.empty());
  EXPECT_EQ(p.suggestions, (std::vector<std::string>{"Which other PARP inhibitors target PARP1?"}));
}

TEST(LlmGateway, ProseWrappedFixtureYieldsEmbeddedObject) {
  const auto p = llm::ParseResponse(TemplateName::kRecommendEntities,
                                    Fixture("responses/recommend_prose_wrapped.txt"));
  const auto expected = nlohmann::json::parse(Fixture("responses/recommend_prose_wrapped.expected.json"));
  ASSERT_TRUE(p.json.has_value());
  EXPECT_EQ(*p.json, expected);
  ASSERT_EQ(p.recommended.size(), expected["entities"].size());
  for (std::size_t i = 0; i < p.recommended.size(); ++i) {
    EXPECT_EQ(p.recommended[i].entity_name, expected["entities"][i]["entity_name"]);
    EXPECT_EQ(p.recommended[i].reason, expected["entities"][i]["reason"]);
  }
  EXPECT_EQ(p.suggestions.size(), 2u);
}

TEST(LlmGateway, MissingKeyFixtureNamesTheEntry) {
  try {
    llm::ParseResponse(TemplateName::kRecommendEntities,
                       Fixture("responses/recommend_missing_key.txt"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("entry 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("reason"), std::string::npos) << msg;
  }
}

TEST(LlmGateway, OtherParserCases) {
  EXPECT_THROW(llm::ParseResponse(TemplateName::kRecommendEntities, "no json here"), Error);
  EXPECT_THROW(llm::ParseResponse(TemplateName::kGeneralResponse, "  \n"), Error);
  const auto general = llm::ParseResponse(TemplateName::kGeneralResponse, "Just prose.");
  EXPECT_FALSE(general.json.has_value());

  const auto md = llm::ParseResponse(TemplateName::kAnalyzeImproveChain,
                                     Fixture("responses/analyze_markdown.txt"));
  ASSERT_TRUE(md.sections.has_value());
  EXPECT_NE(md.sections->biological_interpretation.find("PARP inhibition"), std::string::npos);
  EXPECT_NE(md.sections->suggested_improvements.find("targets"), std::string::npos);

  const auto few = llm::ParseResponse(
      TemplateName::kRetrieveByHypothesis,
      R"({"entities": [{"entity_name": "A", "category": "Gene", "description": "d"}]})");
  EXPECT_EQ(few.retrieved.size(), 1u);
  EXPECT_FALSE(few.warnings.empty());  // fewer than the requested 15-20

  EXPECT_EQ(*llm::ExtractJson("noise {not json} then [1, 2] tail"), nlohmann::json::array({1, 2}));
}

TEST(LlmGateway, RagModeRequiresBothContexts) {
  auto backend = std::make_shared<ScriptedBackend>();
  llm::Gateway gateway(backend);
  llm::GatewayRequest req;
  req.template_name = TemplateName::kRecommendEntities;
  req.mode = llm::Mode::kRag;
  req.message = "BRCA1 partners";
  req.kg_context = "BRCA1 sl_gsg PARP1";
  EXPECT_THROW(gateway.Call(req, "user: BRCA1 partners"), Error);

  req.vector_context = "BRCA1: repair gene";
  backend->answer = Fixture("responses/recommend_wellformed.txt");
  const auto resp = gateway.Call(req, "user: BRCA1 partners");
  EXPECT_EQ(resp.parsed.recommended.size(), 6u);
  EXPECT_EQ(resp.backend_id, "scripted");
  EXPECT_NE(backend->last.prompt.find("BRCA1 sl_gsg PARP1"), std::string::npos);
  EXPECT_NE(backend->last.prompt.find("BRCA1: repair gene"), std::string::npos);
  EXPECT_EQ(backend->last.prompt.find("{kg_context}"), std::string::npos);
}

TEST(LlmGateway, UnparseableAnswerIsBackendError) {
  auto backend = std::make_shared<ScriptedBackend>();
  backend->answer = "I could not find anything.";
  llm::Gateway gateway(backend);
  llm::GatewayRequest req;
  req.template_name = TemplateName::kRetrieveByHypothesis;
  req.mode = llm::Mode::kRag;
  req.kg_context = "";
  req.vector_context = "";
  try {
    gateway.Call(req, "user: x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBackend);
    EXPECT_EQ(e.detail(), "I could not find anything.");
  }
}

TEST(LlmGateway, ChatHistoryAccumulatesAndMarksErrors) {
  auto backend = std::make_shared<ScriptedBackend>();
  llm::Gateway gateway(backend);
  llm::ChatSession session;
  llm::GatewayRequest req;
  req.message = "first question";
  backend->answer = "first answer";
  session.Chat(gateway, req);
  EXPECT_EQ(backend->last.bindings.at("history"), "user: first question");

  req.message = "second question";
  backend->error = ErrorCode::kTimeout;
  try {
    session.Chat(gateway, req);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTimeout);
  }
  ASSERT_EQ(session.size(), 2u);
  const auto h = session.history();
  EXPECT_TRUE(h[1].error);
  EXPECT_FALSE(h[1].response.has_value());

  // Contract failures do not touch the history.
  req.mode = llm::Mode::kRag;
  backend->error.reset();
  EXPECT_THROW(session.Chat(gateway, req), Error);
  EXPECT_EQ(session.size(), 2u);

  req.mode = llm::Mode::kLlm;
  req.message = "third question";
  session.Chat(gateway, req);
  EXPECT_EQ(backend->last.bindings.at("history"),
            "user: first question\nassistant: first answer\n"
            "user: second question\nassistant: [error: scripted failure]\n"
            "user: third question");
  EXPECT_EQ(session.history()[2].seq, 2u);

  const auto round = llm::ExchangeFromJson(llm::ToJson(h[1]));
  EXPECT_EQ(round.error, true);
  EXPECT_EQ(round.message, "second question");
}

TEST(LlmGateway, MockBackendIsDeterministic) {
  const auto dir = testsupport::FixtureDir() / "kg";
  const auto g = kg::KnowledgeGraph::Load(dir / "entities.tsv", dir / "triplets.tsv");
  llm::Gateway gateway(std::make_shared<llm::MockBackend>());
  llm::GatewayRequest req;
  req.template_name = TemplateName::kRecommendEntities;
  req.mode = llm::Mode::kRag;
  req.message = "What is related to BRCA1?";
  req.kg_context = llm::AssembleKgContext(req.message, g, 1, 50).text;
  req.vector_context = llm::AssembleVectorContext(req.message, g);
  const auto a = gateway.Call(req, "user: " + req.message);
  const auto b = gateway.Call(req, "user: " + req.message);
  EXPECT_EQ(a.raw, b.raw);
  EXPECT_FALSE(a.parsed.recommended.empty());
}

TEST(LlmGateway, KgContextCitesNeighborhood) {
  const auto dir = testsupport::FixtureDir() / "kg";
  const auto g = kg::KnowledgeGraph::Load(dir / "entities.tsv", dir / "triplets.tsv");
  const auto ctx = llm::AssembleKgContext("partners of PARP1", g, 1, 100);
  EXPECT_EQ(ctx.seeds, (std::vector<std::string>{"G3"}));
  ASSERT_FALSE(ctx.cited.empty());
  for (const auto& t : ctx.cited) EXPECT_TRUE(t.head == "G3" || t.tail == "G3");
  const auto capped = llm::AssembleKgContext("partners of PARP1", g, 2, 2);
  EXPECT_EQ(capped.cited.size(), 2u);
  EXPECT_TRUE(llm::AssembleKgContext("nothing relevant", g, 1, 10).cited.empty());
}
