#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include <json.hpp>

#include "hypochain/chain_engine.hpp"
#include "hypochain/error.hpp"
#include "hypochain/prediction_store.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace hypochain;
using predictions::PredictionFilter;
using predictions::PredictionStore;

namespace {

std::string Line(const std::string& head, const std::string& tail, double score, int rank,
                 const std::vector<std::pair<std::string, std::string>>& hops,
                 double weight = 0.5) {
  nlohmann::json path = nlohmann::json::array();
  for (const auto& [rel, ent] : hops) {
    path.push_back({{"relation", rel}, {"entity", ent}, {"weight", weight}});
  }
  return nlohmann::json{{"head", head}, {"tail", tail}, {"score", score}, {"rank", rank},
                        {"path", path}}
             .dump() +
         "\n";
}

kg::KnowledgeGraph LetterGraph(int n) {
  std::vector<kg::Entity> es;
  for (int i = 0; i < n; ++i) {
    es.push_back({"N" + std::to_string(i), "node" + std::to_string(i),
                  i % 2 ? "Gene" : "Drug", ""});
  }
  return kg::KnowledgeGraph::FromRows(es, {});
}

// Head N0 with 25 records. Ranks 1..23 use sl_gsg on every hop, ranks 24 and
// 25 mix relations.
std::string RerankFixture() {
  std::string text;
  for (int rank = 1; rank <= 25; ++rank) {
    const std::string tail = "N" + std::to_string(rank);
    const bool mixed = rank >= 24;
    text += Line("N0", tail, 1.0 - rank * 0.01, rank,
                 {{"sl_gsg", "N30"}, {mixed ? "regulates" : "sl_gsg", "N31"}, {"sl_gsg", tail}});
  }
  return text;
}

}  // namespace

TEST(PredictionStore, FiftyRecordsForOneHead) {
  testsupport::SyntheticSpec spec;
  spec.heads = 1;
  spec.records_per_head = 50;
  spec.planted = 3;
  const auto d = testsupport::MakeSynthetic(spec);
  const auto g = testsupport::BuildGraph(d);
  const auto store = PredictionStore::Parse(d.predictions_jsonl, g, "ds");
  EXPECT_EQ(store.size(), 50u);
  const auto top = store.top_tails("E000");
  ASSERT_EQ(top.size(), 50u);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(top[static_cast<std::size_t>(i)]->rank, i + 1);
  EXPECT_TRUE(store.top_tails("E000", 0).empty());
  EXPECT_EQ(store.top_tails("E000", 500).size(), 50u);
  EXPECT_THROW(store.top_tails("E001"), Error);
}

TEST(PredictionStore, EmptyFileHasNoRecords) {
  const auto g = LetterGraph(3);
  EXPECT_EQ(PredictionStore::Parse("", g, "ds").size(), 0u);
  EXPECT_EQ(PredictionStore::Parse("\n\n", g, "ds").size(), 0u);
}

TEST(PredictionStore, MalformedRecordsAreRejected) {
  const auto g = LetterGraph(6);
  const auto two_hops = Line("N0", "N2", 0.9, 1, {{"r", "N1"}, {"r", "N2"}});
  try {
    PredictionStore::Parse(two_hops, g, "ds", "p.jsonl");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("malformed hop count"), std::string::npos);
  }

  const auto wrong_tail = Line("N0", "N4", 0.9, 1, {{"r", "N1"}, {"r", "N2"}, {"r", "N3"}});
  EXPECT_THROW(PredictionStore::Parse(wrong_tail, g, "ds"), FormatError);

  const auto dangling = Line("N0", "N3", 0.9, 1, {{"r", "X"}, {"r", "N2"}, {"r", "N3"}});
  EXPECT_THROW(PredictionStore::Parse(dangling, g, "ds"), DanglingIdError);

  const auto gap = Line("N0", "N3", 0.9, 1, {{"r", "N1"}, {"r", "N2"}, {"r", "N3"}}) +
                   Line("N0", "N4", 0.8, 3, {{"r", "N1"}, {"r", "N2"}, {"r", "N4"}});
  EXPECT_THROW(PredictionStore::Parse(gap, g, "ds"), FormatError);

  const auto inverted = Line("N0", "N3", 0.5, 1, {{"r", "N1"}, {"r", "N2"}, {"r", "N3"}}) +
                        Line("N0", "N4", 0.8, 2, {{"r", "N1"}, {"r", "N2"}, {"r", "N4"}});
  EXPECT_THROW(PredictionStore::Parse(inverted, g, "ds"), FormatError);

  EXPECT_THROW(PredictionStore::Parse("{\"head\": \"N0\"}\n", g, "ds"), FormatError);
  EXPECT_THROW(PredictionStore::Parse("not json\n", g, "ds"), FormatError);
}

TEST(PredictionStore, OutOfRangeWeightsAreClampedWithWarning) {
  const auto g = LetterGraph(6);
  const auto text = Line("N0", "N3", 0.9, 1, {{"r", "N1"}, {"r", "N2"}, {"r", "N3"}}, 1.7);
  std::ostringstream diag;
  const auto store = PredictionStore::Parse(text, g, "ds", "p.jsonl", &diag);
  EXPECT_EQ(store.record(0).path.hops[0].weight, 1.0);
  EXPECT_EQ(store.load_report().clamped_weights, 3u);
  EXPECT_NE(diag.str().find("p.jsonl:1"), std::string::npos);
}

TEST(PredictionStore, EchoIsVerbatim) {
  const auto g = LetterGraph(6);
  const auto text = Line("N0", "N3", 0.9, 1, {{"r", "N1"}, {"r", "N2"}, {"r", "N3"}}) +
                    Line("N0", "N4", 0.8, 2, {{"r", "N1"}, {"r", "N2"}, {"r", "N4"}});
  EXPECT_EQ(PredictionStore::Parse(text, g, "ds").echo_jsonl(), text);
}

TEST(PredictionStore, RerankMovesRecord25ToSecond) {
  const auto g = LetterGraph(40);
  const auto store = PredictionStore::Parse(RerankFixture(), g, "ds");
  PredictionFilter f;
  f.head = "N0";
  f.exclude_relation_homogeneous = "sl_gsg";
  const auto ranked = store.filter_and_rerank(f, g);
  ASSERT_EQ(ranked.size(), 2u);
  EXPECT_EQ(ranked[0].record->rank, 24);
  EXPECT_EQ(ranked[1].record->rank, 25);
  EXPECT_EQ(ranked[1].display_rank, 2);

  // Oracle: scan each path's relation multiset.
  std::vector<int> expected;
  for (const auto* r : store.canonical_order()) {
    if (!oracle::AllHopsUse(r->path, "sl_gsg")) expected.push_back(r->rank);
  }
  EXPECT_EQ(expected, (std::vector<int>{24, 25}));
}

TEST(PredictionStore, EmptyFilterIsIdentity) {
  const auto d = testsupport::MakeSynthetic();
  const auto g = testsupport::BuildGraph(d);
  const auto store = PredictionStore::Parse(d.predictions_jsonl, g, "ds");
  const auto ranked = store.filter_and_rerank({}, g);
  const auto canonical = store.canonical_order();
  ASSERT_EQ(ranked.size(), canonical.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    EXPECT_EQ(ranked[i].record, canonical[i]);
    EXPECT_EQ(ranked[i].display_rank, static_cast<int>(i + 1));
  }
}

TEST(PredictionStore, EntityTermAbsentFromPathsGivesEmpty) {
  const auto g = LetterGraph(40);
  const auto store = PredictionStore::Parse(RerankFixture(), g, "ds");
  PredictionFilter f;
  f.entity_terms.push_back({2, "N39"});
  EXPECT_TRUE(store.filter_and_rerank(f, g).empty());
  f.entity_terms = {{2, "node31"}};  // display names resolve too
  EXPECT_EQ(store.filter_and_rerank(f, g).size(), 25u);
  f.entity_terms = {{4, "N31"}};
  EXPECT_THROW(store.filter_and_rerank(f, g), Error);
}

TEST(PredictionStore, CategoryAndRelationTerms) {
  const auto g = LetterGraph(40);
  const auto store = PredictionStore::Parse(RerankFixture(), g, "ds");
  PredictionFilter f;
  f.category = "Gene";  // odd tails
  for (const auto& r : store.filter_and_rerank(f, g)) {
    EXPECT_EQ(g.entity(r.record->tail).category, "Gene");
  }
  f = {};
  f.relation_terms.push_back({2, "regulates"});
  EXPECT_EQ(store.filter_and_rerank(f, g).size(), 2u);
}

TEST(PredictionStore, SortByEdgeWeightMatchesComparisonSort) {
  const auto g = LetterGraph(10);
  std::string text;
  const double w1[] = {0.2, 0.9, 0.2, 0.5};
  for (int rank = 1; rank <= 4; ++rank) {
    nlohmann::json path = nlohmann::json::array();
    path.push_back({{"relation", "r"}, {"entity", "N8"}, {"weight", w1[rank - 1]}});
    path.push_back({{"relation", "r"}, {"entity", "N9"}, {"weight", 0.1 * rank}});
    const std::string tail = "N" + std::to_string(5 - rank);
    path.push_back({{"relation", "r"}, {"entity", tail}, {"weight", 0.3}});
    text += nlohmann::json{{"head", "N0"}, {"tail", tail}, {"score", 1.0 - rank * 0.1},
                           {"rank", rank}, {"path", path}}
                .dump() +
            "\n";
  }
  const auto store = PredictionStore::Parse(text, g, "ds");
  const auto order = store.canonical_order();
  const auto sorted = predictions::SortBy(order, {predictions::SortColumn::kEdgeWeight, 1,
                                                  predictions::SortOrder::kDescending});
  std::vector<std::string> tails;
  for (const auto* r : sorted) tails.push_back(r->tail);
  // 0.9 (N3), 0.5 (N1), then the 0.2 tie broken by tail id: N2 before N4.
  EXPECT_EQ(tails, (std::vector<std::string>{"N3", "N1", "N2", "N4"}));

  auto oracle_order = std::vector<const predictions::PredictionRecord*>(order.begin(), order.end());
  std::sort(oracle_order.begin(), oracle_order.end(), [](auto* a, auto* b) {
    if (a->path.hops[0].weight != b->path.hops[0].weight) {
      return a->path.hops[0].weight > b->path.hops[0].weight;
    }
    return a->tail < b->tail;
  });
  EXPECT_EQ(sorted, oracle_order);

  EXPECT_THROW(predictions::SortBy(order, {predictions::SortColumn::kEdgeWeight, 4,
                                           predictions::SortOrder::kAscending}),
               Error);
}

TEST(PredictionStore, MarkAlignmentStarsFullMasksOnly) {
  const auto d = testsupport::MakeSynthetic();
  const auto g = testsupport::BuildGraph(d);
  auto store = PredictionStore::Parse(d.predictions_jsonl, g, "ds");
  chain::ChainMatchReport report;
  report.dataset_id = "ds";
  report.masks.assign(store.size(), 0);
  report.masks[0] = 0b111;
  report.masks[1] = 0b101;
  store.mark_alignment(report);
  EXPECT_TRUE(store.starred(0));
  EXPECT_FALSE(store.starred(1));
  store.mark_alignment(report, false);
  EXPECT_TRUE(store.starred(1));

  report.dataset_id = "other";
  EXPECT_THROW(store.mark_alignment(report), Error);
  report.dataset_id = "ds";
  report.masks.pop_back();
  EXPECT_THROW(store.mark_alignment(report), Error);
}

TEST(PredictionStore, RandomFiltersAreOrderedSubsequences) {
  const auto d = testsupport::MakeSynthetic();
  const auto g = testsupport::BuildGraph(d);
  const auto store = PredictionStore::Parse(d.predictions_jsonl, g, "ds");
  const auto canonical = store.canonical_order();
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    PredictionFilter f;
    if (rng() % 2) f.head = d.entities[rng() % 10].id;
    if (rng() % 3 == 0) f.exclude_relation_homogeneous = d.relations[rng() % d.relations.size()];
    if (rng() % 3 == 0) f.relation_terms.push_back({static_cast<int>(rng() % 3) + 1,
                                                    d.relations[rng() % d.relations.size()]});
    const auto ranked = store.filter_and_rerank(f, g);
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      EXPECT_EQ(ranked[i].display_rank, static_cast<int>(i + 1));
      while (cursor < canonical.size() && canonical[cursor] != ranked[i].record) ++cursor;
      ASSERT_LT(cursor, canonical.size()) << "not a subsequence";
      EXPECT_TRUE(predictions::Matches(*ranked[i].record, f, g));
    }
    std::size_t passing = 0;
    for (const auto* r : canonical) passing += predictions::Matches(*r, f, g);
    EXPECT_EQ(passing, ranked.size());
  }
}
