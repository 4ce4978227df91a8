#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace hypochain::metrics {

inline constexpr int kDefaultCutoff = 50;

/// One query's ranked candidates (rank 1 first) with binary relevance.
struct RankedList {
  std::string query_id;
  std::vector<std::string> candidates;
  std::set<std::string> relevant;
  std::optional<std::size_t> universe_size;

  /// Throws a contract error on duplicate candidates or a universe smaller
  /// than the candidate list.
  void Validate() const;
  bool is_relevant(std::size_t index) const { return relevant.count(candidates[index]) != 0; }
  /// 1-based ranks of the relevant candidates present in the list.
  std::vector<int> relevant_ranks() const;
};

double dcg_at(const RankedList& list, int n);

/// DCG over IDCG, where IDCG puts every relevant item first. Lists without
/// relevant items score 0.
double ndcg_at(const RankedList& list, int n);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  bool recall_defined = true;  // false when the list has no relevant items
};

PrecisionRecall precision_recall_at(const RankedList& list, int n);

struct PercentileRank {
  int rank = 1;
  std::size_t universe_size = 1;
};

/// Mean of 100 * (1 - (rank - 1) / universe), in percent.
double mpr(const std::vector<PercentileRank>& ranks);
double mrr(const std::vector<int>& ranks);
double hit_at(const std::vector<int>& ranks, int k);

enum class Metric { kNdcg, kPrecision, kRecall, kMrr, kMpr, kHit };

std::string MetricLabel(Metric m, int n, int k);
/// Accepts ndcg, precision, recall, mrr, mpr, hit.
Metric ParseMetric(const std::string& name);

struct MetricReport {
  std::vector<Metric> metrics;
  int n = kDefaultCutoff;
  int k = kDefaultCutoff;
  /// query id -> metric -> value (absent when undefined for that query)
  std::map<std::string, std::map<Metric, double>> per_query;
  std::map<Metric, double> macro;
  std::map<Metric, std::size_t> contributing_queries;
};

/// Per-query values and their arithmetic mean over the queries where the
/// metric is defined. MRR, MPR and Hit@K use the ranks of the relevant
/// candidates of each query.
MetricReport Evaluate(const std::vector<RankedList>& lists,
                      const std::vector<Metric>& metrics, int n, int k);

/// `metric\tvalue` table, one row per metric.
std::string ReportTsv(const MetricReport& report);

/// Reads the JSON-lines ranked-list format.
std::vector<RankedList> ParseRankedLists(const std::string& text,
                                         const std::string& source = "<memory>");

}  // namespace hypochain::metrics
