#include "hypochain/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include <json.hpp>

#include "hypochain/error.hpp"
#include "text_util.hpp"

namespace hypochain::metrics {

namespace {

void RequireCutoff(int n, const char* what) {
  if (n < 1) throw ContractError(std::string(what) + " must be >= 1");
}

void RequireNonEmpty(std::size_t size, const char* what) {
  if (size == 0) throw ContractError(std::string(what) + " needs a non-empty rank list");
}

double Discount(std::size_t position) {  // position is 1-based
  return 1.0 / std::log2(static_cast<double>(position) + 1.0);
}

}  // namespace

void RankedList::Validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& c : candidates) {
    if (!seen.insert(c).second) {
      throw ContractError("query \"" + query_id + "\": duplicate candidate \"" + c + "\"");
    }
  }
  if (universe_size && *universe_size < candidates.size()) {
    throw ContractError("query \"" + query_id + "\": universe_size smaller than the list");
  }
}

std::vector<int> RankedList::relevant_ranks() const {
  std::vector<int> ranks;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (is_relevant(i)) ranks.push_back(static_cast<int>(i + 1));
  }
  return ranks;
}

double dcg_at(const RankedList& list, int n) {
  RequireCutoff(n, "DCG cutoff");
  const auto limit = std::min<std::size_t>(static_cast<std::size_t>(n), list.candidates.size());
  double dcg = 0.0;
  for (std::size_t i = 0; i < limit; ++i) {
    if (list.is_relevant(i)) dcg += Discount(i + 1);
  }
  return dcg;
}

double ndcg_at(const RankedList& list, int n) {
  RequireCutoff(n, "NDCG cutoff");
  const auto ideal_hits = std::min<std::size_t>(static_cast<std::size_t>(n), list.relevant.size());
  if (ideal_hits == 0) return 0.0;
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal_hits; ++i) idcg += Discount(i + 1);
  return dcg_at(list, n) / idcg;
}

PrecisionRecall precision_recall_at(const RankedList& list, int n) {
  RequireCutoff(n, "precision/recall cutoff");
  const auto limit = std::min<std::size_t>(static_cast<std::size_t>(n), list.candidates.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < limit; ++i) hits += list.is_relevant(i) ? 1 : 0;
  PrecisionRecall out;
  out.precision = static_cast<double>(hits) / n;
  if (list.relevant.empty()) {
    out.recall = 0.0;
    out.recall_defined = false;
  } else {
    out.recall = static_cast<double>(hits) / static_cast<double>(list.relevant.size());
  }
  return out;
}

double mpr(const std::vector<PercentileRank>& ranks) {
  RequireNonEmpty(ranks.size(), "MPR");
  double sum = 0.0;
  for (const auto& r : ranks) {
    if (r.rank < 1 || r.universe_size == 0 ||
        static_cast<std::size_t>(r.rank) > r.universe_size) {
      throw ContractError("percentile rank needs 1 <= rank <= universe_size");
    }
    sum += 100.0 * (1.0 - static_cast<double>(r.rank - 1) /
                              static_cast<double>(r.universe_size));
  }
  return sum / static_cast<double>(ranks.size());
}

double mrr(const std::vector<int>& ranks) {
  RequireNonEmpty(ranks.size(), "MRR");
  double sum = 0.0;
  for (const int r : ranks) {
    if (r < 1) throw ContractError("ranks are positive integers");
    sum += 1.0 / r;
  }
  return sum / static_cast<double>(ranks.size());
}

double hit_at(const std::vector<int>& ranks, int k) {
  RequireCutoff(k, "Hit@K cutoff");
  RequireNonEmpty(ranks.size(), "Hit@K");
  std::size_t hits = 0;
  for (const int r : ranks) {
    if (r < 1) throw ContractError("ranks are positive integers");
    if (r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

std::string MetricLabel(Metric m, int n, int k) {
  switch (m) {
    case Metric::kNdcg:
      return "NDCG@" + std::to_string(n);
    case Metric::kPrecision:
      return "Precision@" + std::to_string(n);
    case Metric::kRecall:
      return "Recall@" + std::to_string(n);
    case Metric::kMrr:
      return "MRR";
    case Metric::kMpr:
      return "MPR";
    case Metric::kHit:
      return "Hit@" + std::to_string(k);
  }
  return {};
}

Metric ParseMetric(const std::string& name) {
  const std::string lower = [&] {
    std::string s(detail::Trim(name));
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }();
  if (lower == "ndcg") return Metric::kNdcg;
  if (lower == "precision") return Metric::kPrecision;
  if (lower == "recall") return Metric::kRecall;
  if (lower == "mrr") return Metric::kMrr;
  if (lower == "mpr") return Metric::kMpr;
  if (lower == "hit") return Metric::kHit;
  throw ContractError("unknown metric \"" + name + "\"");
}

MetricReport Evaluate(const std::vector<RankedList>& lists,
                      const std::vector<Metric>& metrics, int n, int k) {
  RequireCutoff(n, "cutoff N");
  RequireCutoff(k, "cutoff K");
  MetricReport report;
  report.metrics = metrics;
  report.n = n;
  report.k = k;
  std::map<Metric, double> sums;
  for (const auto& list : lists) {
    list.Validate();
    auto& values = report.per_query[list.query_id];
    const auto ranks = list.relevant_ranks();
    for (const Metric m : metrics) {
      std::optional<double> v;
      switch (m) {
        case Metric::kNdcg:
          v = ndcg_at(list, n);
          break;
        case Metric::kPrecision:
          v = precision_recall_at(list, n).precision;
          break;
        case Metric::kRecall: {
          const auto pr = precision_recall_at(list, n);
          if (pr.recall_defined) v = pr.recall;
          break;
        }
        case Metric::kMrr:
          if (!ranks.empty()) v = mrr(ranks);
          break;
        case Metric::kMpr:
          if (!ranks.empty()) {
            std::vector<PercentileRank> pr;
            const auto universe = list.universe_size.value_or(list.candidates.size());
            for (const int r : ranks) pr.push_back(PercentileRank{r, universe});
            v = mpr(pr);
          }
          break;
        case Metric::kHit:
          if (!ranks.empty()) v = hit_at(ranks, k);
          break;
      }
      if (v) {
        values[m] = *v;
        sums[m] += *v;
        ++report.contributing_queries[m];
      }
    }
  }
  for (const Metric m : metrics) {
    const auto count = report.contributing_queries[m];
    report.macro[m] = count == 0 ? 0.0 : sums[m] / static_cast<double>(count);
  }
  return report;
}

std::string ReportTsv(const MetricReport& report) {
  std::string out = "metric\tvalue\n";
  char buf[64];
  for (const Metric m : report.metrics) {
    std::snprintf(buf, sizeof buf, "%.17g", report.macro.at(m));
    out += MetricLabel(m, report.n, report.k) + "\t" + buf + "\n";
  }
  return out;
}

std::vector<RankedList> ParseRankedLists(const std::string& text, const std::string& source) {
  std::vector<RankedList> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const auto line = detail::StripCr(std::string_view(text).substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (detail::Trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RankedList list;
      list.query_id = j.at("query_id").get<std::string>();
      list.candidates = j.at("candidates").get<std::vector<std::string>>();
      for (const auto& r : j.at("relevant")) list.relevant.insert(r.get<std::string>());
      if (j.contains("universe_size") && !j["universe_size"].is_null()) {
        list.universe_size = j["universe_size"].get<std::size_t>();
      }
      list.Validate();
      out.push_back(std::move(list));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(source, line_no, e.what());
    } catch (const Error& e) {
      throw FormatError(source, line_no, e.what());
    }
  }
  return out;
}

}  // namespace hypochain::metrics
