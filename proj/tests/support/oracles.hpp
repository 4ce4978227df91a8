#pragma once

// Direct transcriptions of the definitions, written without the library's
// helpers so they can serve as reference values.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "hypochain/chain_engine.hpp"
#include "hypochain/geometry.hpp"
#include "hypochain/prediction_store.hpp"

namespace oracle {

inline double Dcg(const std::vector<int>& s, int n) {
  double sum = 0.0;
  for (int i = 1; i <= n && i <= static_cast<int>(s.size()); ++i) {
    sum += s[static_cast<std::size_t>(i - 1)] / std::log2(static_cast<double>(i) + 1.0);
  }
  return sum;
}

inline double Ndcg(const std::vector<int>& s, int total_relevant, int n) {
  if (total_relevant == 0) return 0.0;
  std::vector<int> ideal(static_cast<std::size_t>(total_relevant), 1);
  return Dcg(s, n) / Dcg(ideal, n);
}

inline int HitsInTop(const std::vector<int>& s, int n) {
  int hits = 0;
  for (int i = 0; i < n && i < static_cast<int>(s.size()); ++i) hits += s[static_cast<std::size_t>(i)];
  return hits;
}

inline double Precision(const std::vector<int>& s, int n) {
  return static_cast<double>(HitsInTop(s, n)) / n;
}

inline double Recall(const std::vector<int>& s, int total_relevant, int n) {
  return total_relevant == 0 ? 0.0 : static_cast<double>(HitsInTop(s, n)) / total_relevant;
}

inline double Mrr(const std::vector<int>& ranks) {
  double sum = 0.0;
  for (int r : ranks) sum += 1.0 / r;
  return sum / static_cast<double>(ranks.size());
}

inline double Mpr(const std::vector<std::pair<int, std::size_t>>& ranks) {
  double sum = 0.0;
  for (const auto& [r, u] : ranks) sum += 100.0 * (1.0 - (r - 1.0) / static_cast<double>(u));
  return sum / static_cast<double>(ranks.size());
}

inline double Hit(const std::vector<int>& ranks, int k) {
  int ok = 0;
  for (int r : ranks) ok += r <= k ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(ranks.size());
}

/// Satisfaction mask by linear scans over the position entity lists.
inline hypochain::chain::Mask MatchMask(const hypochain::predictions::PredictionRecord& r,
                                        const hypochain::chain::HypothesisChain& c) {
  hypochain::chain::Mask m = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    bool hit = false;
    for (const auto& e : c.positions[i].entities) {
      if (e.entity_id == r.path.hops[i].entity) hit = true;
    }
    if (hit && !c.positions[i].relation_labels.empty()) {
      const auto& labels = c.positions[i].relation_labels;
      hit = std::find(labels.begin(), labels.end(), r.path.hops[i].relation) != labels.end();
    }
    if (hit) m = static_cast<hypochain::chain::Mask>(m | (1u << i));
  }
  return m;
}

inline double Shoelace(const hypochain::geometry::Polygon& p) {
  double twice = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& a = p[i];
    const auto& b = p[(i + 1) % p.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) / 2.0;
}

/// Point in convex polygon (either orientation) by edge sign agreement;
/// points on an edge count as inside.
inline bool InConvex(const hypochain::geometry::Point& p, const hypochain::geometry::Polygon& poly) {
  int pos = 0;
  int neg = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if (cross > 0) ++pos;
    if (cross < 0) ++neg;
  }
  return pos == 0 || neg == 0;
}

/// Whether every hop uses the label, by counting the relation multiset.
inline bool AllHopsUse(const hypochain::predictions::InterpretativePath& p, const std::string& label) {
  int count = 0;
  for (const auto& h : p.hops) count += h.relation == label ? 1 : 0;
  return count == 3;
}

}  // namespace oracle
