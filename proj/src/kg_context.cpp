#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "hypochain/error.hpp"
#include "hypochain/llm_gateway.hpp"
#include "tokenize.hpp"

namespace hypochain::llm {

namespace {

constexpr std::size_t kMaxNgram = 4;

// Greedy longest-match of token n-grams against entity names.
std::vector<std::string> MatchEntities(std::string_view query,
                                       const kg::KnowledgeGraph& g) {
  const auto tokens = detail::Tokenize(query);
  std::vector<std::string> seeds;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t consumed = 1;
    for (std::size_t n = std::min(kMaxNgram, tokens.size() - i); n >= 1; --n) {
      if (n == 1 && detail::IsStopword(detail::Lowercase(tokens[i]))) break;
      std::string phrase = tokens[i];
      for (std::size_t k = 1; k < n; ++k) phrase += " " + tokens[i + k];
      std::optional<std::string> id;
      try {
        id = g.ResolveName(phrase);
      } catch (const Error&) {
        id.reset();  // ambiguous names are not used as seeds
      }
      if (id) {
        if (std::find(seeds.begin(), seeds.end(), *id) == seeds.end()) {
          seeds.push_back(*id);
        }
        consumed = n;
        break;
      }
    }
    i += consumed;
  }
  return seeds;
}

}  // namespace

KgContext AssembleKgContext(std::string_view query, const kg::KnowledgeGraph& g,
                            int hops, std::size_t cap) {
  KgContext ctx;
  ctx.seeds = MatchEntities(query, g);

  // triplet -> degree of the entity it reached
  std::map<kg::Triplet, std::size_t> found;
  std::unordered_set<std::string> visited(ctx.seeds.begin(), ctx.seeds.end());
  std::vector<std::string> frontier = ctx.seeds;
  for (int step = 0; step < hops && !frontier.empty(); ++step) {
    std::vector<std::string> next;
    for (const auto& id : frontier) {
      for (const auto& n : g.neighbors(id, kg::Direction::kBoth)) {
        kg::Triplet t = n.direction == kg::Direction::kOut
                            ? kg::Triplet{id, n.relation, n.entity->id}
                            : kg::Triplet{n.entity->id, n.relation, id};
        const std::size_t deg = g.degree(n.entity->id);
        auto [it, inserted] = found.emplace(std::move(t), deg);
        if (!inserted) it->second = std::max(it->second, deg);
        if (visited.insert(n.entity->id).second) next.push_back(n.entity->id);
      }
    }
    frontier = std::move(next);
  }

  std::vector<std::pair<kg::Triplet, std::size_t>> ranked(found.begin(), found.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > cap) ranked.resize(cap);
  for (auto& [t, deg] : ranked) {
    ctx.text += g.entity(t.head).name + " —" + t.relation + "→ " +
                g.entity(t.tail).name + "\n";
    ctx.cited.push_back(std::move(t));
  }
  return ctx;
}

std::string AssembleVectorContext(std::string_view query, const kg::KnowledgeGraph& g,
                                  std::size_t top_k) {
  std::unordered_set<std::string> terms;
  for (const auto& t : detail::Tokenize(query)) {
    auto lower = detail::Lowercase(t);
    if (lower.size() >= 3 && !detail::IsStopword(lower)) terms.insert(std::move(lower));
  }
  if (terms.empty() || top_k == 0) return {};

  std::vector<std::pair<std::size_t, const kg::Entity*>> scored;
  for (const auto& e : g.entities()) {
    if (e.description.empty()) continue;
    std::size_t score = 0;
    for (const auto& t : detail::Tokenize(e.description)) {
      if (terms.count(detail::Lowercase(t))) ++score;
    }
    if (score > 0) scored.emplace_back(score, &e);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->id < b.second->id;
  });
  if (scored.size() > top_k) scored.resize(top_k);
  std::string out;
  for (const auto& [score, e] : scored) {
    out += "- " + e->name + " (" + e->category + "): " + e->description + "\n";
  }
  return out;
}

}  // namespace hypochain::llm
