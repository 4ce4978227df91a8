#include "synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

namespace testsupport {

using hypochain::kg::Entity;
using hypochain::kg::Triplet;

namespace {

const char* const kCategories[] = {"Gene", "Drug", "Disease", "Pathway"};
const char* const kPrefixes[] = {"GN", "DR", "DS", "PW"};
const char* const kWords[] = {"kinase",   "repair",   "signaling", "apoptosis", "membrane",
                              "receptor", "metabolic", "immune",   "transport", "synthesis"};

std::size_t Pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace

SyntheticDataset MakeSynthetic(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  SyntheticDataset d;
  d.relations = {"interacts_with", "treats", "regulates", "associated_with", "sl_gsg"};

  for (std::size_t i = 0; i < spec.entities; ++i) {
    Entity e;
    char id[16];
    std::snprintf(id, sizeof id, "E%03zu", i);
    e.id = id;
    e.category = kCategories[i % 4];
    e.name = std::string(kPrefixes[i % 4]) + std::to_string(i);
    e.description = std::string("a ") + kWords[Pick(rng, 10)] + " " + kWords[Pick(rng, 10)] +
                    " " + e.category;
    d.entities.push_back(std::move(e));
  }

  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  while (d.triplets.size() < spec.triplets) {
    const auto h = Pick(rng, spec.entities);
    const auto t = Pick(rng, spec.entities);
    const auto r = Pick(rng, d.relations.size());
    if (h == t || !seen.emplace(h, r, t).second) continue;
    d.triplets.push_back({d.entities[h].id, d.relations[r], d.entities[t].id});
  }

  // Disjoint position sets drawn from the non-head entities.
  std::vector<std::size_t> pool;
  for (std::size_t i = spec.heads; i < spec.entities; ++i) pool.push_back(i);
  std::shuffle(pool.begin(), pool.end(), rng);
  std::array<std::set<std::string>, 3> sets;
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t k = 0; k < spec.set_size; ++k) {
      const auto& id = d.entities[pool[p * spec.set_size + k]].id;
      d.position_sets[p].push_back(id);
      sets[p].insert(id);
    }
  }

  const std::size_t total = spec.heads * spec.records_per_head;
  std::vector<std::size_t> slots(total);
  for (std::size_t i = 0; i < total; ++i) slots[i] = i;
  std::shuffle(slots.begin(), slots.end(), rng);
  std::set<std::size_t> planted(slots.begin(), slots.begin() + static_cast<long>(spec.planted));
  d.planted.assign(planted.begin(), planted.end());

  std::ostringstream out;
  for (std::size_t h = 0; h < spec.heads; ++h) {
    std::set<std::string> tails;
    for (std::size_t rank = 1; rank <= spec.records_per_head; ++rank) {
      const std::size_t id = h * spec.records_per_head + rank - 1;
      std::array<std::string, 3> hop_entities;
      while (true) {
        for (std::size_t p = 0; p < 3; ++p) {
          hop_entities[p] = planted.count(id)
                                ? d.position_sets[p][Pick(rng, spec.set_size)]
                                : d.entities[Pick(rng, spec.entities)].id;
        }
        const bool aligned = sets[0].count(hop_entities[0]) && sets[1].count(hop_entities[1]) &&
                             sets[2].count(hop_entities[2]);
        if (aligned != static_cast<bool>(planted.count(id))) continue;
        if (hop_entities[2] == d.entities[h].id || tails.count(hop_entities[2])) continue;
        break;
      }
      tails.insert(hop_entities[2]);
      nlohmann::json path = nlohmann::json::array();
      for (std::size_t p = 0; p < 3; ++p) {
        path.push_back({{"relation", d.relations[Pick(rng, d.relations.size())]},
                        {"entity", hop_entities[p]},
                        {"weight", static_cast<double>(Pick(rng, 1001)) / 1000.0}});
      }
      nlohmann::json rec = {{"head", d.entities[h].id},
                            {"tail", hop_entities[2]},
                            {"score", 1.0 - 0.01 * static_cast<double>(rank)},
                            {"rank", rank},
                            {"path", std::move(path)}};
      out << rec.dump() << "\n";
    }
  }
  d.predictions_jsonl = out.str();
  return d;
}

hypochain::kg::KnowledgeGraph BuildGraph(const SyntheticDataset& d) {
  return hypochain::kg::KnowledgeGraph::FromRows(d.entities, d.triplets);
}

hypochain::chain::HypothesisChain PlantedChain(const SyntheticDataset& d) {
  using namespace hypochain::chain;
  auto c = CreateChain("planted", {{"first hop target", "", {}},
                                   {"second hop target", "", {}},
                                   {"third hop target", "", {}}});
  for (std::size_t p = 0; p < 3; ++p) {
    int rank = 1;
    for (const auto& id : d.position_sets[p]) {
      c.positions[p].entities.push_back({id, id, "", "planted", rank++});
    }
  }
  return c;
}

std::string EntityTsv(const std::vector<Entity>& entities) {
  std::string out = "id\tname\tcategory\tdescription\n";
  for (const auto& e : entities) {
    out += e.id + "\t" + e.name + "\t" + e.category + "\t" + e.description + "\n";
  }
  return out;
}

std::string TripletTsv(const std::vector<Triplet>& triplets) {
  std::string out = "head\trelation\ttail\n";
  for (const auto& t : triplets) out += t.head + "\t" + t.relation + "\t" + t.tail + "\n";
  return out;
}

void WriteDataset(const SyntheticDataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  WriteText(dir / "entities.tsv", EntityTsv(d.entities));
  WriteText(dir / "triplets.tsv", TripletTsv(d.triplets));
  WriteText(dir / "predictions.jsonl", d.predictions_jsonl);
  std::string csv = "entity_id,x,y\n";
  for (std::size_t i = 0; i < d.entities.size(); ++i) {
    csv += d.entities[i].id + "," + std::to_string(static_cast<double>(i % 10) + 0.5) + "," +
           std::to_string(static_cast<double>(i / 10) + 0.5) + "\n";
  }
  WriteText(dir / "embedding.csv", csv);
}

std::filesystem::path FixtureDir() { return HYPOCHAIN_FIXTURE_DIR; }

std::filesystem::path TempDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("hypochain-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string ReadText(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteText(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace testsupport
