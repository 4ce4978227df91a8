// Operator entry points: ingest, serve, match, eval, openapi.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>

#include "hypochain/api_service.hpp"
#include "hypochain/chain_engine.hpp"
#include "hypochain/error.hpp"
#include "hypochain/kg_store.hpp"
#include "hypochain/layout_engine.hpp"
#include "hypochain/metrics.hpp"
#include "hypochain/prediction_store.hpp"
#include "hypochain/wire.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hypochain;

namespace {

constexpr int kExitFormat = 2;
constexpr int kExitContract = 3;
constexpr int kExitBackend = 4;

int ExitCode(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kFormat:
      return kExitFormat;
    case ErrorCode::kContract:
    case ErrorCode::kNotFound:
    case ErrorCode::kNotReady:
      return kExitContract;
    case ErrorCode::kBackend:
    case ErrorCode::kTimeout:
      return kExitBackend;
  }
  return 1;
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFormat, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json ReadJsonFile(const fs::path& path) {
  try {
    return json::parse(ReadFile(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": invalid JSON", e.what());
  }
}

void WriteFile(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kFormat, "cannot write " + path.string());
  out << text;
}

struct IngestArgs {
  std::string entities, triplets, predictions, embedding, out, id = "default";
};

int Ingest(const IngestArgs& a) {
  if (!std::regex_match(a.id, std::regex("[A-Za-z0-9_.-]{1,128}"))) {
    throw ContractError("invalid dataset id \"" + a.id + "\"");
  }
  auto g = kg::KnowledgeGraph::Load(a.entities, a.triplets, &std::cerr);
  std::size_t predictions = 0;
  std::size_t points = 0;
  if (!a.predictions.empty()) {
    predictions = predictions::PredictionStore::Load(a.predictions, g, a.id, &std::cerr).size();
  }
  if (!a.embedding.empty()) points = layout::LoadEmbedding(a.embedding, &g).size();

  const fs::path dir = fs::path(a.out) / "datasets" / a.id;
  fs::create_directories(dir);
  json descriptor = {{"id", a.id}, {"entities", "entities.tsv"}, {"triplets", "triplets.tsv"}};
  fs::copy_file(a.entities, dir / "entities.tsv", fs::copy_options::overwrite_existing);
  fs::copy_file(a.triplets, dir / "triplets.tsv", fs::copy_options::overwrite_existing);
  if (!a.predictions.empty()) {
    fs::copy_file(a.predictions, dir / "predictions.jsonl", fs::copy_options::overwrite_existing);
    descriptor["predictions"] = "predictions.jsonl";
  }
  if (!a.embedding.empty()) {
    fs::copy_file(a.embedding, dir / "embedding.csv", fs::copy_options::overwrite_existing);
    descriptor["embedding"] = "embedding.csv";
  }
  api::WriteDescriptor(dir, descriptor);

  const auto c = g.counts();
  std::cout << "dataset\t" << a.id << "\n"
            << "entities\t" << c.entities << "\n"
            << "triplets\t" << c.triplets << "\n"
            << "relations\t" << c.relations << "\n"
            << "duplicates_skipped\t" << c.duplicates_skipped << "\n"
            << "predictions\t" << predictions << "\n"
            << "embedding_points\t" << points << "\n";
  return 0;
}

struct ServeArgs {
  std::string data = ".", listen = "127.0.0.1:8080", cors = "*";
  bool mock = false;
};

int Serve(const ServeArgs& a) {
  const auto colon = a.listen.rfind(':');
  if (colon == std::string::npos) throw ContractError("--listen expects HOST:PORT");
  const std::string host = a.listen.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(a.listen.substr(colon + 1));
  } catch (const std::exception&) {
    throw ContractError("--listen expects HOST:PORT");
  }
  auto settings = llm::SettingsFromEnvironment();
  if (a.mock) settings.mock = true;
  api::ServiceOptions options;
  options.data_dir = a.data;
  options.autoload = true;
  options.cors_origin = a.cors;
  api::Service service(options, llm::MakeBackend(settings), settings.timeout);
  std::cerr << "listening on " << host << ":" << port << " ("
            << (settings.mock ? "mock" : "http") << " LLM backend)\n";
  if (!api::Serve(service, host, port)) {
    throw Error(ErrorCode::kBackend, "cannot listen on " + a.listen);
  }
  return 0;
}

struct MatchArgs {
  std::string chain, dataset, out, data = ".";
  bool require_all = true;
};

int Match(const MatchArgs& a) {
  const fs::path dir = fs::path(a.data) / "datasets" / a.dataset;
  if (!fs::exists(dir / "dataset.json")) {
    throw NotFoundError("dataset \"" + a.dataset + "\" is not registered under " + a.data);
  }
  const auto d = ReadJsonFile(dir / "dataset.json");
  const auto resolve = [&](const std::string& p) {
    return fs::path(p).is_absolute() ? fs::path(p) : dir / p;
  };
  const auto predictions_file = wire::OptionalString(d, "predictions");
  if (!predictions_file) throw ContractError("dataset \"" + a.dataset + "\" has no predictions");

  const auto chain = wire::ChainFromJson(ReadJsonFile(a.chain));
  auto g = kg::KnowledgeGraph::Load(resolve(wire::StringField(d, "entities")),
                                    resolve(wire::StringField(d, "triplets")), &std::cerr);
  auto store = predictions::PredictionStore::Load(resolve(*predictions_file), g, a.dataset,
                                                  &std::cerr);
  const auto report = chain::MatchChain(chain, store, g);
  store.mark_alignment(report, a.require_all);
  auto j = wire::ReportJson(report, true);
  j["starred"] = store.starred_ids();
  WriteFile(a.out, j.dump(2) + "\n");
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "total\t" << report.total() << "\n"
            << "matched\t" << report.matched() << "\n";
  for (chain::Mask m = 1; m <= chain::kFullMask; ++m) {
    std::cout << chain::MaskString(m) << "\t" << report.exclusive[m] << "\n";
  }
  return 0;
}

struct EvalArgs {
  std::string lists, metrics = "ndcg,precision,recall,mrr,mpr,hit";
  int n = metrics::kDefaultCutoff;
  std::optional<int> k;
};

int Eval(const EvalArgs& a) {
  const auto lists = metrics::ParseRankedLists(ReadFile(a.lists), a.lists);
  std::vector<metrics::Metric> which;
  std::stringstream ss(a.metrics);
  for (std::string name; std::getline(ss, name, ',');) {
    if (!name.empty()) which.push_back(metrics::ParseMetric(name));
  }
  if (which.empty()) throw ContractError("--metrics is empty");
  const auto report = metrics::Evaluate(lists, which, a.n, a.k.value_or(a.n));
  std::cout << metrics::ReportTsv(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hypothesis-chain workbench: datasets, retrieval, metrics and the HTTP service"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate a dataset and register it");
  ingest_cmd->add_option("--entities", ingest.entities, "Entity TSV (id, name, category, description)")
      ->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--triplets", ingest.triplets, "Triplet TSV (head, relation, tail)")
      ->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--predictions", ingest.predictions, "Predictions JSON lines")
      ->check(CLI::ExistingFile);
  ingest_cmd->add_option("--embedding", ingest.embedding, "Embedding CSV (entity_id,x,y)")
      ->check(CLI::ExistingFile);
  ingest_cmd->add_option("--out", ingest.out, "Data directory to register the dataset in")
      ->required();
  ingest_cmd->add_option("--id", ingest.id, "Dataset id")->capture_default_str();

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--data", serve.data, "Data directory")->required();
  serve_cmd->add_option("--listen", serve.listen, "HOST:PORT")->capture_default_str();
  serve_cmd->add_flag("--mock-llm", serve.mock, "Use the offline deterministic LLM backend");
  serve_cmd->add_option("--cors-origin", serve.cors, "Allowed CORS origin")->capture_default_str();

  MatchArgs match;
  auto* match_cmd = app.add_subcommand("match", "Match a hypothesis chain against predictions");
  match_cmd->add_option("--chain", match.chain, "Chain JSON with resolved entities")
      ->required()->check(CLI::ExistingFile);
  match_cmd->add_option("--dataset", match.dataset, "Dataset id")->required();
  match_cmd->add_option("--out", match.out, "Report JSON output")->required();
  match_cmd->add_option("--data", match.data, "Data directory")->capture_default_str();
  match_cmd->add_flag("!--any-hypothesis", match.require_all,
                      "Star records satisfying any hypothesis instead of all");
  match_cmd->add_flag("--mock-llm", "Accepted for symmetry; matching never calls the LLM");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Ranking metrics as a TSV report");
  eval_cmd->add_option("--ranked-lists", eval.lists, "Ranked lists JSON lines")
      ->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--metrics", eval.metrics, "Comma-separated metric names")
      ->capture_default_str();
  eval_cmd->add_option("--n", eval.n, "Cutoff for NDCG, precision and recall")
      ->capture_default_str();
  eval_cmd->add_option("--k", eval.k, "Cutoff for Hit@K (defaults to --n)");

  std::string openapi_out;
  auto* openapi_cmd = app.add_subcommand("openapi", "Print or write the endpoint listing");
  openapi_cmd->add_option("--out", openapi_out, "Output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitContract;
  }

  try {
    if (*ingest_cmd) return Ingest(ingest);
    if (*serve_cmd) return Serve(serve);
    if (*match_cmd) return Match(match);
    if (*eval_cmd) return Eval(eval);
    if (*openapi_cmd) {
      const auto doc = api::OpenApiDocument().dump(2) + "\n";
      if (openapi_out.empty()) {
        std::cout << doc;
      } else {
        WriteFile(openapi_out, doc);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (!e.detail().empty()) std::cerr << "  " << e.detail() << "\n";
    return ExitCode(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
