#pragma once

// JSON wire formats shared by the HTTP service, the CLI and session logs.
// Decoders throw contract errors that name the offending field.

#include <json.hpp>

#include "hypochain/chain_engine.hpp"
#include "hypochain/geometry.hpp"
#include "hypochain/kg_store.hpp"
#include "hypochain/layout_engine.hpp"
#include "hypochain/metrics.hpp"
#include "hypochain/prediction_store.hpp"

namespace hypochain::wire {

using nlohmann::json;

json EntityJson(const kg::Entity& e);
json TripletJson(const kg::Triplet& t);
kg::Triplet TripletFromJson(const json& j);

json PathJson(const predictions::InterpretativePath& path);
json RecordJson(const predictions::PredictionRecord& r, bool starred,
                std::optional<int> display_rank = std::nullopt);

predictions::PredictionFilter FilterFromJson(const json& j);
predictions::SortKey SortKeyFromJson(const json& j);

std::vector<chain::PositionInput> PositionsFromJson(const json& positions);
json ChainJson(const chain::HypothesisChain& c);
chain::HypothesisChain ChainFromJson(const json& j);

/// Counts keyed by mask string; `masks` (one string per record) only when
/// requested since it grows with the prediction set.
json ReportJson(const chain::ChainMatchReport& r, bool include_masks);

geometry::Polygon PolygonFromJson(const json& j);
json PolygonJson(const geometry::Polygon& p);
json LayerJson(const layout::LayerLayout& layer);
json StackJson(const layout::StackedLayout& stack);

metrics::RankedList RankedListFromJson(const json& j);
json MetricReportJson(const metrics::MetricReport& r);

/// Typed field access with contract errors naming the key.
const json& Field(const json& j, const char* key);
std::string StringField(const json& j, const char* key);
std::optional<std::string> OptionalString(const json& j, const char* key);

}  // namespace hypochain::wire
