#pragma once

#include <json.hpp>

#include "qfmqtt/baselines.hpp"
#include "qfmqtt/dgp.hpp"
#include "qfmqtt/inference.hpp"
#include "qfmqtt/montecarlo.hpp"
#include "qfmqtt/qfm.hpp"
#include "qfmqtt/qtt.hpp"

namespace qfmqtt {

using Json = nlohmann::ordered_json;

/// Non-finite numbers serialize as null.
Json to_json(const QttEstimate& estimate);
Json to_json(const BlockPlan& plan);
Json to_json(const BootstrapResult& result, bool include_replicates = false);
Json to_json(const RankSelection& selection);
Json to_json(const QfmFit& fit);
Json to_json(const DgpSpec& spec);
Json to_json(const McOptions& options);
Json to_json(const McRecord& record);
Json to_json(const McCell& cell);
/// Options, cells and runtime; records are written separately as JSON lines.
Json to_json(const McReport& report);

}  // namespace qfmqtt
