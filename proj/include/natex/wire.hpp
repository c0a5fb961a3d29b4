#pragma once

#include "natex/dataset.hpp"
#include "natex/session.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace natex {

using Json = nlohmann::ordered_json;

// Rounds to 6 significant digits; used for embedding coordinates on the wire.
double quantize6(double v);

Json fit_to_json(const RegressionFit& fit);
Json summary_to_json(const ColumnSummary& summary);

// The snapshot document shared by the HTTP API and the CLI report.
Json snapshot_to_json(const AnalysisSnapshot& snapshot, std::uint64_t version);

// Columns with kinds and roles.
Json schema_to_json(const Dataset& ds);

// Recomputes the ATE from the document's own clusters and contributions.
// Returns an empty string when consistent, else the first discrepancy.
std::string check_snapshot_json(const Json& doc);

} // namespace natex
