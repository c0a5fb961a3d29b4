#pragma once

#include "natex/dataset.hpp"
#include "natex/session.hpp"
#include "natex/wire.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace natex {

// How a raw table becomes an analysis dataset: load options plus roles.
struct PrepareOptions {
    std::vector<std::string> outcomes;
    std::vector<std::string> treatments;
    std::vector<std::string> exclude_columns;
    std::map<std::string, ColumnKind, std::less<>> kinds;
    char delimiter = ',';
};

Dataset load_prepared(const std::filesystem::path& path, const PrepareOptions& options);
Dataset prepare(const Dataset& raw, const PrepareOptions& options);

struct AnalyzeRequest {
    std::string treatment;
    std::string outcome;
    std::size_t k = kDefaultClusters;
    std::uint64_t seed = kDefaultSeed;
    EmbedMethod method = EmbedMethod::neighbor_graph;
    std::vector<RowId> exclude_ids;
    // nullopt applies the default selection.
    std::optional<SelectionSet> select;
    std::optional<std::filesystem::path> cache_dir;
};

struct AnalyzeResult {
    std::unique_ptr<Session> session;
    // Matches the version a server session reaches after the same actions.
    std::uint64_t version = 1;
};

// Session creation, then exclusion, then selection: the same action order a
// client would send to the server.
AnalyzeResult run_analysis(std::shared_ptr<const Dataset> dataset, const AnalyzeRequest& request);

Json make_report(const AnalysisSnapshot& snapshot, std::uint64_t version, const std::string& input,
                 const std::string& timestamp);

// Static ATE view: points, per-cluster fit lines, dashed overall fit.
std::string render_svg(const AnalysisSnapshot& snapshot);

} // namespace natex
