#pragma once

#include "natex/cluster.hpp"
#include "natex/dataset.hpp"
#include "natex/effects.hpp"
#include "natex/embed.hpp"
#include "natex/regress.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace natex {

inline constexpr std::size_t kDefaultClusters = 10;
inline constexpr std::size_t kDefaultDisplayedCovariates = 5;
inline constexpr std::size_t kUndoDepth = 50;

struct ClusterMeta {
    std::string name;
    std::string color; // "#rrggbb"

    friend bool operator==(const ClusterMeta&, const ClusterMeta&) = default;
};

ClusterMeta default_cluster_meta(int cluster_id);
// Accepts "rrggbb" or "#rrggbb" in any case; returns "#rrggbb" lowercase.
std::string normalize_color(std::string_view literal);

struct SessionConfig {
    std::size_t k = kDefaultClusters;
    std::uint64_t seed = kDefaultSeed;
    EmbedMethod method = EmbedMethod::neighbor_graph;
    NeighborGraphParams layout;
    // When set, embeddings are read from and written to this directory.
    std::optional<std::filesystem::path> cache_dir;
};

struct SessionState {
    std::string treatment;
    std::string outcome;
    std::size_t k = kDefaultClusters;
    std::uint64_t seed = kDefaultSeed;
    EmbedMethod method = EmbedMethod::neighbor_graph;
    SelectionSet selection;
    bool selection_overridden = false;
    RowMask mask;
    // Renamed/recolored clusters by canonical id; others use the defaults.
    std::map<int, ClusterMeta> cluster_meta;
    std::vector<std::string> covariate_display;
    bool covariate_display_overridden = false;
};

struct AxisRanges {
    double t_min = 0.0, t_max = 0.0;
    double o_min = 0.0, o_max = 0.0;
};

// Everything the three views render from. Immutable once published.
struct AnalysisSnapshot {
    std::string treatment;
    std::string outcome;
    std::size_t k = 0;
    std::uint64_t seed = 0;
    EmbedMethod method = EmbedMethod::neighbor_graph;
    bool embedding_fell_back = false;

    // Analysis rows in row-id order, with their embedding and raw values.
    std::vector<RowId> row_ids;
    std::vector<Point2> coords;
    std::vector<double> t_values;
    std::vector<double> o_values;

    ClusterAssignment assignment;
    std::vector<RegressionFit> fits;
    RegressionFit overall;
    SelectionSet selection;
    AteResult ate;
    SimpsonReport simpson;
    std::vector<ClusterMeta> cluster_meta;

    std::vector<std::string> covariate_display;
    // [display column][cluster]
    std::vector<std::vector<ColumnSummary>> covariate_summaries;

    std::vector<RowId> excluded_ids;
    AxisRanges axes;
    std::vector<std::string> warnings;
};

// True when the snapshot's ATE recomputes bit-exactly from its own fits,
// sizes and selection.
bool is_consistent(const AnalysisSnapshot& snapshot);

// One analysis session over an immutable dataset. Every action either
// returns a new snapshot or throws and leaves the state unchanged. Not
// thread-safe: callers serialize actions.
class Session {
public:
    struct Counters {
        std::size_t embeddings_built = 0;
        std::size_t embeddings_loaded = 0;
        std::size_t dendrograms_built = 0;
        std::size_t fits_computed = 0;
    };

    using SnapshotPtr = std::shared_ptr<const AnalysisSnapshot>;

    Session(std::shared_ptr<const Dataset> dataset, const std::string& treatment, const std::string& outcome,
            SessionConfig config = {});

    const Dataset& dataset() const { return *dataset_; }
    const SessionState& state() const { return state_; }
    const SnapshotPtr& snapshot() const { return snapshot_; }
    const Counters& counters() const { return counters_; }
    std::size_t undo_depth() const { return history_.size(); }

    SnapshotPtr set_variables(const std::string& treatment, const std::string& outcome);
    SnapshotPtr set_k(std::size_t k);
    SnapshotPtr toggle_cluster(int cluster_id);
    SnapshotPtr set_selection(const SelectionSet& ids);
    SnapshotPtr exclude(std::span<const RowId> row_ids);
    SnapshotPtr include_all();
    SnapshotPtr rename_cluster(int cluster_id, const std::string& name, const std::string& color);
    SnapshotPtr set_covariate_display(const std::vector<std::string>& names);
    // Restores the state before the last successful action.
    SnapshotPtr undo();

private:
    struct Analysis {
        FeatureMatrix features;
        Embedding2D embedding;
        Dendrogram dendrogram;
        std::size_t treatment_col = 0;
        std::size_t outcome_col = 0;
    };
    using AnalysisKey = std::tuple<std::string, std::string, std::uint64_t, EmbedMethod>;

    const Analysis& analysis_for(const std::string& treatment, const std::string& outcome);
    Embedding2D embedding_for(const FeatureMatrix& fm, const std::string& treatment, const std::string& outcome);
    void validate_variables(const std::string& treatment, const std::string& outcome) const;

    // Builds the snapshot for `next`. `previous`, when given, must share the
    // analysis and cut; fits are then recomputed only for clusters whose
    // membership changed between the two masks.
    SnapshotPtr compute(SessionState& next, const Analysis& analysis, const AnalysisSnapshot* previous,
                        std::vector<std::string> warnings = {});
    SnapshotPtr commit(SessionState next, SnapshotPtr snapshot);
    const Analysis& current_analysis();

    std::shared_ptr<const Dataset> dataset_;
    SessionConfig config_;
    SessionState state_;
    SnapshotPtr snapshot_;
    std::map<AnalysisKey, Analysis> analyses_;
    std::deque<SessionState> history_;
    Counters counters_;
};

} // namespace natex
