#pragma once

#include "natex/dataset.hpp"
#include "natex/embed.hpp"

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace natex {

struct Merge {
    std::size_t a = 0; // smaller node id
    std::size_t b = 0;
    double height = 0.0;

    friend bool operator==(const Merge&, const Merge&) = default;
};

// Leaves are 0..n_leaves-1; merge s creates node n_leaves + s.
struct Dendrogram {
    std::size_t n_leaves = 0;
    std::vector<Merge> merges;
    // Depth-first leaf order (a before b). Every node's leaves occupy
    // leaf_order[node_start[node], node_start[node] + node_size[node]).
    std::vector<std::size_t> leaf_order;
    std::vector<std::size_t> node_start;
    std::vector<std::size_t> node_size;
    std::vector<std::size_t> node_min_leaf;
};

// Fills leaf_order and the per-node index from n_leaves and merges.
void index_dendrogram(Dendrogram& dendrogram);

// labels[i] is the cluster of leaf i. Clusters are numbered by their smallest
// leaf, which is the smallest row id when leaves are in row-id order.
struct ClusterAssignment {
    std::size_t k = 0;
    std::vector<int> labels;
    std::vector<std::size_t> sizes;

    friend bool operator==(const ClusterAssignment&, const ClusterAssignment&) = default;
};

// Ward-linkage agglomeration. Heights are Ward distances
// sqrt(2 |A||B| / (|A|+|B|)) * |c_A - c_B|. Equal costs merge the pair with
// the lexicographically smallest (min id, max id).
Dendrogram build_dendrogram(std::span<const Point2> points);
inline Dendrogram build_dendrogram(const Embedding2D& emb) { return build_dendrogram(emb.coords); }

// Undoes the top k-1 merges. Linear in n_leaves.
ClusterAssignment cut(const Dendrogram& dendrogram, std::size_t k);

// "n <n_leaves>" followed by one "a b height" line per merge.
void write_dendrogram(std::ostream& out, const Dendrogram& dendrogram);
Dendrogram read_dendrogram(std::istream& in);

struct ColumnSummary {
    static constexpr std::size_t kBins = 10;

    bool empty = true;
    std::size_t count = 0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double mean = 0.0;
    std::array<std::size_t, kBins> hist{};
};

// Linear-interpolated quantile (numpy's default); `sorted` must be ascending.
double quantile(std::span<const double> sorted, double q);

// Summary of one column over `values`. Histogram bins span [lo, hi], which
// default to the values' own range.
ColumnSummary summarize(std::vector<double> values, std::optional<std::pair<double, double>> range = std::nullopt);

// Per-column summaries over the non-excluded members of `cluster_id`.
std::vector<ColumnSummary> covariate_profile(const Dataset& ds, std::span<const RowId> row_ids,
                                             const ClusterAssignment& assignment, int cluster_id,
                                             std::span<const std::size_t> columns, const RowMask& mask = {});

} // namespace natex
