#pragma once

#include "natex/dataset.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace natex {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

enum class EmbedMethod { neighbor_graph, pca };

std::string_view to_string(EmbedMethod method);
EmbedMethod parse_embed_method(std::string_view text);

// Standardized confounder profile of each analysis row, row-major.
struct FeatureMatrix {
    std::vector<RowId> row_ids;
    std::vector<std::string> feature_names;
    std::vector<double> values;

    std::size_t rows() const { return row_ids.size(); }
    std::size_t dims() const { return feature_names.size(); }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * dims(), dims()}; }
};

struct Embedding2D {
    std::vector<RowId> row_ids;
    std::vector<Point2> coords;
    std::uint64_t seed = 0;
    EmbedMethod method = EmbedMethod::neighbor_graph;
    // Set when the neighbor-graph layout was requested but the PCA projection was used.
    bool fell_back = false;
    std::string warning;
};

struct NeighborGraphParams {
    std::size_t neighbors = 15;
    int epochs = 200;
    double min_dist = 0.1;
    double spread = 1.0;
    int negative_sample_rate = 5;
    double learning_rate = 1.0;
};

inline constexpr std::size_t kMinFeatureRows = 10;
inline constexpr std::uint64_t kDefaultSeed = 42;

// Every analysis column except the chosen treatment and outcome, over rows
// complete in those columns, z-scored (population variance). Constant
// columns are dropped.
FeatureMatrix build_features(const Dataset& ds, std::string_view treatment, std::string_view outcome);

// Pure function of (features, seed, method). Rows are processed in row-id
// order so permuting the input permutes the output identically.
Embedding2D embed_2d(const FeatureMatrix& fm, std::uint64_t seed, EmbedMethod method,
                     const NeighborGraphParams& params = {});

// Projection onto the top two principal axes, each axis sign-normalized so
// its largest-magnitude loading is positive.
std::vector<Point2> pca_project(const FeatureMatrix& fm);

// (a, b) of the low-dimensional similarity 1 / (1 + a d^{2b}) fitted to the
// min_dist/spread target curve by Levenberg-Marquardt.
std::pair<double, double> fit_similarity_curve(double min_dist, double spread);

// Cache file for one embedding: two comment lines of parameters, a
// "row_id,x,y" header, then one shortest-round-trip row per point.
struct EmbeddingKey {
    std::uint64_t dataset_fingerprint = 0;
    std::string treatment;
    std::string outcome;
    std::uint64_t seed = kDefaultSeed;
    EmbedMethod method = EmbedMethod::neighbor_graph;

    std::string file_name() const;
    friend bool operator==(const EmbeddingKey&, const EmbeddingKey&) = default;
};

void write_embedding(std::ostream& out, const EmbeddingKey& key, const Embedding2D& emb);
// Returns nullopt when the stream does not hold an embedding for `key`.
std::optional<Embedding2D> read_embedding(std::istream& in, const EmbeddingKey& key);

} // namespace natex
