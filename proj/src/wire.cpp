#include "natex/wire.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace natex {

namespace {

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

} // namespace

double quantize6(double v) {
    if (!std::isfinite(v)) return v;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::strtod(buf, nullptr);
}

Json fit_to_json(const RegressionFit& fit) {
    return Json{{"slope", number_or_null(fit.slope)},
                {"intercept", number_or_null(fit.intercept)},
                {"stderr", number_or_null(fit.stderr_slope)},
                {"t", number_or_null(fit.t_stat)},
                {"p", number_or_null(fit.p_value)},
                {"r2", number_or_null(fit.r2)},
                {"n", fit.n},
                {"defined", fit.defined}};
}

Json summary_to_json(const ColumnSummary& s) {
    if (s.empty) return nullptr;
    return Json{{"min", s.min},   {"q1", s.q1},     {"median", s.median}, {"q3", s.q3},
                {"max", s.max},   {"mean", s.mean}, {"count", s.count},   {"hist", s.hist}};
}

Json snapshot_to_json(const AnalysisSnapshot& s, std::uint64_t version) {
    Json doc;
    doc["version"] = version;
    doc["treatment"] = s.treatment;
    doc["outcome"] = s.outcome;
    doc["k"] = s.k;
    doc["seed"] = s.seed;
    doc["method"] = std::string(to_string(s.method));
    doc["embedding_fell_back"] = s.embedding_fell_back;
    doc["excluded_ids"] = s.excluded_ids;

    std::vector<std::vector<std::size_t>> members(s.k);
    for (std::size_t i = 0; i < s.assignment.labels.size(); ++i) {
        members[static_cast<std::size_t>(s.assignment.labels[i])].push_back(i);
    }
    Json clusters = Json::array();
    for (std::size_t c = 0; c < s.k; ++c) {
        const int id = static_cast<int>(c);
        clusters.push_back(Json{{"id", id},
                                {"name", s.cluster_meta[c].name},
                                {"color", s.cluster_meta[c].color},
                                {"size", s.assignment.sizes[c]},
                                {"coords_idx", members[c]},
                                {"fit", fit_to_json(s.fits[c])},
                                {"selected", s.selection.count(id) != 0}});
    }
    doc["clusters"] = std::move(clusters);

    Json points = Json::array();
    for (std::size_t i = 0; i < s.row_ids.size(); ++i) {
        points.push_back(Json{{"row_id", s.row_ids[i]},
                              {"x", quantize6(s.coords[i].x)},
                              {"y", quantize6(s.coords[i].y)},
                              {"t_value", s.t_values[i]},
                              {"o_value", s.o_values[i]}});
    }
    doc["points"] = std::move(points);
    doc["overall_fit"] = fit_to_json(s.overall);

    Json contributions = Json::array();
    for (const auto& c : s.ate.contributions) contributions.push_back(Json{{"cluster", c.cluster}, {"n", c.n}, {"b", c.b}});
    doc["ate"] = Json{{"value", number_or_null(s.ate.ate)},
                      {"n_total", s.ate.n_total},
                      {"defined", s.ate.defined},
                      {"contributions", std::move(contributions)}};
    doc["simpson"] = Json{{"overall_slope", number_or_null(s.simpson.overall_slope)}, {"flagged", s.simpson.flagged}};
    doc["covariate_display"] = s.covariate_display;

    Json summaries = Json::object();
    for (std::size_t d = 0; d < s.covariate_display.size(); ++d) {
        Json per_cluster = Json::array();
        for (const auto& summary : s.covariate_summaries[d]) per_cluster.push_back(summary_to_json(summary));
        summaries[s.covariate_display[d]] = std::move(per_cluster);
    }
    doc["covariate_summaries"] = std::move(summaries);
    doc["axes"] = Json{{"t_min", s.axes.t_min}, {"t_max", s.axes.t_max}, {"o_min", s.axes.o_min}, {"o_max", s.axes.o_max}};
    doc["warnings"] = s.warnings;
    return doc;
}

Json schema_to_json(const Dataset& ds) {
    Json columns = Json::array();
    for (const auto& col : ds.columns()) {
        columns.push_back(Json{{"name", col.name},
                               {"kind", std::string(to_string(col.kind))},
                               {"role", std::string(to_string(col.role))}});
    }
    return Json{{"name", ds.name()}, {"rows", ds.row_count()}, {"columns", std::move(columns)}};
}

std::string check_snapshot_json(const Json& doc) {
    try {
        const auto& clusters = doc.at("clusters");
        const auto& ate_doc = doc.at("ate");
        std::vector<Contribution> contributions;
        std::size_t total = 0;
        for (const auto& c : ate_doc.at("contributions")) {
            const int id = c.at("cluster").get<int>();
            if (id < 0 || static_cast<std::size_t>(id) >= clusters.size()) return "contribution from unknown cluster";
            const auto& cluster = clusters[static_cast<std::size_t>(id)];
            const auto& fit = cluster.at("fit");
            if (!cluster.at("selected").get<bool>()) return "contribution from unselected cluster";
            if (!fit.at("defined").get<bool>()) return "contribution from undefined fit";
            if (fit.at("slope").get<double>() != c.at("b").get<double>()) return "contribution slope differs from fit";
            if (fit.at("n").get<std::size_t>() != c.at("n").get<std::size_t>()) return "contribution size differs from fit";
            contributions.push_back({id, c.at("n").get<std::size_t>(), c.at("b").get<double>()});
            total += contributions.back().n;
        }
        std::size_t selected = 0;
        for (const auto& cluster : clusters) selected += cluster.at("selected").get<bool>() ? 1 : 0;
        if (selected != contributions.size()) return "selected clusters without contributions";
        if (total != ate_doc.at("n_total").get<std::size_t>()) return "n_total differs from contributions";
        const bool defined = ate_doc.at("defined").get<bool>();
        if (defined != !contributions.empty()) return "defined flag inconsistent";
        if (defined && weighted_mean(contributions) != ate_doc.at("value").get<double>()) return "ate does not recompute";
        if (!defined && !ate_doc.at("value").is_null()) return "undefined ate carries a value";
        return {};
    } catch (const std::exception& e) {
        return std::string("malformed snapshot: ") + e.what();
    }
}

} // namespace natex
