#include "natex/report.hpp"

#include "natex/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace natex {

Dataset prepare(const Dataset& raw, const PrepareOptions& options) {
    RoleOptions roles;
    roles.exclude = options.exclude_columns;
    return assign_roles(raw, options.treatments, options.outcomes, roles);
}

Dataset load_prepared(const std::filesystem::path& path, const PrepareOptions& options) {
    CsvOptions csv;
    csv.delimiter = options.delimiter;
    csv.kind_overrides = options.kinds;
    return prepare(load_csv_file(path, csv), options);
}

AnalyzeResult run_analysis(std::shared_ptr<const Dataset> dataset, const AnalyzeRequest& request) {
    SessionConfig config;
    config.k = request.k;
    config.seed = request.seed;
    config.method = request.method;
    config.cache_dir = request.cache_dir;
    AnalyzeResult result;
    result.session = std::make_unique<Session>(std::move(dataset), request.treatment, request.outcome, config);
    if (!request.exclude_ids.empty()) {
        result.session->exclude(request.exclude_ids);
        ++result.version;
    }
    if (request.select) {
        result.session->set_selection(*request.select);
        ++result.version;
    }
    return result;
}

Json make_report(const AnalysisSnapshot& snapshot, std::uint64_t version, const std::string& input,
                 const std::string& timestamp) {
    Json doc = snapshot_to_json(snapshot, version);
    doc["meta"] = Json{{"input", input}, {"timestamp", timestamp}, {"tool_version", NATEX_VERSION}};
    return doc;
}

std::string render_svg(const AnalysisSnapshot& s) {
    constexpr double kWidth = 800, kHeight = 600, kMargin = 60;
    const auto& ax = s.axes;
    const double tspan = ax.t_max > ax.t_min ? ax.t_max - ax.t_min : 1.0;
    const double ospan = ax.o_max > ax.o_min ? ax.o_max - ax.o_min : 1.0;
    auto px = [&](double t) { return kMargin + (t - ax.t_min) / tspan * (kWidth - 2 * kMargin); };
    auto py = [&](double o) { return kHeight - kMargin - (o - ax.o_min) / ospan * (kHeight - 2 * kMargin); };
    auto color_of = [&](int cluster) {
        return s.selection.count(cluster) ? s.cluster_meta[static_cast<std::size_t>(cluster)].color : std::string("#c8c8c8");
    };
    auto escape = [](const std::string& text) {
        std::string out;
        for (char c : text) {
            switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
            }
        }
        return out;
    };

    std::ostringstream svg;
    svg.precision(6);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<g stroke=\"#444\" stroke-width=\"1\">"
        << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin << "\" y2=\""
        << kHeight - kMargin << "\"/>"
        << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\"" << kHeight - kMargin
        << "\"/></g>\n";
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 20 << "\" text-anchor=\"middle\" font-size=\"14\">"
        << escape(s.treatment) << "</text>\n";
    svg << "<text x=\"20\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 20 "
        << kHeight / 2 << ")\">" << escape(s.outcome) << "</text>\n";

    svg << "<g stroke=\"none\">\n";
    for (std::size_t i = 0; i < s.row_ids.size(); ++i) {
        if (std::binary_search(s.excluded_ids.begin(), s.excluded_ids.end(), s.row_ids[i])) continue;
        svg << "<circle cx=\"" << px(s.t_values[i]) << "\" cy=\"" << py(s.o_values[i]) << "\" r=\"2.5\" fill=\""
            << color_of(s.assignment.labels[i]) << "\" fill-opacity=\"0.7\"/>\n";
    }
    svg << "</g>\n";

    auto line = [&](const RegressionFit& fit, double t0, double t1, const std::string& stroke, const char* extra) {
        if (!fit.defined) return;
        svg << "<line x1=\"" << px(t0) << "\" y1=\"" << py(fit.intercept + fit.slope * t0) << "\" x2=\"" << px(t1)
            << "\" y2=\"" << py(fit.intercept + fit.slope * t1) << "\" stroke=\"" << stroke << "\" " << extra << "/>\n";
    };
    for (std::size_t c = 0; c < s.k; ++c) {
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t i = 0; i < s.row_ids.size(); ++i) {
            if (s.assignment.labels[i] != static_cast<int>(c)) continue;
            if (std::binary_search(s.excluded_ids.begin(), s.excluded_ids.end(), s.row_ids[i])) continue;
            lo = std::min(lo, s.t_values[i]);
            hi = std::max(hi, s.t_values[i]);
        }
        if (lo <= hi) line(s.fits[c], lo, hi, color_of(static_cast<int>(c)), "stroke-width=\"2.5\"");
    }
    line(s.overall, ax.t_min, ax.t_max, "#555555", "stroke-width=\"1.5\" stroke-dasharray=\"6 4\" stroke-opacity=\"0.5\"");

    svg << "<text x=\"" << kWidth - kMargin << "\" y=\"" << kMargin - 20 << "\" text-anchor=\"end\" font-size=\"16\">ATE: ";
    if (s.ate.defined) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", s.ate.ate);
        svg << buf;
    } else {
        svg << "no selection";
    }
    svg << "</text>\n</svg>\n";
    return svg.str();
}

} // namespace natex
