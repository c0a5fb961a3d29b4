#include "natex/effects.hpp"

#include <algorithm>

namespace natex {

SelectionSet default_selection(std::span<const RegressionFit> fits) {
    SelectionSet out;
    for (std::size_t i = 0; i < fits.size(); ++i) {
        if (fits[i].significant(kSignificance)) out.insert(static_cast<int>(i));
    }
    return out;
}

double weighted_mean(std::span<const Contribution> contributions) {
    if (contributions.empty()) return std::numeric_limits<double>::quiet_NaN();
    double weighted = 0.0;
    std::size_t total = 0;
    double lo = contributions.front().b;
    double hi = lo;
    for (const auto& c : contributions) {
        weighted += static_cast<double>(c.n) * c.b;
        total += c.n;
        lo = std::min(lo, c.b);
        hi = std::max(hi, c.b);
    }
    // Rounding can leave the quotient an ulp outside the convex hull of the slopes.
    return std::clamp(weighted / static_cast<double>(total), lo, hi);
}

AteResult ate(std::span<const RegressionFit> fits, std::span<const std::size_t> sizes, const SelectionSet& selection) {
    AteResult out;
    for (int id : selection) {
        if (id < 0 || static_cast<std::size_t>(id) >= fits.size()) continue;
        const auto& fit = fits[static_cast<std::size_t>(id)];
        const std::size_t n = static_cast<std::size_t>(id) < sizes.size() ? sizes[static_cast<std::size_t>(id)] : 0;
        if (!fit.defined || n == 0) continue;
        out.contributions.push_back({id, n, fit.slope});
        out.n_total += n;
    }
    if (!out.contributions.empty()) {
        out.defined = true;
        out.ate = weighted_mean(out.contributions);
    }
    return out;
}

SimpsonReport detect_simpson(std::span<const RegressionFit> fits, const RegressionFit& overall) {
    SimpsonReport report;
    report.overall_slope = overall.slope;
    if (!overall.significant(kSignificance)) return report;
    for (std::size_t i = 0; i < fits.size(); ++i) {
        const auto& fit = fits[i];
        if (fit.significant(kSignificance) && fit.slope * overall.slope < 0.0) report.flagged.push_back(static_cast<int>(i));
    }
    return report;
}

} // namespace natex
