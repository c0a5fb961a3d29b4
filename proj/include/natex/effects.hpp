#pragma once

#include "natex/regress.hpp"

#include <cstddef>
#include <set>
#include <span>
#include <vector>

namespace natex {

using SelectionSet = std::set<int>;

struct Contribution {
    int cluster = 0;
    std::size_t n = 0;
    double b = 0.0;
};

struct AteResult {
    bool defined = false;
    double ate = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_total = 0;
    std::vector<Contribution> contributions;
};

struct SimpsonReport {
    double overall_slope = std::numeric_limits<double>::quiet_NaN();
    std::vector<int> flagged;
};

inline constexpr double kSignificance = 0.05;

// Clusters with a defined fit and p <= 0.05.
SelectionSet default_selection(std::span<const RegressionFit> fits);

// Size-weighted mean of the selected cluster slopes. Undefined fits and
// unknown ids in `selection` contribute nothing.
AteResult ate(std::span<const RegressionFit> fits, std::span<const std::size_t> sizes, const SelectionSet& selection);

// The same weighted mean evaluated from a list of (n, b) contributions.
double weighted_mean(std::span<const Contribution> contributions);

// Clusters whose significant slope opposes a significant overall slope.
SimpsonReport detect_simpson(std::span<const RegressionFit> fits, const RegressionFit& overall);

} // namespace natex
