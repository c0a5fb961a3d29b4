#pragma once

#include "natex/cluster.hpp"
#include "natex/dataset.hpp"

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace natex {

// Simple least-squares regression of outcome on treatment.
//
// A fit is undefined when fewer than three points remain or the treatment
// has zero variance; all numeric fields are then NaN. A zero-residual fit
// with a non-zero slope reports stderr 0, infinite t and p = 0. A constant
// outcome reports slope 0, t 0 and p = 1.
struct RegressionFit {
    bool defined = false;
    std::size_t n = 0;
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double stderr_slope = std::numeric_limits<double>::quiet_NaN();
    double t_stat = std::numeric_limits<double>::quiet_NaN();
    double p_value = std::numeric_limits<double>::quiet_NaN();
    double r2 = std::numeric_limits<double>::quiet_NaN();

    bool significant(double alpha = 0.05) const { return defined && p_value <= alpha; }
};

inline constexpr std::size_t kMinFitSize = 3;

RegressionFit ols_fit(std::span<const double> x, std::span<const double> y);

// Regularized incomplete beta I_x(a, b), continued fraction, ~1e-15 relative.
double incomplete_beta(double a, double b, double x);

// P(|T| >= |t|) for Student's t with df degrees of freedom.
double t_two_sided_p(double t, double df);

// One fit per cluster of `assignment`, whose labels are indexed like `row_ids`.
std::vector<RegressionFit> fit_clusters(const Dataset& ds, std::size_t treatment_col, std::size_t outcome_col,
                                        std::span<const RowId> row_ids, const ClusterAssignment& assignment,
                                        const RowMask& mask);

RegressionFit fit_cluster(const Dataset& ds, std::size_t treatment_col, std::size_t outcome_col,
                          std::span<const RowId> row_ids, const ClusterAssignment& assignment, const RowMask& mask,
                          int cluster_id);

RegressionFit fit_overall(const Dataset& ds, std::size_t treatment_col, std::size_t outcome_col,
                          std::span<const RowId> row_ids, const RowMask& mask);

} // namespace natex
