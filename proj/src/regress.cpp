#include "natex/regress.hpp"

#include "natex/error.hpp"

#include <algorithm>
#include <cmath>

namespace natex {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct XYPairs {
    std::vector<double> x;
    std::vector<double> y;
};

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

XYPairs collect(const Dataset& ds, std::size_t tcol, std::size_t ocol, std::span<const RowId> row_ids,
                const RowMask& mask, const ClusterAssignment* assignment, int cluster_id) {
    XYPairs out;
    for (std::size_t i = 0; i < row_ids.size(); ++i) {
        if (assignment && assignment->labels[i] != cluster_id) continue;
        const RowId id = row_ids[i];
        if (mask.contains(id)) continue;
        const auto pos = ds.position_of(id);
        if (!pos) throw InvalidArgument("row id " + std::to_string(id) + " is not in the dataset");
        if (ds.is_missing(*pos, tcol) || ds.is_missing(*pos, ocol)) continue;
        out.x.push_back(ds.number(*pos, tcol));
        out.y.push_back(ds.number(*pos, ocol));
    }
    return out;
}

} // namespace

namespace {

// I_x(a, b) with y = 1 - x supplied separately so neither tail loses digits.
double incomplete_beta_xy(double a, double b, double x, double y) {
    if (x <= 0.0) return 0.0;
    if (y <= 0.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, y) / b;
}

} // namespace

double incomplete_beta(double a, double b, double x) {
    if (x >= 1.0) return 1.0;
    return incomplete_beta_xy(a, b, x, 1.0 - x);
}

double t_two_sided_p(double t, double df) {
    if (std::isnan(t) || !(df > 0.0)) return kNaN;
    if (std::isinf(t)) return 0.0;
    const double t2 = t * t;
    // p = I_{df/(df+t^2)}(df/2, 1/2), passing both tails of the argument.
    const double p = incomplete_beta_xy(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2));
    return std::clamp(p, 0.0, 1.0);
}

RegressionFit ols_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InvalidArgument("treatment and outcome lengths differ");
    RegressionFit fit;
    fit.n = x.size();
    const std::size_t n = x.size();
    if (n < kMinFitSize) return fit;

    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);

    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) return fit;

    fit.defined = true;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;

    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = (y[i] - my) - fit.slope * (x[i] - mx);
        sse += r * r;
    }
    // Residuals at rounding level count as an exact fit.
    const bool exact = sse <= 1e-28 * syy || syy == 0.0;
    const double df = static_cast<double>(n - 2);
    fit.r2 = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 0.0;

    if (exact) {
        fit.stderr_slope = 0.0;
        if (fit.slope == 0.0 || syy == 0.0) {
            fit.slope = 0.0;
            fit.intercept = my;
            fit.t_stat = 0.0;
            fit.p_value = 1.0;
        } else {
            fit.t_stat = std::copysign(std::numeric_limits<double>::infinity(), fit.slope);
            fit.p_value = 0.0;
        }
        return fit;
    }

    fit.stderr_slope = std::sqrt(sse / df / sxx);
    fit.t_stat = fit.slope / fit.stderr_slope;
    fit.p_value = t_two_sided_p(fit.t_stat, df);
    return fit;
}

std::vector<RegressionFit> fit_clusters(const Dataset& ds, std::size_t treatment_col, std::size_t outcome_col,
                                        std::span<const RowId> row_ids, const ClusterAssignment& assignment,
                                        const RowMask& mask) {
    if (assignment.labels.size() != row_ids.size()) throw InvalidArgument("assignment does not cover the analysis rows");
    std::vector<XYPairs> groups(assignment.k);
    for (std::size_t i = 0; i < row_ids.size(); ++i) {
        const RowId id = row_ids[i];
        if (mask.contains(id)) continue;
        const auto pos = ds.position_of(id);
        if (!pos) throw InvalidArgument("row id " + std::to_string(id) + " is not in the dataset");
        if (ds.is_missing(*pos, treatment_col) || ds.is_missing(*pos, outcome_col)) continue;
        auto& g = groups.at(static_cast<std::size_t>(assignment.labels[i]));
        g.x.push_back(ds.number(*pos, treatment_col));
        g.y.push_back(ds.number(*pos, outcome_col));
    }
    std::vector<RegressionFit> fits;
    fits.reserve(groups.size());
    for (const auto& g : groups) fits.push_back(ols_fit(g.x, g.y));
    return fits;
}

RegressionFit fit_cluster(const Dataset& ds, std::size_t treatment_col, std::size_t outcome_col,
                          std::span<const RowId> row_ids, const ClusterAssignment& assignment, const RowMask& mask,
                          int cluster_id) {
    if (assignment.labels.size() != row_ids.size()) throw InvalidArgument("assignment does not cover the analysis rows");
    const auto xy = collect(ds, treatment_col, outcome_col, row_ids, mask, &assignment, cluster_id);
    return ols_fit(xy.x, xy.y);
}

RegressionFit fit_overall(const Dataset& ds, std::size_t treatment_col, std::size_t outcome_col,
                          std::span<const RowId> row_ids, const RowMask& mask) {
    const auto xy = collect(ds, treatment_col, outcome_col, row_ids, mask, nullptr, 0);
    return ols_fit(xy.x, xy.y);
}

} // namespace natex
