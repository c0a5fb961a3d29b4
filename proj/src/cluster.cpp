#include "natex/cluster.hpp"

#include "natex/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>
#include <tuple>

namespace natex {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

struct Key {
    double cost;
    std::size_t lo;
    std::size_t hi;

    friend bool operator<(const Key& l, const Key& r) { return std::tie(l.cost, l.lo, l.hi) < std::tie(r.cost, r.lo, r.hi); }
};

// Uniform grid over cluster centroids with insert/erase, used to find a
// cluster's cheapest Ward partner without scanning every active cluster.
class CentroidGrid {
public:
    CentroidGrid(std::span<const Point2> points, std::size_t nodes) : cell_of_(nodes, kNone), slot_(nodes, kNone) {
        double x1 = points[0].x, y1 = points[0].y;
        x0_ = x1;
        y0_ = y1;
        for (const auto& p : points) {
            x0_ = std::min(x0_, p.x);
            y0_ = std::min(y0_, p.y);
            x1 = std::max(x1, p.x);
            y1 = std::max(y1, p.y);
        }
        const double w = x1 - x0_, h = y1 - y0_;
        // About two points per cell.
        const double target = std::max<double>(1.0, static_cast<double>(points.size()) / 2.0);
        double side = std::sqrt(std::max(w * h, 0.0) / target);
        if (!(side > 0.0)) side = std::max(w, h) / target;
        if (!(side > 0.0)) side = 1.0;
        side_ = side;
        nx_ = std::min<std::size_t>(static_cast<std::size_t>(w / side) + 1, 1u << 15);
        ny_ = std::min<std::size_t>(static_cast<std::size_t>(h / side) + 1, 1u << 15);
        cells_.resize(nx_ * ny_);
    }

    double side() const { return side_; }
    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }
    const std::vector<std::size_t>& cell(std::size_t cx, std::size_t cy) const { return cells_[cy * nx_ + cx]; }

    std::pair<std::size_t, std::size_t> locate(double x, double y) const {
        auto clamp_index = [](double v, std::size_t n) {
            if (!(v > 0.0)) return std::size_t{0};
            return std::min(static_cast<std::size_t>(v), n - 1);
        };
        return {clamp_index((x - x0_) / side_, nx_), clamp_index((y - y0_) / side_, ny_)};
    }

    void insert(std::size_t id, double x, double y) {
        const auto [cx, cy] = locate(x, y);
        auto& c = cells_[cy * nx_ + cx];
        cell_of_[id] = cy * nx_ + cx;
        slot_[id] = c.size();
        c.push_back(id);
    }

    void erase(std::size_t id) {
        auto& c = cells_[cell_of_[id]];
        const std::size_t last = c.back();
        c[slot_[id]] = last;
        slot_[last] = slot_[id];
        c.pop_back();
        cell_of_[id] = kNone;
    }

private:
    double x0_ = 0.0, y0_ = 0.0, side_ = 1.0;
    std::size_t nx_ = 1, ny_ = 1;
    std::vector<std::vector<std::size_t>> cells_;
    std::vector<std::size_t> cell_of_, slot_;
};

// Exact greedy Ward agglomeration: always merges the cheapest pair, ties
// broken by (min id, max id).
//
// Each active cluster caches a nearest neighbor that was exact when it was
// last computed. A cluster's cached key is never above its cost to any
// cluster older than itself, so the cheapest pair always sits in the heap
// under its newer member. Only clusters whose cached neighbor was just
// merged away need a new search.
class WardAgglomerator {
public:
    explicit WardAgglomerator(std::span<const Point2> points)
        : n_(points.size()), grid_(points, 2 * points.size() - 1) {
        const std::size_t nodes = 2 * n_ - 1;
        cx_.resize(nodes);
        cy_.resize(nodes);
        w_.resize(nodes, 0.0);
        nn_.resize(nodes, kNone);
        nn_key_.resize(nodes, Key{std::numeric_limits<double>::infinity(), kNone, kNone});
        pointed_by_.resize(nodes);
        alive_.resize(nodes, 0);
        for (std::size_t i = 0; i < n_; ++i) {
            cx_[i] = points[i].x;
            cy_[i] = points[i].y;
            w_[i] = 1.0;
            activate(i);
        }
    }

    Dendrogram run() {
        Dendrogram d;
        d.n_leaves = n_;
        d.merges.reserve(n_ - 1);
        for (std::size_t id = 0; id < n_; ++id) refresh(id);

        double last = 0.0;
        std::vector<std::size_t> stale;
        for (std::size_t step = 0; step + 1 < n_; ++step) {
            const Key key = pop_best();
            const std::size_t a = key.lo;
            const std::size_t b = key.hi;
            const std::size_t c = n_ + step;

            const double wa = w_[a];
            const double wb = w_[b];
            w_[c] = wa + wb;
            cx_[c] = (wa * cx_[a] + wb * cx_[b]) / w_[c];
            cy_[c] = (wa * cy_[a] + wb * cy_[b]) / w_[c];
            deactivate(a);
            deactivate(b);
            activate(c);

            // Monotone in exact arithmetic; rounding can dip by an ulp.
            last = std::max(last, std::sqrt(2.0 * key.cost));
            d.merges.push_back({a, b, last});

            stale.clear();
            for (std::size_t gone : {a, b}) {
                for (std::size_t p : pointed_by_[gone]) {
                    if (alive_[p] && nn_[p] == gone) stale.push_back(p);
                }
                pointed_by_[gone].clear();
                pointed_by_[gone].shrink_to_fit();
            }
            std::sort(stale.begin(), stale.end());
            stale.erase(std::unique(stale.begin(), stale.end()), stale.end());
            for (std::size_t p : stale) refresh(p);
            refresh(c);
        }
        index_dendrogram(d);
        return d;
    }

private:
    using HeapEntry = std::pair<Key, std::size_t>;
    struct HeapGreater {
        bool operator()(const HeapEntry& l, const HeapEntry& r) const {
            if (r.first < l.first) return true;
            if (l.first < r.first) return false;
            return l.second > r.second;
        }
    };

    Key key_of(std::size_t p, std::size_t q) const {
        const double dx = cx_[p] - cx_[q];
        const double dy = cy_[p] - cy_[q];
        const double cost = w_[p] * w_[q] / (w_[p] + w_[q]) * (dx * dx + dy * dy);
        return {cost, std::min(p, q), std::max(p, q)};
    }

    void activate(std::size_t id) {
        alive_[id] = 1;
        ++active_count_;
        grid_.insert(id, cx_[id], cy_[id]);
    }

    void deactivate(std::size_t id) {
        alive_[id] = 0;
        --active_count_;
        grid_.erase(id);
    }

    void refresh(std::size_t p) {
        Key best{std::numeric_limits<double>::infinity(), kNone, kNone};
        auto consider = [&](std::size_t q) {
            if (q == p) return;
            const Key k = key_of(p, q);
            if (k < best) best = k;
        };

        // Every partner weighs at least 1, so cost >= w/(w+1) * distance^2.
        const double factor = w_[p] / (w_[p] + 1.0) * (1.0 - 1e-9);
        const auto [px, py] = grid_.locate(cx_[p], cy_[p]);
        const std::size_t nx = grid_.nx(), ny = grid_.ny();
        const std::size_t max_ring = std::max({px, nx - 1 - px, py, ny - 1 - py});
        const std::size_t budget = 4 * active_count_ + 64;
        std::size_t scanned = 0;
        bool exhausted = true;
        for (std::size_t r = 0; r <= max_ring; ++r) {
            if (r >= 1) {
                const double reach = static_cast<double>(r - 1) * grid_.side();
                if (factor * reach * reach > best.cost) break;
            }
            const std::size_t x_lo = px >= r ? px - r : 0, x_hi = std::min(nx - 1, px + r);
            const std::size_t y_lo = py >= r ? py - r : 0, y_hi = std::min(ny - 1, py + r);
            auto visit = [&](std::size_t x, std::size_t y) {
                ++scanned;
                for (std::size_t q : grid_.cell(x, y)) consider(q);
            };
            // Only the ring's border cells; the inside was covered already.
            for (std::size_t y = y_lo; y <= y_hi; ++y) {
                if (y + r == py || y == py + r) {
                    for (std::size_t x = x_lo; x <= x_hi; ++x) visit(x, y);
                } else {
                    if (px >= r) visit(px - r, y);
                    if (px + r < nx) visit(px + r, y);
                }
            }
            if (scanned > budget) {
                exhausted = false;
                break;
            }
        }
        if (!exhausted) {
            best = Key{std::numeric_limits<double>::infinity(), kNone, kNone};
            for (std::size_t q = 0; q < alive_.size(); ++q) {
                if (alive_[q]) consider(q);
            }
        }
        if (best.lo == kNone) return;
        const std::size_t q = best.lo == p ? best.hi : best.lo;
        nn_[p] = q;
        nn_key_[p] = best;
        pointed_by_[q].push_back(p);
        heap_.push({best, p});
    }

    Key pop_best() {
        while (!heap_.empty()) {
            const auto entry = heap_.top();
            heap_.pop();
            const std::size_t p = entry.second;
            if (!alive_[p]) continue;
            const std::size_t q = entry.first.lo == p ? entry.first.hi : entry.first.lo;
            if (nn_[p] != q || !alive_[q]) continue;
            if (nn_key_[p] < entry.first || entry.first < nn_key_[p]) continue;
            return entry.first;
        }
        throw Error("agglomeration ran out of candidate pairs");
    }

    std::size_t n_;
    CentroidGrid grid_;
    std::vector<double> cx_, cy_, w_;
    std::vector<std::size_t> nn_;
    std::vector<Key> nn_key_;
    std::vector<std::vector<std::size_t>> pointed_by_;
    std::vector<char> alive_;
    std::size_t active_count_ = 0;
    std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapGreater> heap_;
};

} // namespace

Dendrogram build_dendrogram(std::span<const Point2> points) {
    if (points.size() < 2) throw InvalidArgument("hierarchical clustering needs at least 2 points");
    for (const auto& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidArgument("embedding has non-finite coordinates");
    }
    return WardAgglomerator(points).run();
}

ClusterAssignment cut(const Dendrogram& dendrogram, std::size_t k) {
    const std::size_t n = dendrogram.n_leaves;
    if (k < 1 || k > n) {
        throw InvalidArgument("cluster count " + std::to_string(k) + " is outside 1.." + std::to_string(n));
    }
    // The last k-1 merges are removed; the children they leave behind are
    // the cluster roots, each a contiguous run of leaf_order.
    std::vector<std::size_t> roots;
    roots.reserve(k);
    if (k == 1) roots.push_back(2 * n - 2);
    const std::size_t kept = n - k;
    for (std::size_t s = kept; s + 1 < n; ++s) {
        const auto& m = dendrogram.merges[s];
        for (std::size_t child : {m.a, m.b}) {
            if (child < n || child - n < kept) roots.push_back(child);
        }
    }
    std::sort(roots.begin(), roots.end(), [&](std::size_t l, std::size_t r) {
        return dendrogram.node_min_leaf[l] < dendrogram.node_min_leaf[r];
    });

    ClusterAssignment out;
    out.k = k;
    out.labels.resize(n);
    out.sizes.resize(k);
    // Cluster of every leaf_order position, in the narrowest type that fits,
    // then one sequential pass over the leaves. Keeps the random reads in a
    // table small enough to stay cached.
    auto fill = [&](auto tag) {
        using Label = decltype(tag);
        std::vector<Label> at(n);
        for (std::size_t c = 0; c < k; ++c) {
            const std::size_t begin = dendrogram.node_start[roots[c]];
            out.sizes[c] = dendrogram.node_size[roots[c]];
            std::fill_n(at.begin() + static_cast<std::ptrdiff_t>(begin), out.sizes[c], static_cast<Label>(c));
        }
        for (std::size_t i = 0; i < n; ++i) out.labels[i] = static_cast<int>(at[dendrogram.node_start[i]]);
    };
    if (k <= 0x100) fill(std::uint8_t{});
    else if (k <= 0x10000) fill(std::uint16_t{});
    else fill(std::uint32_t{});
    return out;
}

void index_dendrogram(Dendrogram& d) {
    const std::size_t n = d.n_leaves;
    const std::size_t nodes = n == 0 ? 0 : 2 * n - 1;
    if (d.merges.size() + 1 != n) throw InvalidArgument("a dendrogram over n leaves has n-1 merges");
    d.node_size.assign(nodes, 1);
    d.node_min_leaf.resize(nodes);
    d.node_start.assign(nodes, 0);
    std::iota(d.node_min_leaf.begin(), d.node_min_leaf.begin() + static_cast<std::ptrdiff_t>(n), std::size_t{0});
    for (std::size_t s = 0; s + 1 < n; ++s) {
        const auto& m = d.merges[s];
        d.node_size[n + s] = d.node_size[m.a] + d.node_size[m.b];
        d.node_min_leaf[n + s] = std::min(d.node_min_leaf[m.a], d.node_min_leaf[m.b]);
    }
    for (std::size_t s = n - 1; s-- > 0;) {
        const auto& m = d.merges[s];
        d.node_start[m.a] = d.node_start[n + s];
        d.node_start[m.b] = d.node_start[n + s] + d.node_size[m.a];
    }
    d.leaf_order.resize(n);
    for (std::size_t leaf = 0; leaf < n; ++leaf) d.leaf_order[d.node_start[leaf]] = leaf;
}

void write_dendrogram(std::ostream& out, const Dendrogram& dendrogram) {
    out << "n " << dendrogram.n_leaves << '\n';
    const auto old_precision = out.precision(17);
    for (const auto& m : dendrogram.merges) out << m.a << ' ' << m.b << ' ' << m.height << '\n';
    out.precision(old_precision);
}

Dendrogram read_dendrogram(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line != "\r") return true;
        }
        return false;
    };
    if (!next_line()) throw ParseError(1, "empty dendrogram");
    std::istringstream head(line);
    std::string tag;
    Dendrogram d;
    if (!(head >> tag >> d.n_leaves) || tag != "n" || d.n_leaves < 1) throw ParseError(line_no, "expected 'n <leaves>'");

    std::vector<bool> used(2 * d.n_leaves - 1, false);
    double last = -std::numeric_limits<double>::infinity();
    while (next_line()) {
        std::istringstream row(line);
        Merge m;
        if (!(row >> m.a >> m.b >> m.height)) throw ParseError(line_no, "expected 'node_a node_b height'");
        if (d.merges.size() + 1 >= d.n_leaves) throw ParseError(line_no, "more than n-1 merges");
        const std::size_t created = d.n_leaves + d.merges.size();
        if (m.a >= created || m.b >= created || m.a == m.b) throw ParseError(line_no, "merge refers to an unknown node");
        if (used[m.a] || used[m.b]) throw ParseError(line_no, "node merged twice");
        if (m.height < last) throw ParseError(line_no, "merge heights decrease");
        used[m.a] = used[m.b] = true;
        last = m.height;
        if (m.a > m.b) std::swap(m.a, m.b);
        d.merges.push_back(m);
    }
    if (d.merges.size() + 1 != d.n_leaves) throw ParseError(line_no, "expected n-1 merges");

    index_dendrogram(d);
    return d;
}

double quantile(std::span<const double> sorted, double q) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

ColumnSummary summarize(std::vector<double> values, std::optional<std::pair<double, double>> range) {
    ColumnSummary s;
    if (values.empty()) return s;
    std::sort(values.begin(), values.end());
    s.empty = false;
    s.count = values.size();
    s.min = values.front();
    s.max = values.back();
    s.q1 = quantile(values, 0.25);
    s.median = quantile(values, 0.5);
    s.q3 = quantile(values, 0.75);
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());

    const auto [lo, hi] = range.value_or(std::pair{s.min, s.max});
    for (double v : values) {
        std::size_t bin = 0;
        if (hi > lo) {
            const double t = (v - lo) / (hi - lo) * static_cast<double>(ColumnSummary::kBins);
            bin = static_cast<std::size_t>(std::clamp(std::floor(t), 0.0, static_cast<double>(ColumnSummary::kBins - 1)));
        }
        ++s.hist[bin];
    }
    return s;
}

std::vector<ColumnSummary> covariate_profile(const Dataset& ds, std::span<const RowId> row_ids,
                                             const ClusterAssignment& assignment, int cluster_id,
                                             std::span<const std::size_t> columns, const RowMask& mask) {
    if (cluster_id < 0 || static_cast<std::size_t>(cluster_id) >= assignment.k) {
        throw InvalidArgument("no cluster " + std::to_string(cluster_id));
    }
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < row_ids.size(); ++i) {
        if (assignment.labels[i] != cluster_id || mask.contains(row_ids[i])) continue;
        members.push_back(*ds.position_of(row_ids[i]));
    }
    std::vector<ColumnSummary> out;
    out.reserve(columns.size());
    for (std::size_t c : columns) {
        if (ds.column(c).kind != ColumnKind::numeric) {
            throw InvalidArgument("column '" + ds.column(c).name + "' is not numeric");
        }
        std::vector<double> values;
        values.reserve(members.size());
        for (std::size_t p : members) {
            if (!ds.is_missing(p, c)) values.push_back(ds.number(p, c));
        }
        out.push_back(summarize(std::move(values)));
    }
    return out;
}

} // namespace natex
