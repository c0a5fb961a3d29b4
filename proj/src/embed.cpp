#include "natex/embed.hpp"

#include "natex/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace natex {

namespace {

// Positions of fm's rows sorted by row id.
std::vector<std::size_t> canonical_order(std::span<const RowId> row_ids) {
    std::vector<std::size_t> order(row_ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row_ids[a] < row_ids[b]; });
    return order;
}

FeatureMatrix reorder(const FeatureMatrix& fm, std::span<const std::size_t> order) {
    FeatureMatrix out;
    out.feature_names = fm.feature_names;
    out.row_ids.reserve(fm.rows());
    out.values.reserve(fm.values.size());
    for (std::size_t pos : order) {
        out.row_ids.push_back(fm.row_ids[pos]);
        const auto r = fm.row(pos);
        out.values.insert(out.values.end(), r.begin(), r.end());
    }
    return out;
}

std::vector<Point2> pca_canonical(const FeatureMatrix& fm) {
    const std::size_t n = fm.rows();
    const std::size_t d = fm.dims();
    std::vector<Point2> coords(n);
    if (n == 0 || d == 0) return coords;

    Eigen::MatrixXd centered(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = fm.values[i * d + j];
    }
    const Eigen::RowVectorXd mean = centered.colwise().mean();
    centered.rowwise() -= mean;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw Error("principal axes did not converge");
    // Eigenvalues come back ascending.
    Eigen::MatrixXd axes(static_cast<Eigen::Index>(d), 2);
    axes.setZero();
    const Eigen::Index top = static_cast<Eigen::Index>(d) - 1;
    for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, static_cast<Eigen::Index>(d)); ++c) {
        Eigen::VectorXd v = solver.eigenvectors().col(top - c);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        axes.col(c) = v;
    }
    const Eigen::MatrixXd projected = centered * axes;
    for (std::size_t i = 0; i < n; ++i) {
        coords[i] = {projected(static_cast<Eigen::Index>(i), 0), projected(static_cast<Eigen::Index>(i), 1)};
    }
    return coords;
}

struct Edge {
    std::size_t head;
    std::size_t tail;
    double weight;
};

// Fuzzy k-nearest-neighbor graph, symmetrized by probabilistic union.
std::vector<Edge> neighbor_graph(const FeatureMatrix& fm, std::size_t k) {
    const std::size_t n = fm.rows();
    const std::size_t d = fm.dims();

    std::vector<std::vector<std::pair<double, std::size_t>>> knn(n);
    std::vector<std::pair<double, std::size_t>> scratch;
    for (std::size_t i = 0; i < n; ++i) {
        scratch.clear();
        const auto xi = fm.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto xj = fm.row(j);
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = xi[c] - xj[c];
                s += diff * diff;
            }
            scratch.emplace_back(s, j);
        }
        std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());
        knn[i].assign(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k));
        for (auto& [dist, j] : knn[i]) dist = std::sqrt(dist);
    }

    double mean_all = 0.0;
    for (const auto& row : knn) {
        for (const auto& e : row) mean_all += e.first;
    }
    mean_all /= static_cast<double>(n * k);

    constexpr double kMinScale = 1e-3;
    const double target = std::log2(static_cast<double>(k));
    std::vector<std::tuple<std::size_t, std::size_t, double>> directed;
    directed.reserve(n * k * 2);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = knn[i];
        double rho = 0.0;
        for (const auto& e : row) {
            if (e.first > 0.0) {
                rho = e.first;
                break;
            }
        }
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double sigma = 1.0;
        for (int iter = 0; iter < 64; ++iter) {
            double sum = 0.0;
            for (const auto& e : row) {
                const double r = e.first - rho;
                sum += r > 0.0 ? std::exp(-r / sigma) : 1.0;
            }
            if (std::fabs(sum - target) < 1e-5) break;
            if (sum > target) {
                hi = sigma;
                sigma = (lo + hi) / 2.0;
            } else {
                lo = sigma;
                sigma = std::isinf(hi) ? sigma * 2.0 : (lo + hi) / 2.0;
            }
        }
        double mean_i = 0.0;
        for (const auto& e : row) mean_i += e.first;
        mean_i /= static_cast<double>(k);
        sigma = std::max(sigma, kMinScale * (rho > 0.0 ? mean_i : mean_all));

        for (const auto& [dist, j] : row) {
            const double r = dist - rho;
            const double w = r > 0.0 ? std::exp(-r / sigma) : 1.0;
            directed.emplace_back(i, j, w);
        }
    }

    // w_ij = a + b - a*b over both directions of each pair.
    std::vector<std::tuple<std::size_t, std::size_t, double>> both;
    both.reserve(directed.size() * 2);
    for (const auto& [i, j, w] : directed) {
        both.emplace_back(i, j, w);
        both.emplace_back(j, i, w);
    }
    std::sort(both.begin(), both.end());
    std::vector<Edge> edges;
    for (std::size_t s = 0; s < both.size();) {
        const auto [i, j, w0] = both[s];
        std::size_t e = s + 1;
        double w = w0;
        // A pair appears at most twice: once per direction it was found in.
        if (e < both.size() && std::get<0>(both[e]) == i && std::get<1>(both[e]) == j) {
            const double w1 = std::get<2>(both[e]);
            w = w0 + w1 - w0 * w1;
            ++e;
        }
        if (w > 0.0) edges.push_back({i, j, w});
        s = e;
    }
    return edges;
}

double clip(double v) {
    constexpr double kClip = 4.0;
    return std::clamp(v, -kClip, kClip);
}

std::vector<Point2> layout(const FeatureMatrix& fm, std::uint64_t seed, const NeighborGraphParams& params) {
    const std::size_t n = fm.rows();
    auto edges = neighbor_graph(fm, params.neighbors);

    auto coords = pca_canonical(fm);
    double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
    double min_y = min_x, max_y = max_x;
    for (const auto& p : coords) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    for (auto& p : coords) {
        p.x = max_x > min_x ? 10.0 * (p.x - min_x) / (max_x - min_x) : 0.0;
        p.y = max_y > min_y ? 10.0 * (p.y - min_y) / (max_y - min_y) : 0.0;
    }

    const int epochs = params.epochs;
    double max_w = 0.0;
    for (const auto& e : edges) max_w = std::max(max_w, e.weight);
    std::erase_if(edges, [&](const Edge& e) { return e.weight < max_w / static_cast<double>(epochs); });

    const auto [a, b] = fit_similarity_curve(params.min_dist, params.spread);
    const double neg_rate = static_cast<double>(params.negative_sample_rate);

    std::vector<double> epochs_per_sample(edges.size());
    std::vector<double> next_sample(edges.size());
    std::vector<double> epochs_per_negative(edges.size());
    std::vector<double> next_negative(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        epochs_per_sample[e] = max_w / edges[e].weight;
        next_sample[e] = epochs_per_sample[e];
        epochs_per_negative[e] = epochs_per_sample[e] / neg_rate;
        next_negative[e] = epochs_per_negative[e];
    }

    std::mt19937_64 rng(seed);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const double alpha = params.learning_rate * (1.0 - static_cast<double>(epoch) / static_cast<double>(epochs));
        const double now = static_cast<double>(epoch);
        for (std::size_t e = 0; e < edges.size(); ++e) {
            if (next_sample[e] > now) continue;
            auto& current = coords[edges[e].head];
            auto& other = coords[edges[e].tail];

            double dx = current.x - other.x;
            double dy = current.y - other.y;
            double d2 = dx * dx + dy * dy;
            if (d2 > 0.0) {
                const double coeff = (-2.0 * a * b * std::pow(d2, b - 1.0)) / (a * std::pow(d2, b) + 1.0);
                const double gx = clip(coeff * dx) * alpha;
                const double gy = clip(coeff * dy) * alpha;
                current.x += gx;
                current.y += gy;
                other.x -= gx;
                other.y -= gy;
            }
            next_sample[e] += epochs_per_sample[e];

            const auto negatives = static_cast<int>((now - next_negative[e]) / epochs_per_negative[e]);
            for (int s = 0; s < negatives; ++s) {
                const std::size_t k = static_cast<std::size_t>(rng() % n);
                if (k == edges[e].head) continue;
                const auto& far = coords[k];
                dx = current.x - far.x;
                dy = current.y - far.y;
                d2 = dx * dx + dy * dy;
                if (d2 > 0.0) {
                    const double coeff = (2.0 * b) / ((0.001 + d2) * (a * std::pow(d2, b) + 1.0));
                    current.x += clip(coeff * dx) * alpha;
                    current.y += clip(coeff * dy) * alpha;
                } else {
                    current.x += 4.0 * alpha;
                    current.y += 4.0 * alpha;
                }
            }
            next_negative[e] += static_cast<double>(negatives) * epochs_per_negative[e];
        }
    }
    return coords;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

} // namespace

std::string_view to_string(EmbedMethod method) {
    return method == EmbedMethod::pca ? "pca" : "neighbor-graph";
}

EmbedMethod parse_embed_method(std::string_view text) {
    if (text == "pca") return EmbedMethod::pca;
    if (text == "neighbor-graph" || text == "neighbor_graph" || text == "umap") return EmbedMethod::neighbor_graph;
    throw InvalidArgument("unknown embedding method '" + std::string(text) + "'");
}

FeatureMatrix build_features(const Dataset& ds, std::string_view treatment, std::string_view outcome) {
    if (treatment == outcome) throw InvalidArgument("treatment and outcome must differ");
    const std::size_t tcol = ds.column_index(treatment);
    const std::size_t ocol = ds.column_index(outcome);
    for (std::size_t c : {tcol, ocol}) {
        if (!ds.column(c).is_analysis() || ds.column(c).kind != ColumnKind::numeric) {
            throw InvalidArgument("column '" + ds.column(c).name + "' has no analysis role");
        }
    }

    std::vector<std::size_t> candidates;
    for (std::size_t c = 0; c < ds.column_count(); ++c) {
        if (c == tcol || c == ocol || !ds.column(c).is_analysis()) continue;
        candidates.push_back(c);
    }
    std::vector<std::size_t> needed = candidates;
    needed.push_back(tcol);
    needed.push_back(ocol);
    const auto rows = active_rows(ds, RowMask{}, needed);

    std::vector<std::size_t> positions;
    positions.reserve(rows.size());
    for (RowId id : rows) positions.push_back(*ds.position_of(id));

    struct Standardized {
        std::size_t col;
        double mean;
        double sd;
    };
    std::vector<Standardized> kept;
    for (std::size_t c : candidates) {
        double mean = 0.0;
        for (std::size_t p : positions) mean += ds.number(p, c);
        mean /= static_cast<double>(std::max<std::size_t>(positions.size(), 1));
        double var = 0.0;
        for (std::size_t p : positions) {
            const double d = ds.number(p, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(std::max<std::size_t>(positions.size(), 1));
        const double sd = std::sqrt(var);
        if (!(sd > 1e-12 * (std::fabs(mean) + 1.0))) continue;
        kept.push_back({c, mean, sd});
    }

    if (kept.size() < 2) {
        throw InvalidArgument("need at least 2 non-constant feature columns besides '" + std::string(treatment) +
                              "' and '" + std::string(outcome) + "', found " + std::to_string(kept.size()));
    }
    if (rows.size() < kMinFeatureRows) {
        throw InvalidArgument("need at least " + std::to_string(kMinFeatureRows) + " complete rows, found " +
                              std::to_string(rows.size()));
    }

    FeatureMatrix fm;
    fm.row_ids = rows;
    for (const auto& s : kept) fm.feature_names.push_back(ds.column(s.col).name);
    fm.values.reserve(rows.size() * kept.size());
    for (std::size_t p : positions) {
        for (const auto& s : kept) fm.values.push_back((ds.number(p, s.col) - s.mean) / s.sd);
    }
    return fm;
}

std::vector<Point2> pca_project(const FeatureMatrix& fm) {
    const auto order = canonical_order(fm.row_ids);
    const auto canonical = pca_canonical(reorder(fm, order));
    std::vector<Point2> out(fm.rows());
    for (std::size_t i = 0; i < order.size(); ++i) out[order[i]] = canonical[i];
    return out;
}

Embedding2D embed_2d(const FeatureMatrix& fm, std::uint64_t seed, EmbedMethod method, const NeighborGraphParams& params) {
    if (fm.values.size() != fm.rows() * fm.dims()) throw InvalidArgument("feature matrix shape mismatch");
    Embedding2D emb;
    emb.row_ids = fm.row_ids;
    emb.seed = seed;
    emb.method = method;

    const auto order = canonical_order(fm.row_ids);
    const auto canonical = reorder(fm, order);
    std::vector<Point2> coords;
    if (method == EmbedMethod::neighbor_graph && fm.rows() < params.neighbors + 1) {
        emb.method = EmbedMethod::pca;
        emb.fell_back = true;
        emb.warning = "only " + std::to_string(fm.rows()) + " rows for a " + std::to_string(params.neighbors) +
                      "-neighbor graph; used the PCA projection";
    }
    coords = emb.method == EmbedMethod::pca ? pca_canonical(canonical) : layout(canonical, seed, params);

    emb.coords.resize(fm.rows());
    for (std::size_t i = 0; i < order.size(); ++i) emb.coords[order[i]] = coords[i];
    return emb;
}

std::pair<double, double> fit_similarity_curve(double min_dist, double spread) {
    constexpr int kSamples = 300;
    std::vector<double> xs(kSamples);
    std::vector<double> ys(kSamples);
    for (int i = 0; i < kSamples; ++i) {
        xs[i] = 3.0 * spread * static_cast<double>(i) / (kSamples - 1);
        ys[i] = xs[i] < min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
    }
    auto residuals = [&](double a, double b, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        double sse = 0.0;
        for (int i = 0; i < kSamples; ++i) {
            const double x = xs[i];
            const double u = x > 0.0 ? std::pow(x, 2.0 * b) : 0.0;
            const double denom = 1.0 + a * u;
            r(i) = 1.0 / denom - ys[i];
            sse += r(i) * r(i);
            if (jac) {
                (*jac)(i, 0) = -u / (denom * denom);
                (*jac)(i, 1) = x > 0.0 ? -a * u * 2.0 * std::log(x) / (denom * denom) : 0.0;
            }
        }
        return sse;
    };

    double a = 1.0, b = 1.0, lambda = 1e-3;
    Eigen::VectorXd r(kSamples), r_try(kSamples);
    Eigen::MatrixXd jac(kSamples, 2);
    double sse = residuals(a, b, r, &jac);
    for (int iter = 0; iter < 500; ++iter) {
        const Eigen::Matrix2d jtj = jac.transpose() * jac;
        const Eigen::Vector2d g = jac.transpose() * r;
        Eigen::Matrix2d lhs = jtj;
        lhs(0, 0) += lambda * jtj(0, 0);
        lhs(1, 1) += lambda * jtj(1, 1);
        const Eigen::Vector2d step = lhs.ldlt().solve(-g);
        const double a_try = a + step(0);
        const double b_try = b + step(1);
        const double sse_try = a_try > 0.0 && b_try > 0.0 ? residuals(a_try, b_try, r_try, nullptr) : sse + 1.0;
        if (sse_try < sse) {
            const bool converged = sse - sse_try < 1e-15 * (1.0 + sse);
            a = a_try;
            b = b_try;
            lambda = std::max(lambda / 10.0, 1e-12);
            sse = residuals(a, b, r, &jac);
            if (converged) break;
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) break;
        }
    }
    return {a, b};
}

std::string EmbeddingKey::file_name() const {
    auto clean = [](const std::string& s) {
        std::string out;
        for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
        return out;
    };
    std::ostringstream os;
    os << "emb-" << std::hex << dataset_fingerprint << std::dec << '-' << clean(treatment) << '-' << clean(outcome)
       << "-s" << seed << '-' << to_string(method) << ".csv";
    return os.str();
}

void write_embedding(std::ostream& out, const EmbeddingKey& key, const Embedding2D& emb) {
    out << "# natex-embedding v1\n";
    out << "# dataset: " << std::hex << key.dataset_fingerprint << std::dec << '\n';
    out << "# treatment: " << key.treatment << '\n';
    out << "# outcome: " << key.outcome << '\n';
    out << "# seed: " << key.seed << '\n';
    out << "# method: " << to_string(key.method) << '\n';
    out << "# fell_back: " << (emb.fell_back ? 1 : 0) << '\n';
    out << "row_id,x,y\n";
    for (std::size_t i = 0; i < emb.row_ids.size(); ++i) {
        out << emb.row_ids[i] << ',' << format_double(emb.coords[i].x) << ',' << format_double(emb.coords[i].y) << '\n';
    }
}

std::optional<Embedding2D> read_embedding(std::istream& in, const EmbeddingKey& key) {
    std::ostringstream expected;
    write_embedding(expected, key, Embedding2D{});
    // Everything but the fell_back line and the body must match byte for byte.
    std::istringstream header(expected.str());
    std::string want;
    std::string got;
    Embedding2D emb;
    emb.seed = key.seed;
    emb.method = key.method;
    while (std::getline(header, want)) {
        if (!std::getline(in, got)) return std::nullopt;
        if (want.rfind("# fell_back:", 0) == 0) {
            if (got.rfind("# fell_back:", 0) != 0) return std::nullopt;
            emb.fell_back = got.back() == '1';
            if (emb.fell_back) emb.method = EmbedMethod::pca;
            continue;
        }
        if (got != want) return std::nullopt;
    }
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) return std::nullopt;
        RowId id = 0;
        Point2 p;
        const char* begin = line.data();
        if (std::from_chars(begin, begin + c1, id).ec != std::errc() ||
            std::from_chars(begin + c1 + 1, begin + c2, p.x).ec != std::errc() ||
            std::from_chars(begin + c2 + 1, begin + line.size(), p.y).ec != std::errc()) {
            return std::nullopt;
        }
        emb.row_ids.push_back(id);
        emb.coords.push_back(p);
    }
    return emb;
}

} // namespace natex
