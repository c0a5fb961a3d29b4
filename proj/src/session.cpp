#include "natex/session.hpp"

#include "natex/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>

namespace natex {

namespace {

constexpr std::array<const char*, 10> kPalette = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                                  "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

std::optional<std::size_t> index_of(std::span<const RowId> sorted_ids, RowId id) {
    auto it = std::lower_bound(sorted_ids.begin(), sorted_ids.end(), id);
    if (it == sorted_ids.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - sorted_ids.begin());
}

} // namespace

ClusterMeta default_cluster_meta(int cluster_id) {
    return {"Cluster " + std::to_string(cluster_id), kPalette[static_cast<std::size_t>(cluster_id) % kPalette.size()]};
}

std::string normalize_color(std::string_view literal) {
    std::string_view hex = literal;
    if (!hex.empty() && hex.front() == '#') hex.remove_prefix(1);
    const bool ok = hex.size() == 6 && std::all_of(hex.begin(), hex.end(), [](char c) {
                        return std::isxdigit(static_cast<unsigned char>(c)) != 0;
                    });
    if (!ok) throw InvalidArgument("color '" + std::string(literal) + "' is not a 6-digit hex value");
    std::string out = "#";
    for (char c : hex) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

bool is_consistent(const AnalysisSnapshot& s) {
    if (s.fits.size() != s.assignment.k || s.assignment.sizes.size() != s.assignment.k) return false;
    const AteResult again = ate(s.fits, [&] {
        std::vector<std::size_t> n;
        for (const auto& f : s.fits) n.push_back(f.n);
        return n;
    }(), s.selection);
    if (again.defined != s.ate.defined || again.n_total != s.ate.n_total) return false;
    if (again.contributions.size() != s.ate.contributions.size()) return false;
    std::size_t total = 0;
    for (std::size_t i = 0; i < again.contributions.size(); ++i) {
        const auto& a = again.contributions[i];
        const auto& b = s.ate.contributions[i];
        if (a.cluster != b.cluster || a.n != b.n || a.b != b.b) return false;
        total += b.n;
    }
    if (total != s.ate.n_total) return false;
    if (!s.ate.defined) return true;
    return weighted_mean(s.ate.contributions) == s.ate.ate && again.ate == s.ate.ate;
}

Session::Session(std::shared_ptr<const Dataset> dataset, const std::string& treatment, const std::string& outcome,
                 SessionConfig config)
    : dataset_(std::move(dataset)), config_(std::move(config)) {
    if (!dataset_) throw InvalidArgument("session needs a dataset");
    if (config_.k < 1) throw InvalidArgument("cluster count must be at least 1");
    validate_variables(treatment, outcome);
    state_.treatment = treatment;
    state_.outcome = outcome;
    state_.seed = config_.seed;
    state_.method = config_.method;
    const Analysis& analysis = analysis_for(treatment, outcome);
    if (config_.k > analysis.features.rows()) {
        throw InvalidArgument("cluster count " + std::to_string(config_.k) + " is outside 1.." +
                              std::to_string(analysis.features.rows()));
    }
    state_.k = config_.k;
    snapshot_ = compute(state_, analysis, nullptr);
}

void Session::validate_variables(const std::string& treatment, const std::string& outcome) const {
    if (treatment == outcome) throw InvalidArgument("treatment and outcome must differ");
    const auto& t = dataset_->column(dataset_->column_index(treatment));
    const auto& o = dataset_->column(dataset_->column_index(outcome));
    if (o.role != Role::outcome) throw InvalidArgument("column '" + outcome + "' is not an outcome variable");
    if (t.role != Role::treatment && t.role != Role::covariate) {
        throw InvalidArgument("column '" + treatment + "' cannot be a treatment (role " +
                              std::string(to_string(t.role)) + ")");
    }
}

Embedding2D Session::embedding_for(const FeatureMatrix& fm, const std::string& treatment, const std::string& outcome) {
    const EmbeddingKey key{dataset_->fingerprint(), treatment, outcome, state_.seed, state_.method};
    std::filesystem::path file;
    if (config_.cache_dir) {
        file = *config_.cache_dir / key.file_name();
        std::ifstream in(file);
        if (in) {
            if (auto cached = read_embedding(in, key); cached && cached->row_ids == fm.row_ids) {
                ++counters_.embeddings_loaded;
                return std::move(*cached);
            }
        }
    }
    auto emb = embed_2d(fm, state_.seed, state_.method, config_.layout);
    ++counters_.embeddings_built;
    if (config_.cache_dir) {
        std::error_code ec;
        std::filesystem::create_directories(*config_.cache_dir, ec);
        std::ofstream out(file);
        if (out) write_embedding(out, key, emb);
    }
    return emb;
}

const Session::Analysis& Session::analysis_for(const std::string& treatment, const std::string& outcome) {
    const AnalysisKey key{treatment, outcome, state_.seed, state_.method};
    if (auto it = analyses_.find(key); it != analyses_.end()) return it->second;

    Analysis a;
    a.features = build_features(*dataset_, treatment, outcome);
    a.embedding = embedding_for(a.features, treatment, outcome);
    a.dendrogram = build_dendrogram(a.embedding);
    ++counters_.dendrograms_built;
    a.treatment_col = dataset_->column_index(treatment);
    a.outcome_col = dataset_->column_index(outcome);
    return analyses_.emplace(key, std::move(a)).first->second;
}

const Session::Analysis& Session::current_analysis() { return analysis_for(state_.treatment, state_.outcome); }

Session::SnapshotPtr Session::compute(SessionState& next, const Analysis& analysis, const AnalysisSnapshot* previous,
                                      std::vector<std::string> warnings) {
    const Dataset& ds = *dataset_;
    const auto& row_ids = analysis.features.row_ids;
    auto snap = std::make_shared<AnalysisSnapshot>();
    snap->treatment = next.treatment;
    snap->outcome = next.outcome;
    snap->k = next.k;
    snap->seed = next.seed;
    snap->method = analysis.embedding.method;
    snap->embedding_fell_back = analysis.embedding.fell_back;
    snap->row_ids = row_ids;
    snap->coords = analysis.embedding.coords;
    if (!analysis.embedding.warning.empty()) warnings.push_back(analysis.embedding.warning);

    snap->t_values.reserve(row_ids.size());
    snap->o_values.reserve(row_ids.size());
    for (RowId id : row_ids) {
        const std::size_t p = *ds.position_of(id);
        snap->t_values.push_back(ds.number(p, analysis.treatment_col));
        snap->o_values.push_back(ds.number(p, analysis.outcome_col));
    }

    const bool incremental = previous && previous->treatment == next.treatment && previous->outcome == next.outcome &&
                             previous->k == next.k && previous->seed == next.seed &&
                             previous->method == analysis.embedding.method && previous->row_ids == row_ids;
    snap->assignment = incremental ? previous->assignment : cut(analysis.dendrogram, next.k);

    if (incremental) {
        std::vector<RowId> changed;
        std::set_symmetric_difference(previous->excluded_ids.begin(), previous->excluded_ids.end(),
                                      next.mask.excluded_ids.begin(), next.mask.excluded_ids.end(),
                                      std::back_inserter(changed));
        std::vector<bool> dirty(next.k, false);
        for (RowId id : changed) {
            if (auto idx = index_of(row_ids, id)) dirty[static_cast<std::size_t>(snap->assignment.labels[*idx])] = true;
        }
        snap->fits = previous->fits;
        for (std::size_t c = 0; c < next.k; ++c) {
            if (!dirty[c]) continue;
            snap->fits[c] = fit_cluster(ds, analysis.treatment_col, analysis.outcome_col, row_ids, snap->assignment,
                                        next.mask, static_cast<int>(c));
            ++counters_.fits_computed;
        }
    } else {
        snap->fits = fit_clusters(ds, analysis.treatment_col, analysis.outcome_col, row_ids, snap->assignment, next.mask);
        counters_.fits_computed += snap->fits.size();
    }
    snap->overall = fit_overall(ds, analysis.treatment_col, analysis.outcome_col, row_ids, next.mask);

    if (next.selection_overridden) {
        SelectionSet kept;
        for (int id : next.selection) {
            if (id >= 0 && static_cast<std::size_t>(id) < next.k && snap->fits[static_cast<std::size_t>(id)].defined) {
                kept.insert(id);
            }
        }
        next.selection = std::move(kept);
    } else {
        next.selection = default_selection(snap->fits);
    }
    snap->selection = next.selection;

    std::vector<std::size_t> active_sizes;
    active_sizes.reserve(snap->fits.size());
    for (const auto& f : snap->fits) active_sizes.push_back(f.n);
    snap->ate = ate(snap->fits, active_sizes, snap->selection);
    snap->simpson = detect_simpson(snap->fits, snap->overall);

    for (std::size_t c = 0; c < next.k; ++c) {
        const int id = static_cast<int>(c);
        auto it = next.cluster_meta.find(id);
        snap->cluster_meta.push_back(it != next.cluster_meta.end() ? it->second : default_cluster_meta(id));
    }

    const auto& features = analysis.features.feature_names;
    auto is_feature = [&](const std::string& name) {
        return std::find(features.begin(), features.end(), name) != features.end();
    };
    if (next.covariate_display_overridden && std::all_of(next.covariate_display.begin(), next.covariate_display.end(), is_feature)) {
        snap->covariate_display = next.covariate_display;
    } else {
        next.covariate_display_overridden = false;
        next.covariate_display.assign(features.begin(),
                                      features.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(kDefaultDisplayedCovariates, features.size())));
        snap->covariate_display = next.covariate_display;
    }

    std::vector<std::vector<std::size_t>> members(next.k);
    for (std::size_t i = 0; i < row_ids.size(); ++i) {
        if (next.mask.contains(row_ids[i])) continue;
        members[static_cast<std::size_t>(snap->assignment.labels[i])].push_back(*ds.position_of(row_ids[i]));
    }
    for (const auto& name : snap->covariate_display) {
        const std::size_t col = ds.column_index(name);
        std::optional<std::pair<double, double>> range;
        for (const auto& group : members) {
            for (std::size_t p : group) {
                const double v = ds.number(p, col);
                range = range ? std::pair{std::min(range->first, v), std::max(range->second, v)} : std::pair{v, v};
            }
        }
        std::vector<ColumnSummary> per_cluster;
        per_cluster.reserve(next.k);
        for (const auto& group : members) {
            std::vector<double> values;
            values.reserve(group.size());
            for (std::size_t p : group) values.push_back(ds.number(p, col));
            per_cluster.push_back(summarize(std::move(values), range));
        }
        snap->covariate_summaries.push_back(std::move(per_cluster));
    }

    snap->excluded_ids.assign(next.mask.excluded_ids.begin(), next.mask.excluded_ids.end());
    bool first = true;
    for (std::size_t i = 0; i < row_ids.size(); ++i) {
        if (next.mask.contains(row_ids[i])) continue;
        const double t = snap->t_values[i];
        const double o = snap->o_values[i];
        if (first) {
            snap->axes = {t, t, o, o};
            first = false;
        }
        snap->axes.t_min = std::min(snap->axes.t_min, t);
        snap->axes.t_max = std::max(snap->axes.t_max, t);
        snap->axes.o_min = std::min(snap->axes.o_min, o);
        snap->axes.o_max = std::max(snap->axes.o_max, o);
    }
    snap->warnings = std::move(warnings);
    return snap;
}

Session::SnapshotPtr Session::commit(SessionState next, SnapshotPtr snapshot) {
    history_.push_back(std::move(state_));
    if (history_.size() > kUndoDepth) history_.pop_front();
    state_ = std::move(next);
    snapshot_ = std::move(snapshot);
    return snapshot_;
}

Session::SnapshotPtr Session::set_variables(const std::string& treatment, const std::string& outcome) {
    validate_variables(treatment, outcome);
    const Analysis& analysis = analysis_for(treatment, outcome);
    SessionState next = state_;
    next.treatment = treatment;
    next.outcome = outcome;
    next.k = std::min(std::max<std::size_t>(state_.k, 1), analysis.features.rows());
    next.selection.clear();
    next.selection_overridden = false;
    auto snap = compute(next, analysis, nullptr);
    return commit(std::move(next), std::move(snap));
}

Session::SnapshotPtr Session::set_k(std::size_t k) {
    const Analysis& analysis = current_analysis();
    const std::size_t n = analysis.features.rows();
    if (k < 1 || k > n) {
        throw InvalidArgument("cluster count " + std::to_string(k) + " is outside 1.." + std::to_string(n));
    }
    SessionState next = state_;
    next.k = k;
    next.selection.clear();
    next.selection_overridden = false;
    auto snap = compute(next, analysis, nullptr);
    return commit(std::move(next), std::move(snap));
}

Session::SnapshotPtr Session::set_selection(const SelectionSet& ids) {
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= state_.k) throw InvalidArgument("no cluster " + std::to_string(id));
        if (!snapshot_->fits[static_cast<std::size_t>(id)].defined) {
            throw InvalidArgument("cluster " + std::to_string(id) + " has no defined regression fit (fewer than " +
                                  std::to_string(kMinFitSize) + " rows or constant treatment)");
        }
    }
    SessionState next = state_;
    next.selection = ids;
    next.selection_overridden = true;
    auto snap = std::make_shared<AnalysisSnapshot>(*snapshot_);
    snap->selection = ids;
    std::vector<std::size_t> sizes;
    for (const auto& f : snap->fits) sizes.push_back(f.n);
    snap->ate = ate(snap->fits, sizes, ids);
    snap->warnings.clear();
    return commit(std::move(next), std::move(snap));
}

Session::SnapshotPtr Session::toggle_cluster(int cluster_id) {
    SelectionSet ids = state_.selection;
    if (ids.count(cluster_id)) ids.erase(cluster_id);
    else ids.insert(cluster_id);
    return set_selection(ids);
}

Session::SnapshotPtr Session::exclude(std::span<const RowId> row_ids) {
    SessionState next = state_;
    std::vector<RowId> unknown;
    for (RowId id : row_ids) {
        if (dataset_->position_of(id)) next.mask.excluded_ids.insert(id);
        else unknown.push_back(id);
    }
    std::vector<std::string> warnings;
    if (!unknown.empty()) {
        std::string msg = "ignored unknown row ids:";
        for (RowId id : unknown) msg += " " + std::to_string(id);
        warnings.push_back(std::move(msg));
    }
    auto snap = compute(next, current_analysis(), snapshot_.get(), std::move(warnings));
    return commit(std::move(next), std::move(snap));
}

Session::SnapshotPtr Session::include_all() {
    SessionState next = state_;
    next.mask.excluded_ids.clear();
    auto snap = compute(next, current_analysis(), snapshot_.get());
    return commit(std::move(next), std::move(snap));
}

Session::SnapshotPtr Session::rename_cluster(int cluster_id, const std::string& name, const std::string& color) {
    if (cluster_id < 0 || static_cast<std::size_t>(cluster_id) >= state_.k) {
        throw InvalidArgument("no cluster " + std::to_string(cluster_id));
    }
    ClusterMeta meta{name, normalize_color(color)};
    SessionState next = state_;
    next.cluster_meta[cluster_id] = meta;
    auto snap = std::make_shared<AnalysisSnapshot>(*snapshot_);
    snap->cluster_meta[static_cast<std::size_t>(cluster_id)] = std::move(meta);
    snap->warnings.clear();
    return commit(std::move(next), std::move(snap));
}

Session::SnapshotPtr Session::set_covariate_display(const std::vector<std::string>& names) {
    const Analysis& analysis = current_analysis();
    const auto& features = analysis.features.feature_names;
    for (const auto& name : names) {
        if (std::find(features.begin(), features.end(), name) == features.end()) {
            throw InvalidArgument("'" + name + "' is not a covariate of the current analysis");
        }
    }
    SessionState next = state_;
    next.covariate_display = names;
    next.covariate_display_overridden = true;
    auto snap = compute(next, analysis, snapshot_.get());
    return commit(std::move(next), std::move(snap));
}

Session::SnapshotPtr Session::undo() {
    if (history_.empty()) throw InvalidArgument("nothing to undo");
    SessionState prev = std::move(history_.back());
    history_.pop_back();
    const Analysis& analysis = analysis_for(prev.treatment, prev.outcome);
    auto snap = compute(prev, analysis, snapshot_.get());
    state_ = std::move(prev);
    snapshot_ = std::move(snap);
    return snapshot_;
}

} // namespace natex
