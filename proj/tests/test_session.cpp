#include "natex/error.hpp"
#include "natex/session.hpp"
#include "support.hpp"

#include <doctest.h>

#include <random>

using namespace natex;

namespace {

std::shared_ptr<const Dataset> shared(Dataset ds) { return std::make_shared<const Dataset>(std::move(ds)); }

SessionConfig pca(std::size_t k) {
    SessionConfig c;
    c.k = k;
    c.method = EmbedMethod::pca;
    return c;
}

} // namespace

TEST_CASE("a new session has defaults and a consistent snapshot") {
    Session s(shared(testing::confounded(300)), "t", "y");
    const auto& snap = *s.snapshot();
    CHECK(snap.k == kDefaultClusters);
    CHECK(snap.seed == kDefaultSeed);
    CHECK(snap.method == EmbedMethod::neighbor_graph);
    CHECK(snap.row_ids.size() == 300);
    CHECK(snap.fits.size() == 10);
    CHECK(snap.selection == default_selection(snap.fits));
    CHECK(snap.covariate_display == std::vector<std::string>{"c1", "c2", "c3", "c4"});
    CHECK(snap.covariate_summaries.size() == 4);
    CHECK(snap.covariate_summaries[0].size() == 10);
    CHECK(snap.cluster_meta[3] == default_cluster_meta(3));
    CHECK(is_consistent(snap));
    CHECK(snap.overall.slope > 0);
    CHECK(s.counters().embeddings_built == 1);
    CHECK(s.counters().dendrograms_built == 1);
}

TEST_CASE("invalid construction") {
    auto ds = shared(testing::confounded(60));
    CHECK_THROWS_AS(Session(ds, "t", "t"), InvalidArgument);
    CHECK_THROWS_AS(Session(ds, "t", "c1"), InvalidArgument);
    CHECK_THROWS_AS(Session(ds, "zz", "y"), InvalidArgument);
    CHECK_THROWS_AS(Session(ds, "t", "y", pca(61)), InvalidArgument);
    CHECK_THROWS_AS(Session(ds, "t", "y", pca(0)), InvalidArgument);
}

TEST_CASE("within-group effects reverse the pooled trend") {
    Session s(shared(testing::confounded(300)), "t", "y", pca(3));
    const auto& snap = *s.snapshot();
    CHECK(snap.overall.significant());
    CHECK(snap.overall.slope > 0);
    CHECK_FALSE(snap.simpson.flagged.empty());
    REQUIRE(snap.ate.defined);
    CHECK(snap.ate.ate == doctest::Approx(-0.5).epsilon(0.2));
}

TEST_CASE("one cluster reproduces the overall fit; singletons leave nothing defined") {
    auto ds = shared(testing::confounded(30));
    Session s(ds, "t", "y", pca(1));
    REQUIRE(s.snapshot()->ate.defined);
    CHECK(s.snapshot()->ate.ate == s.snapshot()->overall.slope);
    s.set_k(30);
    for (const auto& f : s.snapshot()->fits) CHECK_FALSE(f.defined);
    CHECK_FALSE(s.snapshot()->ate.defined);
    CHECK_THROWS_AS(s.set_k(31), InvalidArgument);
    CHECK_THROWS_AS(s.set_k(0), InvalidArgument);
}

TEST_CASE("excluding a row refits only its cluster") {
    Session s(shared(testing::confounded(240)), "t", "y", pca(6));
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const auto before = s.snapshot();
        const std::size_t fits_before = s.counters().fits_computed;
        const std::size_t i = rng() % before->row_ids.size();
        const RowId id = before->row_ids[i];
        if (std::binary_search(before->excluded_ids.begin(), before->excluded_ids.end(), id)) continue;
        const std::vector<RowId> one{id};
        const auto after = s.exclude(one);
        CHECK(after->assignment == before->assignment);
        const int c = before->assignment.labels[i];
        for (std::size_t j = 0; j < after->fits.size(); ++j) {
            if (static_cast<int>(j) == c) {
                CHECK(after->fits[j].n + 1 == before->fits[j].n);
            } else {
                CHECK(after->fits[j].slope == before->fits[j].slope);
                CHECK(after->fits[j].n == before->fits[j].n);
            }
        }
        CHECK(s.counters().fits_computed == fits_before + 1);
        CHECK(is_consistent(*after));
    }
    CHECK(s.counters().embeddings_built == 1);
    CHECK(s.counters().dendrograms_built == 1);
}

TEST_CASE("exclude then include_all restores the snapshot") {
    Session s(shared(testing::confounded(200)), "t", "y", pca(4));
    const auto original = s.snapshot();
    const std::vector<RowId> ids{3, 50, 51, 199};
    const auto excluded = s.exclude(ids);
    CHECK(excluded->excluded_ids == ids);
    CHECK(excluded->axes.t_max <= original->axes.t_max);
    const auto back = s.include_all();
    CHECK(back->excluded_ids.empty());
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(back->fits[c].slope == original->fits[c].slope);
        CHECK(back->fits[c].p_value == original->fits[c].p_value);
    }
    CHECK(back->selection == original->selection);
    CHECK(back->ate.ate == original->ate.ate);
}

TEST_CASE("unknown ids in an exclusion are reported, not fatal") {
    Session s(shared(testing::confounded(60)), "t", "y", pca(3));
    const std::vector<RowId> ids{5, 100000};
    const auto snap = s.exclude(ids);
    CHECK(snap->excluded_ids == std::vector<RowId>{5});
    REQUIRE(snap->warnings.size() == 1);
    CHECK(snap->warnings[0].find("100000") != std::string::npos);
}

TEST_CASE("selection") {
    Session s(shared(testing::confounded(300)), "t", "y", pca(5));
    const auto start = s.snapshot();

    SUBCASE("toggling twice is the identity") {
        const int c = *start->selection.begin();
        s.toggle_cluster(c);
        CHECK(s.snapshot()->selection.count(c) == 0);
        const auto again = s.toggle_cluster(c);
        CHECK(again->selection == start->selection);
        CHECK(again->ate.ate == start->ate.ate);
    }
    SUBCASE("deselecting everything leaves the effect undefined") {
        const auto snap = s.set_selection({});
        CHECK_FALSE(snap->ate.defined);
        CHECK(is_consistent(*snap));
    }
    SUBCASE("unknown clusters are rejected and change nothing") {
        CHECK_THROWS_AS(s.toggle_cluster(5), InvalidArgument);
        CHECK_THROWS_AS(s.set_selection({0, -1}), InvalidArgument);
        CHECK(s.snapshot() == start);
        CHECK(s.undo_depth() == 0);
    }
    SUBCASE("an explicit selection survives exclusions; re-cutting resets it") {
        s.set_selection({0});
        const std::vector<RowId> ids{1};
        CHECK(s.exclude(ids)->selection == SelectionSet{0});
        const auto recut = s.set_k(5);
        CHECK(recut->selection == default_selection(recut->fits));
    }
}

TEST_CASE("undefined clusters cannot be selected") {
    // Isolated pair of rows forms its own two-row cluster.
    std::vector<std::vector<double>> cols(4, std::vector<double>(40));
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    for (std::size_t i = 0; i < 40; ++i) {
        const double far = i >= 38 ? 100.0 : 0.0;
        cols[0][i] = g(rng) + far;
        cols[1][i] = g(rng) + far;
        cols[2][i] = g(rng);
        cols[3][i] = cols[2][i] + g(rng);
    }
    const std::vector<std::string> outcomes{"y"};
    auto ds = shared(assign_roles(Dataset::from_columns("pair", {"a", "b", "t", "y"}, cols), {}, outcomes));
    Session s(ds, "t", "y", pca(2));
    const auto& snap = *s.snapshot();
    const int small = snap.assignment.sizes[0] == 2 ? 0 : 1;
    REQUIRE(snap.assignment.sizes[static_cast<std::size_t>(small)] == 2);
    CHECK_FALSE(snap.fits[static_cast<std::size_t>(small)].defined);
    CHECK_THROWS_AS(s.toggle_cluster(small), InvalidArgument);
}

TEST_CASE("renaming") {
    Session s(shared(testing::confounded(150)), "t", "y", pca(4));
    const double before = s.snapshot()->ate.ate;
    const auto snap = s.rename_cluster(0, "small cars", "ABCDEF");
    CHECK(snap->cluster_meta[0].name == "small cars");
    CHECK(snap->cluster_meta[0].color == "#abcdef");
    CHECK(snap->ate.ate == before);
    CHECK_THROWS_AS(s.rename_cluster(0, "x", "zzz"), InvalidArgument);
    CHECK_THROWS_AS(s.rename_cluster(9, "x", "#000000"), InvalidArgument);

    s.set_k(7);
    const auto back = s.set_k(4);
    CHECK(back->cluster_meta[0].name == "small cars");
    CHECK(back->cluster_meta[1] == default_cluster_meta(1));
}

TEST_CASE("colors") {
    CHECK(normalize_color("#A1b2C3") == "#a1b2c3");
    CHECK(normalize_color("000000") == "#000000");
    CHECK_THROWS_AS(normalize_color("#12345"), InvalidArgument);
    CHECK_THROWS_AS(normalize_color("#12345g"), InvalidArgument);
}

TEST_CASE("switching variables reuses cached analyses") {
    Session s(shared(testing::confounded(200)), "t", "y", pca(4));
    const auto first = s.snapshot();
    s.set_k(3);
    CHECK(s.counters().embeddings_built == 1);
    CHECK(s.counters().dendrograms_built == 1);

    const auto other = s.set_variables("c1", "y");
    CHECK(other->treatment == "c1");
    CHECK(other->k == 3);
    CHECK(s.counters().embeddings_built == 2);
    CHECK(std::find(other->covariate_display.begin(), other->covariate_display.end(), "t") !=
          other->covariate_display.end());

    const auto again = s.set_variables("t", "y");
    CHECK(s.counters().embeddings_built == 2);
    CHECK(again->coords == first->coords);
    CHECK_THROWS_AS(s.set_variables("t", "t"), InvalidArgument);
    CHECK(s.snapshot() == again);
}

TEST_CASE("covariate display") {
    Session s(shared(testing::confounded(100)), "t", "y", pca(3));
    const std::vector<std::string> pick{"c4", "c1"};
    const auto snap = s.set_covariate_display(pick);
    CHECK(snap->covariate_display == pick);
    REQUIRE(snap->covariate_summaries.size() == 2);
    std::size_t total = 0;
    for (const auto& cs : snap->covariate_summaries[0]) total += cs.count;
    CHECK(total == 100);
    const std::vector<std::string> bad{"y"};
    CHECK_THROWS_AS(s.set_covariate_display(bad), InvalidArgument);
}

TEST_CASE("undo") {
    Session s(shared(testing::confounded(120)), "t", "y", pca(3));
    CHECK_THROWS_AS(s.undo(), InvalidArgument);
    const auto start = s.snapshot();
    s.set_k(5);
    const std::vector<RowId> ids{7};
    s.exclude(ids);
    s.rename_cluster(1, "b", "#010203");
    CHECK(s.undo()->cluster_meta[1] == default_cluster_meta(1));
    CHECK(s.undo()->excluded_ids.empty());
    const auto back = s.undo();
    CHECK(back->k == 3);
    CHECK(back->ate.ate == start->ate.ate);
    CHECK(back->selection == start->selection);

    for (int i = 0; i < 70; ++i) s.set_k(2 + static_cast<std::size_t>(i % 5));
    CHECK(s.undo_depth() == kUndoDepth);
}

TEST_CASE("embeddings are reused from the cache directory") {
    testing::TempDir dir;
    auto ds = shared(testing::confounded(150));
    SessionConfig config;
    config.k = 4;
    config.cache_dir = dir.path;
    Session first(ds, "t", "y", config);
    CHECK(first.counters().embeddings_built == 1);
    Session second(ds, "t", "y", config);
    CHECK(second.counters().embeddings_built == 0);
    CHECK(second.counters().embeddings_loaded == 1);
    CHECK(second.snapshot()->coords == first.snapshot()->coords);
    CHECK(second.snapshot()->ate.ate == first.snapshot()->ate.ate);

    config.seed = 7;
    Session third(ds, "t", "y", config);
    CHECK(third.counters().embeddings_built == 1);
}
