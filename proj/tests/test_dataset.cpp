#include "natex/dataset.hpp"
#include "natex/error.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

using namespace natex;

TEST_CASE("three-line file parses into two numeric columns") {
    const auto ds = parse_csv("a,b\n1,2\n3,4");
    CHECK(ds.row_count() == 2);
    REQUIRE(ds.column_count() == 2);
    CHECK(ds.column(0).kind == ColumnKind::numeric);
    CHECK(ds.column(1).kind == ColumnKind::numeric);
    CHECK(ds.number(1, 1) == 4.0);
    CHECK(ds.row_ids()[0] == 0);
    CHECK(ds.row_ids()[1] == 1);
}

TEST_CASE("ragged row reports its line") {
    try {
        parse_csv("a,b\n1");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    try {
        parse_csv("a,b\n1,2\n\n3,4,5\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
    }
}

TEST_CASE("empty input is an error") {
    CHECK_THROWS_AS(parse_csv(""), ParseError);
    CHECK_THROWS_AS(parse_csv("\n\n"), ParseError);
}

TEST_CASE("duplicate header names are rejected") { CHECK_THROWS_AS(parse_csv("a,a\n1,2"), ParseError); }

TEST_CASE("question marks and blanks are missing; text makes a column categorical") {
    const auto ds = parse_csv("hp,name,w\n130,ford,3504\n?,chevy,3693\n,amc,\n");
    const auto hp = ds.column_index("hp");
    const auto name = ds.column_index("name");
    CHECK(ds.column(hp).kind == ColumnKind::numeric);
    CHECK(ds.column(name).kind == ColumnKind::categorical);
    CHECK(ds.column(name).role == Role::excluded);
    CHECK(ds.is_missing(1, hp));
    CHECK(ds.is_missing(2, hp));
    CHECK(std::isnan(ds.number(1, hp)));
    CHECK(ds.is_missing(2, ds.column_index("w")));
    CHECK(ds.text(0, name) == "ford");
}

TEST_CASE("quoted fields keep delimiters and escaped quotes") {
    const auto ds = parse_csv("x,label\n1,\"a, b\"\n2,\"say \"\"hi\"\"\"\n");
    CHECK(ds.text(0, 1) == "a, b");
    CHECK(ds.text(1, 1) == "say \"hi\"");
}

TEST_CASE("date-like names are typed temporal") {
    const auto ds = parse_csv("model year,YearBuilt,MoSold,GarageYrBlt,mpg,acceleration\n70,1990,5,1991,18,12\n");
    CHECK(ds.column(0).kind == ColumnKind::temporal);
    CHECK(ds.column(1).kind == ColumnKind::temporal);
    CHECK(ds.column(2).kind == ColumnKind::temporal);
    CHECK(ds.column(3).kind == ColumnKind::temporal);
    CHECK(ds.column(4).kind == ColumnKind::numeric);
    CHECK(ds.column(5).kind == ColumnKind::numeric);
    for (std::size_t c = 0; c < 4; ++c) CHECK(ds.column(c).role == Role::excluded);
}

TEST_CASE("kind overrides win over inference") {
    CsvOptions opts;
    opts.kind_overrides["origin"] = ColumnKind::categorical;
    opts.kind_overrides["year"] = ColumnKind::numeric;
    const auto ds = parse_csv("origin,year,x\n1,70,2\n2,71,3\n", opts);
    CHECK(ds.column(0).kind == ColumnKind::categorical);
    CHECK(ds.column(1).kind == ColumnKind::numeric);
    opts.kind_overrides["nope"] = ColumnKind::numeric;
    CHECK_THROWS_AS(parse_csv("origin,year,x\n1,70,2\n", opts), InvalidArgument);
}

TEST_CASE("other delimiters") {
    CsvOptions opts;
    opts.delimiter = ';';
    const auto ds = parse_csv("a;b\n1,5;2\n", opts);
    CHECK(ds.column(0).kind == ColumnKind::categorical);
    CHECK(ds.number(0, 1) == 2.0);
}

TEST_CASE("roles") {
    const auto raw = parse_csv("id,mpg,hp,weight,acc,name\n1,18,130,3504,12,a\n2,15,165,3693,11.5,b\n");
    const std::vector<std::string> outcomes{"mpg", "hp"};

    SUBCASE("named outcomes, everything else numeric becomes a treatment") {
        const auto ds = assign_roles(raw, {}, outcomes);
        CHECK(ds.column(ds.column_index("mpg")).role == Role::outcome);
        CHECK(ds.column(ds.column_index("hp")).role == Role::outcome);
        CHECK(ds.column(ds.column_index("weight")).role == Role::treatment);
        CHECK(ds.column(ds.column_index("acc")).role == Role::treatment);
        CHECK(ds.column(ds.column_index("id")).role == Role::excluded);
        CHECK(ds.column(ds.column_index("name")).role == Role::excluded);
    }
    SUBCASE("named treatments leave the rest as covariates") {
        const std::vector<std::string> treatments{"weight"};
        const auto ds = assign_roles(raw, treatments, outcomes);
        CHECK(ds.column(ds.column_index("weight")).role == Role::treatment);
        CHECK(ds.column(ds.column_index("acc")).role == Role::covariate);
    }
    SUBCASE("no outcomes: all numeric columns are treatments") {
        const auto ds = assign_roles(raw, {}, {});
        for (const auto& col : ds.columns()) {
            if (col.kind == ColumnKind::numeric && col.name != "id") CHECK(col.role == Role::treatment);
        }
    }
    SUBCASE("overlap is an error") {
        const std::vector<std::string> treatments{"mpg"};
        CHECK_THROWS_AS(assign_roles(raw, treatments, outcomes), InvalidArgument);
    }
    SUBCASE("unknown and non-numeric names are errors") {
        const std::vector<std::string> bad{"zz"};
        CHECK_THROWS_AS(assign_roles(raw, {}, bad), InvalidArgument);
        const std::vector<std::string> text{"name"};
        CHECK_THROWS_AS(assign_roles(raw, {}, text), InvalidArgument);
    }
    SUBCASE("explicit exclusion") {
        RoleOptions opts;
        opts.exclude = {"acc"};
        const auto ds = assign_roles(raw, {}, outcomes, opts);
        CHECK(ds.column(ds.column_index("acc")).role == Role::excluded);
    }
    SUBCASE("with_outcome promotes an analysis column only") {
        const auto ds = assign_roles(raw, {}, outcomes);
        const auto promoted = with_outcome(ds, "weight");
        CHECK(promoted.column(promoted.column_index("weight")).role == Role::outcome);
        CHECK(promoted.fingerprint() == ds.fingerprint());
        CHECK_THROWS_AS(with_outcome(ds, "name"), InvalidArgument);
    }
}

TEST_CASE("fingerprint follows content and analysis membership") {
    const auto a = parse_csv("x,y,z\n1,2,3\n4,5,6\n");
    const auto b = parse_csv("x,y,z\n1,2,3\n4,5,7\n");
    CHECK(a.fingerprint() != b.fingerprint());
    CHECK(parse_csv("x,y,z\n1,2,3\n4,5,6\n").fingerprint() == a.fingerprint());
    RoleOptions opts;
    opts.exclude = {"z"};
    CHECK(assign_roles(a, {}, {}, opts).fingerprint() != a.fingerprint());
}

TEST_CASE("active rows") {
    const auto ds = parse_csv("a,b,c\n1,2,3\n?,2,3\n1,,3\n1,2,?\n5,6,7\n");
    const std::vector<std::string> ab{"a", "b"};
    CHECK(active_rows(ds, {}, ab) == std::vector<RowId>{0, 3, 4});
    const std::vector<std::string> all{"a", "b", "c"};
    CHECK(active_rows(ds, {}, all) == std::vector<RowId>{0, 4});

    RowMask mask;
    mask.excluded_ids = {0, 1, 2, 3, 4};
    CHECK(active_rows(ds, mask, ab).empty());

    const auto full = parse_csv("a,b\n1,2\n3,4\n5,6\n");
    const std::vector<std::string> both{"a", "b"};
    CHECK(active_rows(full, {}, both) == std::vector<RowId>{0, 1, 2});
}

TEST_CASE("active rows are ascending and shrink monotonically with the mask") {
    auto ds = testing::confounded(200, 3);
    const std::vector<std::string> cols{"t", "y"};
    std::mt19937_64 rng(11);
    RowMask mask;
    auto previous = active_rows(ds, mask, cols);
    for (int step = 0; step < 50; ++step) {
        mask.excluded_ids.insert(static_cast<RowId>(rng() % 200));
        const auto now = active_rows(ds, mask, cols);
        CHECK(std::is_sorted(now.begin(), now.end()));
        CHECK(std::includes(previous.begin(), previous.end(), now.begin(), now.end()));
        for (RowId id : now) CHECK_FALSE(mask.contains(id));
        CHECK(now.size() + mask.excluded_ids.size() == 200);
        previous = now;
    }
}

TEST_CASE("write then parse round-trips cells exactly") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> value(-1e6, 1e6);
    const std::vector<std::string> words{"plain", "with,comma", "with \"quote\"", "?", "", "  padded  ", "line"};
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t rows = 1 + rng() % 30;
        std::string csv = "num,txt,mixed\n";
        for (std::size_t r = 0; r < rows; ++r) {
            const bool missing = rng() % 5 == 0;
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", value(rng));
            csv += missing ? std::string("?") : std::string(buf);
            const auto& w = words[rng() % words.size()];
            csv += ",\"";
            for (char c : w) csv += c == '"' ? std::string("\"\"") : std::string(1, c);
            csv += "\",";
            csv += rng() % 2 ? std::to_string(rng() % 100) : std::string("x") + std::to_string(r);
            csv += '\n';
        }
        const auto first = parse_csv(csv);
        const auto second = parse_csv(testing::to_csv(first));
        REQUIRE(second.row_count() == first.row_count());
        REQUIRE(second.column_count() == first.column_count());
        for (std::size_t c = 0; c < first.column_count(); ++c) {
            CHECK(second.column(c).kind == first.column(c).kind);
            for (std::size_t r = 0; r < first.row_count(); ++r) {
                CHECK(second.is_missing(r, c) == first.is_missing(r, c));
                CHECK(second.text(r, c) == first.text(r, c));
                if (!first.is_missing(r, c) && first.column(c).kind == ColumnKind::numeric) {
                    CHECK(second.number(r, c) == first.number(r, c));
                }
            }
        }
        CHECK(second.fingerprint() == first.fingerprint());
    }
}

TEST_CASE("load_csv_file reads from disk") {
    testing::TempDir dir;
    const auto path = dir.path / "t.csv";
    std::ofstream(path) << "a,b\n1,2\n";
    const auto ds = load_csv_file(path);
    CHECK(ds.row_count() == 1);
    CHECK_THROWS_AS(load_csv_file(dir.path / "missing.csv"), Error);
}
