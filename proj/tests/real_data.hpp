#pragma once

#include "natex/report.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

namespace natex::testing {

// NATEX_DATA_DIR, else the repository's data/ directory.
inline std::filesystem::path data_dir() {
    if (const char* env = std::getenv("NATEX_DATA_DIR"); env && *env) return env;
    return NATEX_DEFAULT_DATA_DIR;
}

struct RealData {
    std::string file;
    PrepareOptions options;
    // The same options as `natex analyze` flags.
    std::string cli_flags;
    // The same options as POST /datasets query parameters.
    std::string query;

    std::filesystem::path path() const { return data_dir() / file; }
    bool available() const { return std::filesystem::exists(path()); }
    Dataset load() const { return load_prepared(path(), options); }
};

// UCI Auto MPG with header; origin is a region code, not a quantity.
inline RealData auto_mpg() {
    RealData d;
    d.file = "auto-mpg.csv";
    d.options.outcomes = {"mpg", "horsepower"};
    d.options.kinds["origin"] = ColumnKind::categorical;
    d.cli_flags = "--outcomes mpg,horsepower --kinds origin=categorical";
    d.query = "outcomes=mpg,horsepower&kinds=origin=categorical";
    return d;
}

// Ames housing in Kaggle's column spelling. The quality/condition scores are
// ordinal and the dwelling class is a code.
inline RealData ames() {
    RealData d;
    d.file = "ames.csv";
    d.options.outcomes = {"SalePrice"};
    d.options.kinds["OverallQual"] = ColumnKind::ordinal;
    d.options.kinds["OverallCond"] = ColumnKind::ordinal;
    d.options.kinds["MSSubClass"] = ColumnKind::categorical;
    d.cli_flags = "--outcomes SalePrice --kinds OverallQual=ordinal,OverallCond=ordinal,MSSubClass=categorical";
    d.query = "outcomes=SalePrice&kinds=OverallQual=ordinal,OverallCond=ordinal,MSSubClass=categorical";
    return d;
}

// Row id holding the largest value of a numeric column.
inline RowId argmax_row(const Dataset& ds, const std::string& column) {
    const auto col = ds.column_index(column);
    std::size_t best = 0;
    for (std::size_t r = 1; r < ds.row_count(); ++r) {
        if (ds.number(r, col) > ds.number(best, col)) best = r;
    }
    return ds.row_ids()[best];
}

} // namespace natex::testing
