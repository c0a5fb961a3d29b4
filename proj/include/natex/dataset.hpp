#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace natex {

// Stable row identity: position in the source file, starting at 0.
using RowId = std::int64_t;

enum class ColumnKind { numeric, categorical, ordinal, temporal };
enum class Role { treatment, outcome, covariate, excluded };

std::string_view to_string(ColumnKind kind);
std::string_view to_string(Role role);
ColumnKind parse_column_kind(std::string_view text);

struct ColumnSchema {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    Role role = Role::covariate;

    bool is_analysis() const { return role != Role::excluded; }
};

struct CsvOptions {
    char delimiter = ',';
    bool has_header = true;
    std::vector<std::string> missing_tokens = {"?", ""};
    // Numeric columns whose name contains a date-like token (year, yr, month,
    // mo, date, day, time) are typed temporal.
    bool detect_temporal_names = true;
    std::map<std::string, ColumnKind, std::less<>> kind_overrides;
};

class Dataset {
public:
    Dataset() = default;

    // Numeric table built in memory. NaN cells are missing. Row ids are 0..n-1.
    static Dataset from_columns(std::string name, std::vector<std::string> column_names,
                                const std::vector<std::vector<double>>& columns);

    const std::string& name() const { return name_; }
    std::size_t row_count() const { return row_ids_.size(); }
    std::size_t column_count() const { return schema_.size(); }

    std::span<const ColumnSchema> columns() const { return schema_; }
    const ColumnSchema& column(std::size_t index) const { return schema_.at(index); }
    std::optional<std::size_t> find_column(std::string_view name) const;
    // Throws InvalidArgument for unknown names.
    std::size_t column_index(std::string_view name) const;

    std::span<const RowId> row_ids() const { return row_ids_; }
    std::optional<std::size_t> position_of(RowId id) const;

    bool is_missing(std::size_t row, std::size_t col) const { return cells_[col].missing[row]; }
    // NaN when the cell is missing or the column is not numeric.
    double number(std::size_t row, std::size_t col) const { return cells_[col].values[row]; }
    const std::string& text(std::size_t row, std::size_t col) const { return cells_[col].text[row]; }
    std::span<const double> numbers(std::size_t col) const { return cells_[col].values; }

    // FNV-1a over column names, kinds, analysis membership and cell text;
    // identifies the feature-relevant content for caches.
    std::uint64_t fingerprint() const { return fingerprint_; }

private:
    struct ColumnCells {
        std::vector<std::string> text;
        std::vector<double> values;
        std::vector<bool> missing;
        bool parsed_numeric = false;
    };

    void finalize();

    std::string name_;
    std::vector<ColumnSchema> schema_;
    std::vector<RowId> row_ids_;
    std::vector<ColumnCells> cells_;
    std::uint64_t fingerprint_ = 0;

    friend Dataset parse_csv(std::string_view, const CsvOptions&, std::string);
    friend Dataset with_schema(const Dataset&, std::vector<ColumnSchema>);
};

struct RowMask {
    std::set<RowId> excluded_ids;

    bool contains(RowId id) const { return excluded_ids.count(id) != 0; }
    bool empty() const { return excluded_ids.empty(); }
};

Dataset parse_csv(std::string_view text, const CsvOptions& options = {}, std::string name = {});
Dataset load_csv(std::istream& in, const CsvOptions& options = {}, std::string name = {});
Dataset load_csv_file(const std::filesystem::path& path, const CsvOptions& options = {});

// Writes the header and raw cell text; reloading yields identical values.
void write_csv(const Dataset& ds, std::ostream& out, char delimiter = ',');

// Same cells and row ids, replaced schema. Names and column count must match.
Dataset with_schema(const Dataset& ds, std::vector<ColumnSchema> schema);

struct RoleOptions {
    // Analysis columns forced to role=excluded.
    std::vector<std::string> exclude;
    // Columns named "id" (any case) are excluded.
    bool exclude_identifiers = true;
};

// Named columns take the given roles. With no treatments named, every other
// numeric column becomes a treatment; otherwise the rest become covariates.
// Non-numeric columns are always excluded.
Dataset assign_roles(const Dataset& ds, std::span<const std::string> treatments,
                     std::span<const std::string> outcomes, const RoleOptions& options = {});

// Copy in which `name` has role=outcome; other roles are kept.
Dataset with_outcome(const Dataset& ds, std::string_view name);

std::vector<RowId> active_rows(const Dataset& ds, const RowMask& mask,
                               std::span<const std::size_t> needed_columns);
std::vector<RowId> active_rows(const Dataset& ds, const RowMask& mask,
                               std::span<const std::string> needed);

} // namespace natex
