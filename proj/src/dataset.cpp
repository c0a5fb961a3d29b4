#include "natex/dataset.hpp"

#include "natex/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace natex {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::optional<double> parse_number(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

// Splits camelCase, digits and punctuation into lowercase tokens.
std::vector<std::string> name_tokens(std::string_view name) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
    };
    for (std::size_t i = 0; i < name.size(); ++i) {
        const char c = name[i];
        const bool alpha = std::isalpha(static_cast<unsigned char>(c)) != 0;
        const bool digit = std::isdigit(static_cast<unsigned char>(c)) != 0;
        if (!alpha && !digit) {
            flush();
            continue;
        }
        if (!current.empty()) {
            const char prev = name[i - 1];
            const bool boundary =
                (std::islower(static_cast<unsigned char>(prev)) && std::isupper(static_cast<unsigned char>(c))) ||
                (std::isdigit(static_cast<unsigned char>(prev)) != 0) != digit;
            if (boundary) flush();
        }
        current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    flush();
    return tokens;
}

bool looks_temporal(std::string_view name) {
    static const std::set<std::string, std::less<>> kTemporal = {
        "year", "years", "yr", "month", "mo", "date", "day", "time", "timestamp"};
    for (const auto& token : name_tokens(name)) {
        if (kTemporal.count(token) != 0) return true;
    }
    return false;
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

Role default_role(const ColumnSchema& col) {
    return col.kind == ColumnKind::numeric ? Role::covariate : Role::excluded;
}

struct Record {
    std::vector<std::string> fields;
    std::vector<bool> quoted;
    std::size_t line = 0;
};

// RFC 4180 style records: quoted fields may hold delimiters, doubled quotes
// and newlines. Blank lines are skipped.
std::vector<Record> split_records(std::string_view text, char delimiter) {
    std::vector<Record> records;
    std::size_t line = 1;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        Record rec;
        rec.line = line;
        std::string field;
        bool quoted = false;
        bool end_of_record = false;
        bool any_content = false;
        while (!end_of_record) {
            if (i >= n) {
                end_of_record = true;
                break;
            }
            char c = text[i];
            if (c == '"' && trim(field).empty()) {
                quoted = true;
                any_content = true;
                field.clear();
                ++i;
                while (i < n) {
                    if (text[i] == '"') {
                        if (i + 1 < n && text[i + 1] == '"') {
                            field.push_back('"');
                            i += 2;
                            continue;
                        }
                        ++i;
                        break;
                    }
                    if (text[i] == '\n') ++line;
                    field.push_back(text[i++]);
                }
                // Anything between the closing quote and the delimiter is dropped.
                while (i < n && text[i] != delimiter && text[i] != '\n') ++i;
                continue;
            }
            if (c == delimiter) {
                rec.fields.push_back(quoted ? field : std::string(trim(field)));
                rec.quoted.push_back(quoted);
                field.clear();
                quoted = false;
                any_content = true;
                ++i;
                continue;
            }
            if (c == '\n') {
                ++line;
                ++i;
                end_of_record = true;
                break;
            }
            if (c != '\r' && c != ' ' && c != '\t') any_content = true;
            field.push_back(c);
            ++i;
        }
        if (!any_content) continue;
        rec.fields.push_back(quoted ? field : std::string(trim(field)));
        rec.quoted.push_back(quoted);
        records.push_back(std::move(rec));
    }
    return records;
}

void write_field(std::ostream& out, const std::string& text, char delimiter) {
    const bool needs_quotes = text.find_first_of(std::string{delimiter, '"', '\n', '\r'}) != std::string::npos ||
                              (!text.empty() && (text.front() == ' ' || text.back() == ' '));
    if (!needs_quotes) {
        out << text;
        return;
    }
    out << '"';
    for (char c : text) {
        if (c == '"') out << '"';
        out << c;
    }
    out << '"';
}

} // namespace

std::string_view to_string(ColumnKind kind) {
    switch (kind) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::ordinal: return "ordinal";
    case ColumnKind::temporal: return "temporal";
    }
    return "numeric";
}

std::string_view to_string(Role role) {
    switch (role) {
    case Role::treatment: return "treatment";
    case Role::outcome: return "outcome";
    case Role::covariate: return "covariate";
    case Role::excluded: return "excluded";
    }
    return "excluded";
}

ColumnKind parse_column_kind(std::string_view text) {
    if (text == "numeric") return ColumnKind::numeric;
    if (text == "categorical") return ColumnKind::categorical;
    if (text == "ordinal") return ColumnKind::ordinal;
    if (text == "temporal") return ColumnKind::temporal;
    throw InvalidArgument("unknown column kind '" + std::string(text) + "'");
}

Dataset Dataset::from_columns(std::string name, std::vector<std::string> column_names,
                              const std::vector<std::vector<double>>& columns) {
    if (column_names.size() != columns.size()) throw InvalidArgument("column name count does not match data");
    const std::size_t n = columns.empty() ? 0 : columns.front().size();
    Dataset ds;
    ds.name_ = std::move(name);
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c].size() != n) throw InvalidArgument("column '" + column_names[c] + "' has a different length");
        ds.schema_.push_back({std::move(column_names[c]), ColumnKind::numeric, Role::covariate});
        ColumnCells cells;
        cells.values.reserve(n);
        for (double v : columns[c]) {
            const bool missing = !std::isfinite(v);
            std::ostringstream text;
            if (!missing) {
                text.precision(17);
                text << v;
            }
            cells.text.push_back(text.str());
            cells.values.push_back(missing ? kNaN : v);
            cells.missing.push_back(missing);
        }
        cells.parsed_numeric = true;
        ds.cells_.push_back(std::move(cells));
    }
    ds.row_ids_.resize(n);
    for (std::size_t r = 0; r < n; ++r) ds.row_ids_[r] = static_cast<RowId>(r);
    ds.finalize();
    return ds;
}

void Dataset::finalize() {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        h ^= 0xff;
        h *= 1099511628211ULL;
    };
    // Kinds and analysis membership decide the feature set, so they are part
    // of the identity cached embeddings are keyed on.
    for (const auto& col : schema_) {
        mix(col.name);
        mix(to_string(col.kind));
        mix(col.is_analysis() ? "a" : "-");
    }
    for (const auto& cells : cells_) {
        for (const auto& t : cells.text) mix(t);
    }
    fingerprint_ = h;
}

std::optional<std::size_t> Dataset::find_column(std::string_view name) const {
    for (std::size_t i = 0; i < schema_.size(); ++i) {
        if (schema_[i].name == name) return i;
    }
    return std::nullopt;
}

std::size_t Dataset::column_index(std::string_view name) const {
    if (auto idx = find_column(name)) return *idx;
    throw InvalidArgument("unknown column '" + std::string(name) + "'");
}

std::optional<std::size_t> Dataset::position_of(RowId id) const {
    // Ids are assigned in file order, so the table is sorted.
    auto it = std::lower_bound(row_ids_.begin(), row_ids_.end(), id);
    if (it == row_ids_.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - row_ids_.begin());
}

Dataset parse_csv(std::string_view text, const CsvOptions& options, std::string name) {
    if (trim(text).empty()) throw ParseError(1, "empty input");
    auto records = split_records(text, options.delimiter);
    if (records.empty()) throw ParseError(1, "empty input");

    std::vector<std::string> names;
    std::size_t first_data = 0;
    if (options.has_header) {
        names = records.front().fields;
        first_data = 1;
    } else {
        for (std::size_t c = 0; c < records.front().fields.size(); ++c) names.push_back("col" + std::to_string(c));
    }
    const std::size_t width = names.size();
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (names[i] == names[j]) throw ParseError(records.front().line, "duplicate column name '" + names[i] + "'");
        }
    }

    Dataset ds;
    ds.name_ = std::move(name);
    ds.cells_.resize(width);
    const std::size_t n = records.size() - first_data;
    for (auto& cells : ds.cells_) {
        cells.text.reserve(n);
        cells.values.reserve(n);
        cells.missing.reserve(n);
    }
    for (std::size_t r = first_data; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.fields.size() != width) {
            throw ParseError(rec.line, "expected " + std::to_string(width) + " fields, found " +
                                           std::to_string(rec.fields.size()));
        }
        for (std::size_t c = 0; c < width; ++c) {
            const auto& field = rec.fields[c];
            const bool missing = !rec.quoted[c] && std::find(options.missing_tokens.begin(),
                                                             options.missing_tokens.end(),
                                                             field) != options.missing_tokens.end();
            ds.cells_[c].text.push_back(field);
            ds.cells_[c].missing.push_back(missing);
            ds.cells_[c].values.push_back(kNaN);
        }
    }

    for (std::size_t c = 0; c < width; ++c) {
        auto& cells = ds.cells_[c];
        bool numeric = false;
        bool all_parse = true;
        for (std::size_t r = 0; r < n && all_parse; ++r) {
            if (cells.missing[r]) continue;
            if (auto v = parse_number(cells.text[r])) {
                cells.values[r] = *v;
                numeric = true;
            } else {
                all_parse = false;
            }
        }
        numeric = numeric && all_parse;
        if (!numeric) std::fill(cells.values.begin(), cells.values.end(), kNaN);
        cells.parsed_numeric = numeric;

        ColumnSchema col{names[c], numeric ? ColumnKind::numeric : ColumnKind::categorical, Role::covariate};
        if (numeric && options.detect_temporal_names && looks_temporal(col.name)) col.kind = ColumnKind::temporal;
        if (auto it = options.kind_overrides.find(col.name); it != options.kind_overrides.end()) {
            if (it->second == ColumnKind::numeric && !numeric) {
                throw ParseError(records.front().line, "column '" + col.name + "' is not numeric");
            }
            col.kind = it->second;
        }
        col.role = default_role(col);
        ds.schema_.push_back(std::move(col));
    }
    for (const auto& [col_name, kind] : options.kind_overrides) {
        (void)kind;
        if (!ds.find_column(col_name)) throw InvalidArgument("kind override for unknown column '" + col_name + "'");
    }

    ds.row_ids_.resize(n);
    for (std::size_t r = 0; r < n; ++r) ds.row_ids_[r] = static_cast<RowId>(r);
    ds.finalize();
    return ds;
}

Dataset load_csv(std::istream& in, const CsvOptions& options, std::string name) {
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_csv(buffer.str(), options, std::move(name));
}

Dataset load_csv_file(const std::filesystem::path& path, const CsvOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return load_csv(in, options, path.filename().string());
}

void write_csv(const Dataset& ds, std::ostream& out, char delimiter) {
    for (std::size_t c = 0; c < ds.column_count(); ++c) {
        if (c) out << delimiter;
        write_field(out, ds.column(c).name, delimiter);
    }
    out << '\n';
    for (std::size_t r = 0; r < ds.row_count(); ++r) {
        for (std::size_t c = 0; c < ds.column_count(); ++c) {
            if (c) out << delimiter;
            const auto& text = ds.text(r, c);
            if (ds.is_missing(r, c)) out << text;
            else if (text.empty() || text == "?") out << '"' << text << '"';
            else write_field(out, text, delimiter);
        }
        out << '\n';
    }
}

Dataset with_schema(const Dataset& ds, std::vector<ColumnSchema> schema) {
    if (schema.size() != ds.column_count()) throw InvalidArgument("schema width does not match dataset");
    for (std::size_t c = 0; c < schema.size(); ++c) {
        if (schema[c].name != ds.column(c).name) throw InvalidArgument("schema renames column '" + ds.column(c).name + "'");
        if (schema[c].kind == ColumnKind::numeric && !ds.cells_[c].parsed_numeric) {
            throw InvalidArgument("column '" + schema[c].name + "' is not numeric");
        }
    }
    Dataset out = ds;
    out.schema_ = std::move(schema);
    out.finalize();
    return out;
}

Dataset assign_roles(const Dataset& ds, std::span<const std::string> treatments, std::span<const std::string> outcomes,
                     const RoleOptions& options) {
    for (const auto& name : treatments) ds.column_index(name);
    for (const auto& name : outcomes) ds.column_index(name);
    for (const auto& name : options.exclude) ds.column_index(name);
    for (const auto& t : treatments) {
        if (std::find(outcomes.begin(), outcomes.end(), t) != outcomes.end()) {
            throw InvalidArgument("column '" + t + "' is both a treatment and an outcome");
        }
    }

    auto contains = [](auto&& list, const std::string& name) {
        return std::find(list.begin(), list.end(), name) != list.end();
    };

    std::vector<ColumnSchema> schema(ds.columns().begin(), ds.columns().end());
    for (auto& col : schema) {
        const bool analysable = col.kind == ColumnKind::numeric;
        const bool forced_out = contains(options.exclude, col.name) ||
                                (options.exclude_identifiers && iequals(col.name, "id"));
        const bool named = contains(treatments, col.name) || contains(outcomes, col.name);
        if (named && !analysable) {
            throw InvalidArgument("column '" + col.name + "' is " + std::string(to_string(col.kind)) +
                                  " and cannot take an analysis role");
        }
        if (named && forced_out) throw InvalidArgument("column '" + col.name + "' is both named and excluded");
        if (contains(outcomes, col.name)) col.role = Role::outcome;
        else if (contains(treatments, col.name)) col.role = Role::treatment;
        else if (!analysable || forced_out) col.role = Role::excluded;
        else col.role = treatments.empty() ? Role::treatment : Role::covariate;
    }
    return with_schema(ds, std::move(schema));
}

Dataset with_outcome(const Dataset& ds, std::string_view name) {
    const std::size_t col = ds.column_index(name);
    if (ds.column(col).role == Role::outcome) return ds;
    if (ds.column(col).kind != ColumnKind::numeric || ds.column(col).role == Role::excluded) {
        throw InvalidArgument("column '" + std::string(name) + "' cannot be an outcome");
    }
    std::vector<ColumnSchema> schema(ds.columns().begin(), ds.columns().end());
    schema[col].role = Role::outcome;
    return with_schema(ds, std::move(schema));
}

std::vector<RowId> active_rows(const Dataset& ds, const RowMask& mask, std::span<const std::size_t> needed_columns) {
    std::vector<RowId> out;
    out.reserve(ds.row_count());
    for (std::size_t r = 0; r < ds.row_count(); ++r) {
        const RowId id = ds.row_ids()[r];
        if (mask.contains(id)) continue;
        bool complete = true;
        for (std::size_t c : needed_columns) {
            if (ds.is_missing(r, c)) {
                complete = false;
                break;
            }
        }
        if (complete) out.push_back(id);
    }
    return out;
}

std::vector<RowId> active_rows(const Dataset& ds, const RowMask& mask, std::span<const std::string> needed) {
    std::vector<std::size_t> cols;
    cols.reserve(needed.size());
    for (const auto& name : needed) cols.push_back(ds.column_index(name));
    return active_rows(ds, mask, cols);
}

} // namespace natex
