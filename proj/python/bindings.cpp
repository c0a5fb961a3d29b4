#include "natex/error.hpp"
#include "natex/report.hpp"
#include "natex/session.hpp"
#include "natex/wire.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;

namespace {

// Snapshots cross the boundary as the same JSON document the server sends.
py::object to_python(const natex::Json& doc) {
    return py::module_::import("json").attr("loads")(doc.dump());
}

py::object snapshot_dict(const natex::Session& s) { return to_python(natex::snapshot_to_json(*s.snapshot(), 0)); }

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "natex analysis engine";
    m.attr("__version__") = NATEX_VERSION;

    py::register_exception<natex::Error>(m, "NatexError", PyExc_ValueError);

    py::class_<natex::Dataset, std::shared_ptr<natex::Dataset>>(m, "Dataset")
        .def_property_readonly("name", &natex::Dataset::name)
        .def_property_readonly("rows", &natex::Dataset::row_count)
        .def_property_readonly("fingerprint", &natex::Dataset::fingerprint)
        .def("schema", [](const natex::Dataset& ds) { return to_python(natex::schema_to_json(ds)); })
        .def("column", [](const natex::Dataset& ds, const std::string& name) {
            const auto col = ds.column_index(name);
            std::vector<std::optional<double>> out;
            for (std::size_t r = 0; r < ds.row_count(); ++r) {
                if (ds.is_missing(r, col)) out.emplace_back();
                else out.emplace_back(ds.number(r, col));
            }
            return out;
        });

    m.def(
        "load_csv",
        [](const std::string& text, std::vector<std::string> outcomes, std::vector<std::string> treatments,
           std::vector<std::string> exclude_columns, std::map<std::string, std::string> kinds, const std::string& name) {
            natex::CsvOptions csv;
            for (const auto& [col, kind] : kinds) csv.kind_overrides[col] = natex::parse_column_kind(kind);
            natex::PrepareOptions options;
            options.outcomes = std::move(outcomes);
            options.treatments = std::move(treatments);
            options.exclude_columns = std::move(exclude_columns);
            return std::make_shared<natex::Dataset>(natex::prepare(natex::parse_csv(text, csv, name), options));
        },
        py::arg("text"), py::arg("outcomes") = std::vector<std::string>{},
        py::arg("treatments") = std::vector<std::string>{}, py::arg("exclude_columns") = std::vector<std::string>{},
        py::arg("kinds") = std::map<std::string, std::string>{}, py::arg("name") = "");

    m.def(
        "ols",
        [](std::vector<double> x, std::vector<double> y) { return to_python(natex::fit_to_json(natex::ols_fit(x, y))); },
        py::arg("x"), py::arg("y"));

    m.def(
        "embed",
        [](const natex::Dataset& ds, const std::string& treatment, const std::string& outcome, std::uint64_t seed,
           const std::string& method) {
            const auto fm = natex::build_features(ds, treatment, outcome);
            const auto emb = natex::embed_2d(fm, seed, natex::parse_embed_method(method));
            std::vector<std::pair<double, double>> coords;
            for (const auto& p : emb.coords) coords.emplace_back(p.x, p.y);
            return py::make_tuple(emb.row_ids, coords);
        },
        py::arg("dataset"), py::arg("treatment"), py::arg("outcome"), py::arg("seed") = natex::kDefaultSeed,
        py::arg("method") = "neighbor-graph");

    py::class_<natex::Session>(m, "Session")
        .def(py::init([](std::shared_ptr<natex::Dataset> ds, const std::string& treatment, const std::string& outcome,
                         std::size_t k, std::uint64_t seed, const std::string& method,
                         std::optional<std::filesystem::path> cache_dir) {
                 natex::SessionConfig config;
                 config.k = k;
                 config.seed = seed;
                 config.method = natex::parse_embed_method(method);
                 config.cache_dir = std::move(cache_dir);
                 return std::make_unique<natex::Session>(std::move(ds), treatment, outcome, config);
             }),
             py::arg("dataset"), py::arg("treatment"), py::arg("outcome"), py::arg("k") = natex::kDefaultClusters,
             py::arg("seed") = natex::kDefaultSeed, py::arg("method") = "neighbor-graph",
             py::arg("cache_dir") = std::nullopt)
        .def("snapshot", &snapshot_dict)
        .def("set_variables",
             [](natex::Session& s, const std::string& t, const std::string& o) {
                 s.set_variables(t, o);
                 return snapshot_dict(s);
             })
        .def("set_k",
             [](natex::Session& s, std::size_t k) {
                 s.set_k(k);
                 return snapshot_dict(s);
             })
        .def("toggle_cluster",
             [](natex::Session& s, int id) {
                 s.toggle_cluster(id);
                 return snapshot_dict(s);
             })
        .def("set_selection",
             [](natex::Session& s, const std::set<int>& ids) {
                 s.set_selection(ids);
                 return snapshot_dict(s);
             })
        .def("exclude",
             [](natex::Session& s, const std::vector<natex::RowId>& ids) {
                 s.exclude(ids);
                 return snapshot_dict(s);
             })
        .def("include_all",
             [](natex::Session& s) {
                 s.include_all();
                 return snapshot_dict(s);
             })
        .def("rename_cluster",
             [](natex::Session& s, int id, const std::string& name, const std::string& color) {
                 s.rename_cluster(id, name, color);
                 return snapshot_dict(s);
             })
        .def("undo", [](natex::Session& s) {
            s.undo();
            return snapshot_dict(s);
        });
}
