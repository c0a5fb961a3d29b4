#include "natex/error.hpp"
#include "natex/report.hpp"
#include "natex/server.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <ctime>
#include <fstream>
#include <iostream>

namespace {

natex::AnalysisServer* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct TableFlags {
    std::string input;
    std::vector<std::string> outcomes;
    std::vector<std::string> treatments;
    std::vector<std::string> exclude_columns;
    std::vector<std::string> kinds;
    char delimiter = ',';

    void attach(CLI::App* cmd) {
        cmd->add_option("--input", input, "CSV file")->required()->check(CLI::ExistingFile);
        cmd->add_option("--treatments", treatments, "Columns allowed as treatments (default: every other numeric column)")
            ->delimiter(',');
        cmd->add_option("--exclude-columns", exclude_columns, "Columns left out of the analysis")->delimiter(',');
        cmd->add_option("--kinds", kinds, "Column kind overrides, name=numeric|categorical|ordinal|temporal")
            ->delimiter(',');
        cmd->add_option("--delimiter", delimiter, "Field separator");
    }

    natex::Dataset load() const {
        natex::PrepareOptions options;
        options.outcomes = outcomes;
        options.treatments = treatments;
        options.exclude_columns = exclude_columns;
        options.delimiter = delimiter;
        for (const auto& pair : kinds) {
            const auto eq = pair.find('=');
            if (eq == std::string::npos) throw natex::InvalidArgument("--kinds entries look like name=kind, got '" + pair + "'");
            options.kinds[pair.substr(0, eq)] = natex::parse_column_kind(pair.substr(eq + 1));
        }
        return natex::load_prepared(input, options);
    }
};

std::vector<std::string> treatment_columns(const natex::Dataset& ds) {
    std::vector<std::string> out;
    for (const auto& col : ds.columns()) {
        if (col.role == natex::Role::treatment) out.push_back(col.name);
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Natural-experiment analysis: embed, cluster, and estimate treatment effects"};
    app.set_version_flag("--version", NATEX_VERSION);
    app.require_subcommand(1);

    // analyze
    TableFlags a_table;
    natex::AnalyzeRequest request;
    std::string method = "neighbor-graph";
    std::vector<natex::RowId> exclude_ids;
    std::string select = "auto";
    std::string out_path;
    std::string plot_path;
    std::string a_cache;
    auto* analyze = app.add_subcommand("analyze", "Run one analysis and write a report");
    a_table.attach(analyze);
    analyze->add_option("--treatment", request.treatment)->required();
    analyze->add_option("--outcome", request.outcome)->required();
    analyze->add_option("--outcomes", a_table.outcomes, "All outcome columns (default: --outcome)")->delimiter(',');
    analyze->add_option("--k", request.k, "Number of clusters")->check(CLI::PositiveNumber)->capture_default_str();
    analyze->add_option("--seed", request.seed)->capture_default_str();
    analyze->add_option("--method", method)
        ->check(CLI::IsMember({"neighbor-graph", "umap", "pca"}))
        ->capture_default_str();
    analyze->add_option("--exclude-ids", exclude_ids, "Row ids to exclude")->delimiter(',');
    analyze->add_option("--select", select, "'auto' or a comma-separated cluster list")->capture_default_str();
    analyze->add_option("--out", out_path, "Report path (default: stdout)");
    analyze->add_option("--plot", plot_path, "SVG of the treatment-effect view");
    analyze->add_option("--cache-dir", a_cache, "Embedding cache directory");

    // serve
    natex::ServerConfig server_config = natex::server_config_from_env();
    std::string s_cache;
    std::string s_static;
    auto* serve = app.add_subcommand("serve", "Start the HTTP server");
    serve->add_option("--port", server_config.port)->check(CLI::Range(0, 65535))->capture_default_str();
    serve->add_option("--host", server_config.host)->capture_default_str();
    serve->add_option("--seed", server_config.default_seed, "Default seed for new sessions")->capture_default_str();
    serve->add_option("--cache-dir", s_cache, "Embedding cache directory");
    serve->add_option("--static", s_static, "Directory served at /")->check(CLI::ExistingDirectory);

    // precompute
    TableFlags p_table;
    std::string p_cache = ".natex-cache";
    std::uint64_t p_seed = natex::kDefaultSeed;
    std::string p_method = "neighbor-graph";
    auto* precompute = app.add_subcommand("precompute", "Cache an embedding for every treatment/outcome pair");
    p_table.attach(precompute);
    precompute->add_option("--outcomes", p_table.outcomes)->required()->delimiter(',');
    precompute->add_option("--cache-dir", p_cache)->capture_default_str();
    precompute->add_option("--seed", p_seed)->capture_default_str();
    precompute->add_option("--method", p_method)
        ->check(CLI::IsMember({"neighbor-graph", "umap", "pca"}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*analyze) {
            if (a_table.outcomes.empty()) a_table.outcomes.push_back(request.outcome);
            request.method = natex::parse_embed_method(method);
            request.exclude_ids = exclude_ids;
            if (!a_cache.empty()) request.cache_dir = a_cache;
            if (select != "auto") {
                natex::SelectionSet ids;
                try {
                    for (const auto& item : CLI::detail::split(select, ',')) {
                        if (!item.empty()) ids.insert(std::stoi(item));
                    }
                } catch (const std::exception&) {
                    std::cerr << "--select: expected 'auto' or a list of cluster ids\n";
                    return 2;
                }
                request.select = ids;
            }
            auto dataset = std::make_shared<const natex::Dataset>(a_table.load());
            auto result = natex::run_analysis(dataset, request);
            const auto& snapshot = *result.session->snapshot();
            const auto report = natex::make_report(snapshot, result.version, a_table.input, utc_now());
            if (out_path.empty()) {
                std::cout << report.dump(2) << '\n';
            } else {
                std::ofstream out(out_path);
                if (!out) throw natex::Error("cannot write '" + out_path + "'");
                out << report.dump(2) << '\n';
            }
            if (!plot_path.empty()) {
                std::ofstream out(plot_path);
                if (!out) throw natex::Error("cannot write '" + plot_path + "'");
                out << natex::render_svg(snapshot);
            }
            for (const auto& w : snapshot.warnings) std::cerr << "warning: " << w << '\n';
            return 0;
        }

        if (*serve) {
            if (!s_cache.empty()) server_config.cache_dir = s_cache;
            if (!s_static.empty()) server_config.static_dir = s_static;
            natex::AnalysisServer server(server_config);
            const int port = server.bind();
            if (port < 0) throw natex::Error("cannot bind " + server_config.host + ":" + std::to_string(server_config.port));
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on http://" << server_config.host << ':' << port << '\n';
            server.serve();
            g_server = nullptr;
            return 0;
        }

        if (*precompute) {
            const auto dataset = p_table.load();
            const auto method_value = natex::parse_embed_method(p_method);
            std::filesystem::create_directories(p_cache);
            std::size_t written = 0;
            for (const auto& treatment : treatment_columns(dataset)) {
                for (const auto& outcome : p_table.outcomes) {
                    const auto fm = natex::build_features(dataset, treatment, outcome);
                    const auto emb = natex::embed_2d(fm, p_seed, method_value);
                    const natex::EmbeddingKey key{dataset.fingerprint(), treatment, outcome, p_seed, method_value};
                    const auto file = std::filesystem::path(p_cache) / key.file_name();
                    std::ofstream out(file);
                    if (!out) throw natex::Error("cannot write '" + file.string() + "'");
                    natex::write_embedding(out, key, emb);
                    ++written;
                    std::cerr << treatment << " / " << outcome << " -> " << file.string() << '\n';
                }
            }
            std::cerr << written << " embeddings cached\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
