#include "natex/server.hpp"

#include "natex/error.hpp"

#include <httplib.h>

#include <cstdlib>
#include <random>
#include <sstream>

namespace natex {

namespace {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(' ');
        const auto e = item.find_last_not_of(' ');
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

template <class T>
T field(const Json& obj, const char* name) {
    if (!obj.is_object() || !obj.contains(name)) throw ApiError(422, std::string("missing field '") + name + "'");
    try {
        return obj.at(name).get<T>();
    } catch (const Json::exception&) {
        throw ApiError(422, std::string("field '") + name + "' has the wrong type");
    }
}

template <class T>
std::optional<T> optional_field(const Json& obj, const char* name) {
    if (!obj.is_object() || !obj.contains(name) || obj.at(name).is_null()) return std::nullopt;
    return field<T>(obj, name);
}

std::size_t positive_k(const Json& obj) {
    const auto& v = obj.at("k");
    if (!v.is_number_integer() || v.get<long long>() < 1) throw ApiError(422, "k must be a positive integer");
    return v.get<std::size_t>();
}

long env_or(const char* name, long fallback) {
    if (const char* v = std::getenv(name); v && *v) {
        char* end = nullptr;
        const long parsed = std::strtol(v, &end, 10);
        if (end && *end == '\0') return parsed;
    }
    return fallback;
}

void send_json(httplib::Response& res, const Json& doc, int status = 200) {
    res.status = status;
    res.set_content(doc.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& reason) {
    send_json(res, Json{{"error", reason}, {"status", status}}, status);
}

template <class F>
void guarded(httplib::Response& res, F&& body) {
    try {
        body();
    } catch (const ApiError& e) {
        send_error(res, e.status(), e.what());
    } catch (const Error& e) {
        send_error(res, 422, e.what());
    } catch (const Json::parse_error& e) {
        send_error(res, 400, std::string("malformed JSON: ") + e.what());
    } catch (const Json::exception& e) {
        send_error(res, 422, e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

} // namespace

ServerConfig server_config_from_env() {
    ServerConfig config;
    config.port = static_cast<int>(env_or("NATEX_PORT", kDefaultPort));
    config.default_seed = static_cast<std::uint64_t>(env_or("NATEX_SEED", static_cast<long>(kDefaultSeed)));
    return config;
}

AnalysisService::AnalysisService(ServerConfig config) : config_(std::move(config)) {
    std::random_device rd;
    id_salt_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::string AnalysisService::new_id(const char* prefix) {
    std::mt19937_64 mix(id_salt_ ^ next_id_);
    std::ostringstream os;
    os << prefix << std::hex << next_id_++ << '-' << (mix() & 0xffffffffffULL);
    return os.str();
}

Json AnalysisService::add_dataset(Dataset ds) {
    auto shared = std::make_shared<const Dataset>(std::move(ds));
    std::lock_guard lock(registry_mutex_);
    const std::string id = new_id("ds-");
    datasets_[id] = shared;
    return Json{{"id", id}, {"schema", schema_to_json(*shared)}};
}

std::shared_ptr<const Dataset> AnalysisService::dataset(const std::string& id) const {
    std::lock_guard lock(registry_mutex_);
    auto it = datasets_.find(id);
    if (it == datasets_.end()) throw ApiError(404, "unknown dataset '" + id + "'");
    return it->second;
}

Json AnalysisService::dataset_schema(const std::string& id) const { return schema_to_json(*dataset(id)); }

std::shared_ptr<ApiSession> AnalysisService::session(const std::string& id) const {
    std::lock_guard lock(registry_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ApiError(404, "unknown session '" + id + "'");
    return it->second;
}

void AnalysisService::publish(ApiSession& s, const AnalysisSnapshot& snapshot) {
    std::lock_guard lock(s.publish_mutex);
    ++s.version;
    s.document = std::make_shared<const std::string>(snapshot_to_json(snapshot, s.version).dump());
    s.backlog.emplace_back(s.version, s.document);
    if (s.backlog.size() > ApiSession::kEventBacklog) s.backlog.pop_front();
    s.published.notify_all();
}

Json AnalysisService::create_session(const Json& body) {
    const auto dataset_id = field<std::string>(body, "dataset");
    const auto treatment = field<std::string>(body, "treatment");
    const auto outcome = field<std::string>(body, "outcome");
    auto base = dataset(dataset_id);

    SessionConfig config;
    config.seed = optional_field<std::uint64_t>(body, "seed").value_or(config_.default_seed);
    if (body.contains("k") && !body.at("k").is_null()) config.k = positive_k(body);
    if (auto m = optional_field<std::string>(body, "method")) config.method = parse_embed_method(*m);
    config.cache_dir = config_.cache_dir;

    auto prepared = std::make_shared<const Dataset>(with_outcome(*base, outcome));
    auto api = std::make_shared<ApiSession>();
    api->dataset_id = dataset_id;
    api->session = std::make_unique<Session>(prepared, treatment, outcome, config);
    publish(*api, *api->session->snapshot());
    {
        std::lock_guard lock(registry_mutex_);
        api->id = new_id("s-");
        sessions_[api->id] = api;
    }
    std::lock_guard lock(api->publish_mutex);
    return Json{{"session_id", api->id}, {"version", api->version}, {"snapshot", Json::parse(*api->document)}};
}

Json AnalysisService::apply_action(const std::string& session_id, const Json& body) {
    auto api = session(session_id);
    const auto action = field<std::string>(body, "action");
    const Json payload = body.contains("payload") && !body.at("payload").is_null() ? body.at("payload") : Json::object();

    std::lock_guard serial(api->action_mutex);
    if (auto expected = optional_field<std::uint64_t>(body, "version")) {
        std::lock_guard lock(api->publish_mutex);
        if (*expected != api->version) {
            throw ApiError(409, "stale version " + std::to_string(*expected) + "; session is at " +
                                    std::to_string(api->version));
        }
    }

    Session& s = *api->session;
    Session::SnapshotPtr snap;
    if (action == "set_variables") {
        snap = s.set_variables(field<std::string>(payload, "treatment"), field<std::string>(payload, "outcome"));
    } else if (action == "set_k") {
        snap = s.set_k(positive_k(payload));
    } else if (action == "set_selection") {
        const auto ids = field<std::vector<int>>(payload, "ids");
        snap = s.set_selection(SelectionSet(ids.begin(), ids.end()));
    } else if (action == "toggle_cluster") {
        snap = s.toggle_cluster(field<int>(payload, "cluster"));
    } else if (action == "exclude") {
        snap = s.exclude(field<std::vector<RowId>>(payload, "row_ids"));
    } else if (action == "include_all") {
        snap = s.include_all();
    } else if (action == "rename_cluster") {
        snap = s.rename_cluster(field<int>(payload, "cluster"), field<std::string>(payload, "name"),
                                field<std::string>(payload, "color"));
    } else if (action == "set_covariate_display") {
        snap = s.set_covariate_display(field<std::vector<std::string>>(payload, "names"));
    } else if (action == "undo") {
        snap = s.undo();
    } else {
        throw ApiError(422, "unknown action '" + action + "'");
    }
    publish(*api, *snap);
    std::lock_guard lock(api->publish_mutex);
    return Json{{"version", api->version}, {"snapshot", Json::parse(*api->document)}};
}

Json AnalysisService::snapshot(const std::string& session_id) const {
    auto api = session(session_id);
    std::shared_ptr<const std::string> doc;
    {
        std::lock_guard lock(api->publish_mutex);
        doc = api->document;
    }
    return Json::parse(*doc);
}

std::vector<std::pair<std::uint64_t, std::shared_ptr<const std::string>>> AnalysisService::wait_events(
    ApiSession& s, std::uint64_t after, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(s.publish_mutex);
    s.published.wait_for(lock, timeout, [&] { return s.version > after || stopping_.load(); });
    std::vector<std::pair<std::uint64_t, std::shared_ptr<const std::string>>> out;
    for (const auto& entry : s.backlog) {
        if (entry.first > after) out.push_back(entry);
    }
    return out;
}

void AnalysisService::shutdown() {
    stopping_ = true;
    std::lock_guard lock(registry_mutex_);
    for (auto& [id, s] : sessions_) {
        std::lock_guard plock(s->publish_mutex);
        s->published.notify_all();
    }
}

AnalysisServer::AnalysisServer(ServerConfig config)
    : config_(config), service_(config), http_(std::make_unique<httplib::Server>()) {
    routes();
}

AnalysisServer::~AnalysisServer() { stop(); }

int AnalysisServer::bind() {
    if (config_.port == 0) return http_->bind_to_any_port(config_.host);
    return http_->bind_to_port(config_.host, config_.port) ? config_.port : -1;
}

bool AnalysisServer::serve() { return http_->listen_after_bind(); }

void AnalysisServer::stop() {
    service_.shutdown();
    if (http_) http_->stop();
}

void AnalysisServer::routes() {
    auto& http = *http_;
    AnalysisService* svc = &service_;

    if (config_.static_dir) http.set_mount_point("/", config_.static_dir->string());

    http.Post("/datasets", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            std::string csv;
            auto option = [&](const char* key) -> std::string {
                if (req.is_multipart_form_data() && req.has_file(key)) return req.get_file_value(key).content;
                return req.has_param(key) ? req.get_param_value(key) : std::string{};
            };
            if (req.is_multipart_form_data()) {
                if (!req.has_file("file")) throw ApiError(422, "multipart upload needs a 'file' part");
                csv = req.get_file_value("file").content;
            } else {
                csv = req.body;
            }
            PrepareOptions options;
            options.outcomes = split_list(option("outcomes"));
            options.treatments = split_list(option("treatments"));
            options.exclude_columns = split_list(option("exclude_columns"));
            CsvOptions csv_options;
            for (const auto& pair : split_list(option("kinds"))) {
                const auto eq = pair.find('=');
                if (eq == std::string::npos) throw ApiError(422, "kinds entries look like name=kind");
                csv_options.kind_overrides[pair.substr(0, eq)] = parse_column_kind(pair.substr(eq + 1));
            }
            if (const auto d = option("delimiter"); !d.empty()) csv_options.delimiter = d == "\\t" ? '\t' : d.front();
            options.delimiter = csv_options.delimiter;
            auto name = option("name");
            if (name.empty() && req.is_multipart_form_data()) name = req.get_file_value("file").filename;
            auto ds = prepare(parse_csv(csv, csv_options, name), options);
            send_json(res, svc->add_dataset(std::move(ds)), 201);
        });
    });

    http.Get(R"(/datasets/([^/]+)/schema)", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, svc->dataset_schema(req.matches[1])); });
    });

    http.Post("/sessions", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, svc->create_session(Json::parse(req.body)), 201); });
    });

    http.Post(R"(/sessions/([^/]+)/actions)", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, svc->apply_action(req.matches[1], Json::parse(req.body))); });
    });

    http.Get(R"(/sessions/([^/]+)/snapshot)", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, svc->snapshot(req.matches[1])); });
    });

    http.Get(R"(/sessions/([^/]+)/events)", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto api = svc->session(req.matches[1]);
            std::uint64_t last = 0;
            {
                std::lock_guard lock(api->publish_mutex);
                last = api->version - 1;
            }
            if (req.has_param("since")) last = std::stoull(req.get_param_value("since"));
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream", [svc, api, last](std::size_t, httplib::DataSink& sink) mutable {
                    if (svc->stopping()) {
                        sink.done();
                        return true;
                    }
                    const auto events = svc->wait_events(*api, last, std::chrono::milliseconds(500));
                    if (events.empty()) {
                        const std::string ping = ": keepalive\n\n";
                        return sink.write(ping.data(), ping.size());
                    }
                    for (const auto& [version, doc] : events) {
                        std::string frame = "id: " + std::to_string(version) + "\nevent: snapshot\ndata: ";
                        frame += *doc;
                        frame += "\n\n";
                        if (!sink.write(frame.data(), frame.size())) return false;
                        last = version;
                    }
                    return true;
                });
        });
    });
}

} // namespace natex
