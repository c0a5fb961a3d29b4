#pragma once

#include "natex/dataset.hpp"
#include "natex/report.hpp"
#include "natex/session.hpp"
#include "natex/wire.hpp"

#include "natex/error.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace httplib {
class Server;
}

namespace natex {

inline constexpr int kDefaultPort = 8787;

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = kDefaultPort;
    std::uint64_t default_seed = kDefaultSeed;
    std::optional<std::filesystem::path> cache_dir;
    // Served at "/" when set (the browser client's build output).
    std::optional<std::filesystem::path> static_dir;
};

// Port and seed from NATEX_PORT / NATEX_SEED, falling back to the defaults.
ServerConfig server_config_from_env();

// HTTP status carried out of the service layer.
class ApiError : public Error {
public:
    ApiError(int status, const std::string& what) : Error(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

// One live session: actions serialize on action_mutex; readers take the
// last published document under publish_mutex.
struct ApiSession {
    static constexpr std::size_t kEventBacklog = 256;

    std::string id;
    std::string dataset_id;
    std::unique_ptr<Session> session;

    std::mutex action_mutex;

    mutable std::mutex publish_mutex;
    std::condition_variable published;
    std::uint64_t version = 0;
    std::shared_ptr<const std::string> document;
    std::deque<std::pair<std::uint64_t, std::shared_ptr<const std::string>>> backlog;
};

// Datasets and sessions, independent of the transport.
class AnalysisService {
public:
    explicit AnalysisService(ServerConfig config = {});

    // Returns {id, schema}.
    Json add_dataset(Dataset ds);
    Json dataset_schema(const std::string& id) const;
    std::shared_ptr<const Dataset> dataset(const std::string& id) const;

    // Body {dataset, treatment, outcome, k?, seed?, method?}; returns
    // {session_id, version, snapshot}.
    Json create_session(const Json& body);
    // Body {action, payload?, version?}; returns {version, snapshot}.
    Json apply_action(const std::string& session_id, const Json& body);
    Json snapshot(const std::string& session_id) const;
    std::shared_ptr<ApiSession> session(const std::string& id) const;

    // Blocks until a version after `after` exists or the service stops.
    // Returns the published documents in version order.
    std::vector<std::pair<std::uint64_t, std::shared_ptr<const std::string>>> wait_events(ApiSession& s,
                                                                                         std::uint64_t after,
                                                                                         std::chrono::milliseconds timeout) const;
    void shutdown();
    bool stopping() const { return stopping_.load(); }

private:
    std::string new_id(const char* prefix);
    void publish(ApiSession& s, const AnalysisSnapshot& snapshot);

    ServerConfig config_;
    mutable std::mutex registry_mutex_;
    std::map<std::string, std::shared_ptr<const Dataset>> datasets_;
    std::map<std::string, std::shared_ptr<ApiSession>> sessions_;
    std::uint64_t next_id_ = 1;
    std::uint64_t id_salt_;
    std::atomic<bool> stopping_{false};
};

class AnalysisServer {
public:
    explicit AnalysisServer(ServerConfig config = {});
    ~AnalysisServer();

    AnalysisServer(const AnalysisServer&) = delete;
    AnalysisServer& operator=(const AnalysisServer&) = delete;

    AnalysisService& service() { return service_; }

    // Binds the configured port (0 picks a free one) and returns it, or -1.
    int bind();
    // Serves until stop(); call after bind().
    bool serve();
    void stop();

private:
    void routes();

    ServerConfig config_;
    AnalysisService service_;
    std::unique_ptr<httplib::Server> http_;
};

} // namespace natex
