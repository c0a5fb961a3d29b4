#include "natex/server.hpp"
#include "support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <thread>

using namespace natex;

namespace {

// Server on a free port, serving from a background thread.
struct LiveServer {
    AnalysisServer server;
    int port = -1;
    std::thread thread;

    explicit LiveServer(ServerConfig config = {}) : server([&] {
        config.port = 0;
        return config;
    }()) {
        port = server.bind();
        REQUIRE(port > 0);
        thread = std::thread([this] { server.serve(); });
    }
    ~LiveServer() {
        server.stop();
        thread.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(30, 0);
        return c;
    }
};

Json body_of(const httplib::Result& r) {
    REQUIRE(r);
    return Json::parse(r->body);
}

std::string upload(httplib::Client& c, const std::string& csv, const std::string& query = "outcomes=y") {
    auto r = c.Post("/datasets?" + query, csv, "text/csv");
    REQUIRE(r);
    REQUIRE(r->status == 201);
    return body_of(r)["id"].get<std::string>();
}

Json start_session(httplib::Client& c, const std::string& dataset, std::size_t k = 4) {
    Json body{{"dataset", dataset}, {"treatment", "t"}, {"outcome", "y"}, {"k", k}, {"method", "pca"}};
    auto r = c.Post("/sessions", body.dump(), "application/json");
    REQUIRE(r);
    REQUIRE(r->status == 201);
    return body_of(r);
}

httplib::Result act(httplib::Client& c, const std::string& sid, const Json& body) {
    return c.Post("/sessions/" + sid + "/actions", body.dump(), "application/json");
}

} // namespace

TEST_CASE("upload, inspect and analyze over HTTP") {
    LiveServer live;
    auto c = live.client();
    const auto csv = testing::to_csv(testing::confounded(150));
    const auto ds = upload(c, csv);

    auto schema = body_of(c.Get("/datasets/" + ds + "/schema"));
    CHECK(schema["rows"] == 150);
    REQUIRE(schema["columns"].size() == 6);
    CHECK(schema["columns"][5]["name"] == "y");
    CHECK(schema["columns"][5]["role"] == "outcome");
    CHECK(schema["columns"][4]["role"] == "treatment");

    const auto created = start_session(c, ds);
    const auto sid = created["session_id"].get<std::string>();
    CHECK(created["version"] == 1);
    CHECK(created["snapshot"]["k"] == 4);
    CHECK(check_snapshot_json(created["snapshot"]).empty());

    auto r = act(c, sid, Json{{"action", "set_k"}, {"payload", {{"k", 6}}}, {"version", 1}});
    REQUIRE(r);
    CHECK(r->status == 200);
    auto doc = body_of(r);
    CHECK(doc["version"] == 2);
    CHECK(doc["snapshot"]["clusters"].size() == 6);
    CHECK(check_snapshot_json(doc["snapshot"]).empty());

    doc = body_of(act(c, sid, Json{{"action", "exclude"}, {"payload", {{"row_ids", {1, 2, 3}}}}}));
    CHECK(doc["snapshot"]["excluded_ids"] == Json::array({1, 2, 3}));
    doc = body_of(act(c, sid, Json{{"action", "rename_cluster"},
                                   {"payload", {{"cluster", 0}, {"name", "left"}, {"color", "#FF0000"}}}}));
    CHECK(doc["snapshot"]["clusters"][0]["name"] == "left");
    CHECK(doc["snapshot"]["clusters"][0]["color"] == "#ff0000");
    doc = body_of(act(c, sid, Json{{"action", "set_selection"}, {"payload", {{"ids", Json::array()}}}}));
    CHECK(doc["snapshot"]["ate"]["defined"] == false);
    CHECK(doc["snapshot"]["ate"]["value"].is_null());
    doc = body_of(act(c, sid, Json{{"action", "undo"}}));
    CHECK(doc["version"] == 6);
    doc = body_of(act(c, sid, Json{{"action", "include_all"}}));
    CHECK(doc["snapshot"]["excluded_ids"].empty());
    doc = body_of(act(c, sid, Json{{"action", "set_covariate_display"}, {"payload", {{"names", {"c2"}}}}}));
    CHECK(doc["snapshot"]["covariate_display"] == Json::array({"c2"}));
    doc = body_of(act(c, sid, Json{{"action", "set_variables"}, {"payload", {{"treatment", "c1"}, {"outcome", "y"}}}}));
    CHECK(doc["snapshot"]["treatment"] == "c1");

    const auto snap = body_of(c.Get("/sessions/" + sid + "/snapshot"));
    CHECK(snap == doc["snapshot"]);
    CHECK(snap["version"] == doc["version"]);
}

TEST_CASE("multipart upload with options") {
    LiveServer live;
    auto c = live.client();
    const std::string csv = "id;size;grade;price\n1;10;a;100\n2;12;b;130\n3;9;a;95\n4;15;c;160\n";
    httplib::MultipartFormDataItems items{
        {"file", csv, "houses.csv", "text/csv"},
        {"outcomes", "price", "", ""},
        {"delimiter", ";", "", ""},
        {"exclude_columns", "id", "", ""},
    };
    auto r = c.Post("/datasets", items);
    REQUIRE(r);
    REQUIRE(r->status == 201);
    const auto doc = body_of(r);
    CHECK(doc["schema"]["name"] == "houses.csv");
    const auto& cols = doc["schema"]["columns"];
    CHECK(cols[0]["role"] == "excluded");
    CHECK(cols[1]["role"] == "treatment");
    CHECK(cols[2]["kind"] == "categorical");
    CHECK(cols[3]["role"] == "outcome");

    CHECK(c.Post("/datasets", httplib::MultipartFormDataItems{{"outcomes", "price", "", ""}})->status == 422);
}

TEST_CASE("errors map to status codes") {
    LiveServer live;
    auto c = live.client();
    const auto ds = upload(c, testing::to_csv(testing::confounded(60)));
    const auto sid = start_session(c, ds)["session_id"].get<std::string>();

    auto status_of = [&](const Json& body) { return act(c, sid, body)->status; };
    CHECK(status_of(Json{{"action", "set_k"}, {"payload", {{"k", 0}}}}) == 422);
    CHECK(status_of(Json{{"action", "set_k"}, {"payload", {{"k", "three"}}}}) == 422);
    CHECK(status_of(Json{{"action", "set_k"}, {"payload", {{"k", 61}}}}) == 422);
    CHECK(status_of(Json{{"action", "toggle_cluster"}, {"payload", {{"cluster", 40}}}}) == 422);
    CHECK(status_of(Json{{"action", "rename_cluster"}, {"payload", {{"cluster", 0}, {"name", "a"}, {"color", "zzz"}}}}) == 422);
    CHECK(status_of(Json{{"action", "fly"}}) == 422);
    CHECK(status_of(Json{{"payload", {}}}) == 422);
    CHECK(status_of(Json{{"action", "set_k"}, {"payload", {{"k", 3}}}, {"version", 7}}) == 409);
    CHECK(act(c, sid, Json{{"action", "undo"}})->status == 422); // nothing to undo yet

    auto bad = act(c, sid, Json{{"action", "set_k"}, {"payload", {{"k", 0}}}});
    const auto err = body_of(bad);
    CHECK(err["status"] == 422);
    CHECK_FALSE(err["error"].get<std::string>().empty());

    CHECK(c.Post("/sessions/" + sid + "/actions", "{not json", "application/json")->status == 400);
    CHECK(c.Post("/sessions/s-nope/actions", R"({"action":"undo"})", "application/json")->status == 404);
    CHECK(c.Get("/sessions/s-nope/snapshot")->status == 404);
    CHECK(c.Get("/datasets/ds-nope/schema")->status == 404);
    CHECK(c.Post("/sessions", Json{{"dataset", "ds-nope"}, {"treatment", "t"}, {"outcome", "y"}}.dump(),
                 "application/json")
              ->status == 404);
    CHECK(c.Post("/sessions", Json{{"dataset", ds}, {"treatment", "t"}, {"outcome", "t"}}.dump(), "application/json")
              ->status == 422);
    CHECK(c.Post("/datasets", "a,b\n1\n", "text/csv")->status == 422);

    // Failed actions leave the session where it was.
    CHECK(body_of(c.Get("/sessions/" + sid + "/snapshot"))["version"] == 1);
}

TEST_CASE("concurrent actions serialize") {
    LiveServer live;
    auto c = live.client();
    const auto ds = upload(c, testing::to_csv(testing::confounded(200)));
    const auto sid = start_session(c, ds)["session_id"].get<std::string>();

    SUBCASE("unversioned actions both apply") {
        int s1 = 0, s2 = 0;
        std::thread a([&] {
            auto cl = live.client();
            s1 = act(cl, sid, Json{{"action", "set_k"}, {"payload", {{"k", 5}}}})->status;
        });
        std::thread b([&] {
            auto cl = live.client();
            s2 = act(cl, sid, Json{{"action", "set_k"}, {"payload", {{"k", 7}}}})->status;
        });
        a.join();
        b.join();
        CHECK(s1 == 200);
        CHECK(s2 == 200);
        const auto snap = body_of(c.Get("/sessions/" + sid + "/snapshot"));
        CHECK(snap["version"] == 3);
        CHECK(check_snapshot_json(snap).empty());
    }
    SUBCASE("versioned actions against the same base: one wins") {
        int s1 = 0, s2 = 0;
        std::thread a([&] {
            auto cl = live.client();
            s1 = act(cl, sid, Json{{"action", "set_k"}, {"payload", {{"k", 5}}}, {"version", 1}})->status;
        });
        std::thread b([&] {
            auto cl = live.client();
            s2 = act(cl, sid, Json{{"action", "set_k"}, {"payload", {{"k", 7}}}, {"version", 1}})->status;
        });
        a.join();
        b.join();
        CHECK(((s1 == 200 && s2 == 409) || (s1 == 409 && s2 == 200)));
        CHECK(body_of(c.Get("/sessions/" + sid + "/snapshot"))["version"] == 2);
    }
}

TEST_CASE("snapshots stream as server-sent events") {
    LiveServer live;
    auto c = live.client();
    const auto ds = upload(c, testing::to_csv(testing::confounded(90)));
    const auto sid = start_session(c, ds)["session_id"].get<std::string>();

    std::string stream;
    std::vector<std::uint64_t> ids;
    std::thread listener([&] {
        auto cl = live.client();
        cl.Get("/sessions/" + sid + "/events", [&](const char* data, std::size_t len) {
            stream.append(data, len);
            std::size_t pos;
            while ((pos = stream.find("\n\n")) != std::string::npos) {
                const auto frame = stream.substr(0, pos);
                stream.erase(0, pos + 2);
                if (frame.rfind("id: ", 0) != 0) continue;
                ids.push_back(std::stoull(frame.substr(4, frame.find('\n') - 4)));
                const auto data_at = frame.find("data: ");
                REQUIRE(data_at != std::string::npos);
                const auto doc = Json::parse(frame.substr(data_at + 6));
                CHECK(doc["version"] == ids.back());
                CHECK(frame.find("event: snapshot") != std::string::npos);
            }
            return ids.size() < 3;
        });
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    act(c, sid, Json{{"action", "set_k"}, {"payload", {{"k", 3}}}});
    act(c, sid, Json{{"action", "set_k"}, {"payload", {{"k", 5}}}});
    listener.join();
    CHECK(ids == std::vector<std::uint64_t>{1, 2, 3});
}

TEST_CASE("events resume after a given version") {
    LiveServer live;
    auto c = live.client();
    const auto ds = upload(c, testing::to_csv(testing::confounded(90)));
    const auto sid = start_session(c, ds)["session_id"].get<std::string>();
    for (std::size_t k : {2, 3, 4}) act(c, sid, Json{{"action", "set_k"}, {"payload", {{"k", k}}}});

    std::string stream;
    std::vector<std::uint64_t> ids;
    c.Get("/sessions/" + sid + "/events?since=2", [&](const char* data, std::size_t len) {
        stream.append(data, len);
        std::size_t pos;
        while ((pos = stream.find("\n\n")) != std::string::npos) {
            const auto frame = stream.substr(0, pos);
            stream.erase(0, pos + 2);
            if (frame.rfind("id: ", 0) == 0) ids.push_back(std::stoull(frame.substr(4)));
        }
        return ids.size() < 2;
    });
    CHECK(ids == std::vector<std::uint64_t>{3, 4});
}

TEST_CASE("the service works without a transport") {
    AnalysisService svc;
    const auto ds = svc.add_dataset(testing::confounded(120))["id"].get<std::string>();
    const auto created = svc.create_session(Json{{"dataset", ds}, {"treatment", "t"}, {"outcome", "y"}, {"k", 3}});
    const auto sid = created["session_id"].get<std::string>();
    CHECK(created["snapshot"]["method"] == "neighbor-graph");
    CHECK_THROWS_AS(svc.apply_action(sid, Json{{"action", "set_k"}, {"payload", {{"k", -2}}}}), ApiError);
    const auto out = svc.apply_action(sid, Json{{"action", "toggle_cluster"}, {"payload", {{"cluster", 0}}}});
    CHECK(out["version"] == 2);
    CHECK(svc.snapshot(sid) == out["snapshot"]);

    auto api = svc.session(sid);
    const auto events = svc.wait_events(*api, 0, std::chrono::milliseconds(10));
    REQUIRE(events.size() == 2);
    CHECK(events[0].first == 1);
    CHECK(events[1].first == 2);
    CHECK(svc.wait_events(*api, 2, std::chrono::milliseconds(10)).empty());
}

TEST_CASE("documents expose their own inconsistencies") {
    AnalysisService svc;
    const auto ds = svc.add_dataset(testing::confounded(150))["id"].get<std::string>();
    auto doc = svc.create_session(Json{{"dataset", ds}, {"treatment", "t"}, {"outcome", "y"}, {"k", 3}, {"method", "pca"}})["snapshot"];
    REQUIRE(check_snapshot_json(doc).empty());
    REQUIRE(doc["ate"]["defined"] == true);

    auto tampered = doc;
    tampered["ate"]["value"] = doc["ate"]["value"].get<double>() + 0.01;
    CHECK_FALSE(check_snapshot_json(tampered).empty());
    tampered = doc;
    tampered["clusters"][0]["selected"] = !doc["clusters"][0]["selected"].get<bool>();
    CHECK_FALSE(check_snapshot_json(tampered).empty());
}

TEST_CASE("environment configuration") {
    setenv("NATEX_PORT", "9123", 1);
    setenv("NATEX_SEED", "99", 1);
    auto config = server_config_from_env();
    CHECK(config.port == 9123);
    CHECK(config.default_seed == 99);
    unsetenv("NATEX_PORT");
    unsetenv("NATEX_SEED");
    config = server_config_from_env();
    CHECK(config.port == kDefaultPort);
    CHECK(config.default_seed == kDefaultSeed);
}
