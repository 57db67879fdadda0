#include "streammem/error.hpp"
#include "streammem/http_backend.hpp"
#include "streammem/image_io.hpp"
#include "streammem/mock_backend.hpp"
#include "streammem/perception.hpp"

#include "../support/frames.hpp"

#include <doctest.h>
#include <fmt/format.h>
#include <httplib.h>

#include <mutex>
#include <thread>

using namespace streammem;
using nlohmann::json;

namespace {

// In-process stand-in for the model backend service. Records every request
// body and answers with canned replies; `fail_with` forces an HTTP status.
class MockServer {
public:
    MockServer()
    {
        const auto handler = [this](const std::string& endpoint) {
            return [this, endpoint](const httplib::Request& req, httplib::Response& res) {
                std::lock_guard lock(mu_);
                requests.emplace_back(endpoint, req.body);
                if (fail_with != 0) {
                    res.status = fail_with;
                    res.set_content("overloaded", "text/plain");
                    return;
                }
                if (auto it = replies.find(endpoint); it != replies.end()) {
                    res.set_content(it->second, "application/json");
                    return;
                }
                res.set_content(default_reply(endpoint, json::parse(req.body)).dump(), "application/json");
            };
        };
        for (const char* ep : {"/caption", "/embed", "/ocr", "/detect", "/chat"}) {
            server_.Post(ep, handler(ep));
        }
        server_.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
            if (fail_with != 0) {
                res.status = fail_with;
                res.set_content("{\"ok\": false}", "application/json");
                return;
            }
            res.set_content("{\"ok\": true}", "application/json");
        });
        server_.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
            std::this_thread::sleep_for(std::chrono::milliseconds(2500));
            res.set_content("{}", "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockServer()
    {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return fmt::format("http://127.0.0.1:{}", port_); }

    HttpBackend client(int timeout_s = 5) const
    {
        HttpBackendConfig cfg;
        cfg.base_url = url();
        cfg.timeout = std::chrono::seconds(timeout_s);
        return HttpBackend(cfg);
    }

    json last_body(const std::string& endpoint)
    {
        std::lock_guard lock(mu_);
        for (auto it = requests.rbegin(); it != requests.rend(); ++it) {
            if (it->first == endpoint) {
                return json::parse(it->second);
            }
        }
        return nullptr;
    }

    std::vector<std::pair<std::string, std::string>> requests;
    std::map<std::string, std::string> replies;
    int fail_with = 0;

private:
    static json default_reply(const std::string& ep, const json& body)
    {
        if (ep == "/caption") {
            return {{"caption", fmt::format("caption of {} image(s)", body.at("images").size())}};
        }
        if (ep == "/embed") {
            return {{"embedding", {0.6, 0.8}}};
        }
        if (ep == "/ocr") {
            return {{"lines", {"HELLO", "WORLD"}}};
        }
        if (ep == "/detect") {
            return {{"detections", {{{"label", body.at("labels")[0]}, {"box", {1, 2, 3, 4}}, {"score", 0.5}}}}};
        }
        return {{"text", fmt::format("{} message(s)", body.at("messages").size())}};
    }

    httplib::Server server_;
    std::mutex mu_;
    int port_ = 0;
    std::thread thread_;
};

} // namespace

TEST_CASE("http backend speaks every endpoint")
{
    MockServer server;
    auto backend = server.client();
    const auto f0 = testing_support::constant_ref(0, 1.5, 30, 4, 3);
    const auto f1 = testing_support::constant_ref(1, 2.5, 60, 4, 3);

    CHECK(backend.caption({7, {f0, f1}, 1.5, 2.5}) == "caption of 2 image(s)");
    const auto cap = server.last_body("/caption");
    CHECK(cap.at("event_id") == 7);
    CHECK(cap.at("start_s") == 1.5);
    CHECK(cap.at("end_s") == 2.5);
    // Images travel as base64 PNG that decodes back to the frame.
    const auto png = base64_decode(cap.at("images")[1].get<std::string>());
    CHECK(decode_png_gray(png).pixels == f1->pixels);

    CHECK(backend.embed("hello") == std::vector<double>{0.6, 0.8});
    CHECK(server.last_body("/embed") == json{{"text", "hello"}});

    CHECK(backend.ocr(image_ref(f0)) == std::vector<std::string>{"HELLO", "WORLD"});
    CHECK(server.last_body("/ocr").contains("image"));

    const auto dets = backend.detect(image_ref(f0), {"cup"});
    REQUIRE(dets.size() == 1);
    CHECK(dets[0] == Detection{"cup", {1, 2, 3, 4}, 0.5});
    CHECK(server.last_body("/detect").at("labels") == json::array({"cup"}));

    PolicyRequest req;
    req.system_prompt = "sys";
    req.frames = {{"Frame 0 | 1.5s", f0}};
    req.messages = {{"user", "q"}, {"assistant", "a"}};
    CHECK(backend.generate(req) == "3 message(s)");
    const auto chat = server.last_body("/chat");
    CHECK(chat.at("messages")[0] == json{{"role", "system"}, {"content", "sys"}});
    CHECK(chat.at("messages")[2] == json{{"role", "assistant"}, {"content", "a"}});
    CHECK(chat.at("image_labels") == json::array({"Frame 0 | 1.5s"}));
    CHECK(chat.at("images").size() == 1);

    CHECK(backend.describe_change("before", "after") == "2 message(s)");
    CHECK(server.last_body("/chat").at("messages")[1].at("content") == "Previous event: before\nCurrent event: after");
}

TEST_CASE("http failures surface as BackendError")
{
    MockServer server;
    auto backend = server.client();
    const auto f = testing_support::constant_ref(0, 0.0, 1, 2, 2);

    server.fail_with = 503;
    CHECK_THROWS_AS(backend.embed("x"), BackendError);
    try {
        backend.caption({0, {f}, 0, 0});
    } catch (const BackendError& e) {
        CHECK(std::string(e.what()).find("503") != std::string::npos);
    }
    server.fail_with = 0;

    server.replies["/embed"] = "not json";
    CHECK_THROWS_AS(backend.embed("x"), BackendError);
    server.replies["/embed"] = R"({"vector": [1]})";
    CHECK_THROWS_AS(backend.embed("x"), BackendError);
    server.replies["/detect"] = R"({"detections": [{"label": "a", "box": [1, 2], "score": 1}]})";
    CHECK_THROWS_AS(backend.detect(image_ref(f), {"a"}), BackendError);
    server.replies["/chat"] = R"({"text": 5})";
    CHECK_THROWS_AS(backend.generate(PolicyRequest{}), BackendError);

    HttpBackendConfig nowhere;
    nowhere.base_url = "http://127.0.0.1:1";
    nowhere.timeout = std::chrono::seconds(2);
    HttpBackend dead(nowhere);
    CHECK_THROWS_AS(dead.embed("x"), BackendError);

    ImageRef blank;
    blank.image_id = "ghost.png";
    CHECK_THROWS_AS(encode_image_b64(blank), BackendError);
}

TEST_CASE("health check")
{
    MockServer server;
    auto backend = server.client();
    CHECK_NOTHROW(backend.check_health());
    server.fail_with = 503;
    CHECK_THROWS_AS(backend.check_health(), BackendError);

    HttpBackendConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";
    cfg.timeout = std::chrono::seconds(1);
    HttpBackend refused(cfg);
    CHECK_THROWS_AS(refused.check_health(), BackendError);
}

TEST_CASE("http timeouts surface as BackendError")
{
    MockServer server;
    auto backend = server.client(1);
    CHECK_THROWS_AS(backend.post("/slow", json::object()), BackendError);
}

TEST_CASE("backend failures inside tools become backend_error observations")
{
    MockServer server;
    server.fail_with = 500;
    auto http = std::make_shared<HttpBackend>(server.client());
    PerceptionBackends pb;
    pb.embedder = http;
    pb.ocr = http;
    pb.detector = http;
    const auto registry = make_default_registry(pb);

    LtmStore store;
    ArchivedEvent e;
    e.caption = "c";
    e.embedding = {1.0, 0.0};
    store.append(e);
    StmSnapshot snap{{"Frame 0 | 0.0s", testing_support::constant_ref(0, 0.0, 9, 2, 2)}};
    const ToolContext ctx{&snap, store.entries(), &store};
    for (const auto& [tool, args] : std::vector<std::pair<std::string, json>>{
             {"search_memory", {{"query", "anything"}}}, {"ocr", {{"frame_index", 0}}}, {"detect_objects", {{"labels", {"cat"}}}}}) {
        const auto o = registry.dispatch({tool, args}, ctx);
        CHECK_FALSE(o.ok());
        CHECK(o.error_code == "backend_error");
    }
}

TEST_CASE("backend url comes from the environment")
{
    ::setenv(kBackendUrlEnv, "http://example.invalid:9", 1);
    CHECK(http_config_from_env().base_url == "http://example.invalid:9");
    ::unsetenv(kBackendUrlEnv);
    CHECK(http_config_from_env().base_url == "http://127.0.0.1:8000");
}
