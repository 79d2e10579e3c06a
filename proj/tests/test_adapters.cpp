#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "instancegen/adapters.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <thread>

using namespace instancegen;
namespace fs = std::filesystem;

namespace {

std::string temp_plugin_dir() {
    auto dir = fs::temp_directory_path() / "instancegen_plugins";
    fs::remove_all(dir);
    fs::create_directories(dir);
    setenv("INSTANCEGEN_BACKEND_DIR", dir.c_str(), 1);
    return dir.string();
}

/// Local chat endpoint on an ephemeral port; optionally fails the first call.
class TestServer {
public:
    explicit TestServer(int fail_first_n = 0) : fail_remaining_(fail_first_n) {
        server_.Post("/chat", [this](const httplib::Request& req, httplib::Response& res) {
            if (fail_remaining_-- > 0) {
                res.status = 500;
                return;
            }
            auto body = nlohmann::json::parse(req.body);
            nlohmann::json reply;
            reply["reply"] = "echo:" + body.at("instruction").get<std::string>();
            res.set_content(reply.dump(), "application/json");
        });
        server_.Post("/judge", [](const httplib::Request& req, httplib::Response& res) {
            auto body = nlohmann::json::parse(req.body);
            std::string q = body.at("question").get<std::string>();
            nlohmann::json reply;
            reply["reply"] = q.find("blue") != std::string::npos ? "yes" : "no";
            res.set_content(reply.dump(), "application/json");
        });
        server_.Post("/similarity", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"score": 0.75})", "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~TestServer() {
        server_.stop();
        thread_.join();
    }
    std::string url(const std::string& path) const {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::atomic<int> fail_remaining_;
    std::thread thread_;
};

}  // namespace

TEST_CASE("http chat round-trips and logs the instruction length") {
    TestServer server;
    std::vector<std::string> log_lines;
    set_log_sink([&](LogLevel, const std::string& msg) { log_lines.push_back(msg); });

    HttpChat chat(server.url("/chat"), {.timeout_s = 5, .retries = 0});
    std::string reply = chat.complete("hello there", {});
    CHECK(reply == "echo:hello there");

    bool logged = false;
    for (const auto& line : log_lines)
        if (line.find("chat request (11 chars)") != std::string::npos) logged = true;
    CHECK(logged);
    set_log_sink(nullptr);
}

TEST_CASE("http adapters retry once after a failure") {
    TestServer server(1);  // first call returns 500
    HttpChat chat(server.url("/chat"), {.timeout_s = 5, .retries = 1});
    CHECK(chat.complete("again", {}) == "echo:again");
}

TEST_CASE("exhausted retries surface a backend error") {
    TestServer server(5);
    HttpChat chat(server.url("/chat"), {.timeout_s = 5, .retries = 1});
    CHECK_THROWS_AS(chat.complete("nope", {}), BackendError);
}

TEST_CASE("http judge and similarity adapters parse their replies") {
    TestServer server;
    HttpJudge judge(server.url("/judge"), {.timeout_s = 5, .retries = 0});
    CHECK(judge_yes_no(judge, "img", "is the sky blue?"));
    CHECK_FALSE(judge_yes_no(judge, "img", "is the grass red?"));

    HttpSimilarity sim(server.url("/similarity"), {.timeout_s = 5, .retries = 0});
    CHECK(similarity_score(sim, "img", "prompt") == doctest::Approx(0.75));
}

TEST_CASE("plugin manifests resolve backends through INSTANCEGEN_BACKEND_DIR") {
    TestServer server;
    std::string dir = temp_plugin_dir();
    nlohmann::json manifest;
    manifest["type"] = "http_chat";
    manifest["url"] = server.url("/chat");
    manifest["timeout_s"] = 5;
    manifest["retries"] = 0;
    write_text_file(dir + "/mychat.json", manifest.dump());

    auto chat = make_chat_backend("mychat", AdapterPolicy{});
    CHECK(chat->complete("plugin call", {}) == "echo:plugin call");
}

TEST_CASE("missing plugins report clean backend errors") {
    temp_plugin_dir();  // exists but empty
    CHECK_THROWS_AS(make_chat_backend("ghost", AdapterPolicy{}), BackendError);
    unsetenv("INSTANCEGEN_BACKEND_DIR");
    CHECK_THROWS_AS(make_chat_backend("ghost", AdapterPolicy{}), BackendError);
}

TEST_CASE("builtin backend names resolve without any plugin directory") {
    unsetenv("INSTANCEGEN_BACKEND_DIR");
    AdapterPolicy policy;
    CHECK(make_chat_backend("rule", policy) != nullptr);
    auto judge = make_judge_backend("const:no", policy);
    CHECK_FALSE(judge_yes_no(*judge, "img", "anything?"));
    auto sim = make_similarity_backend("const:0.25", policy);
    CHECK(sim->score("img", "p") == doctest::Approx(0.25));
}

TEST_CASE("the synthetic backend set assembles a complete suite") {
    BackendSelection sel;  // all synthetic defaults
    BackendSuite suite = make_backend_suite(sel);
    suite.require("diffusion");
    suite.require("detector");
    suite.require("point_segmenter");
    suite.require("chat");
    suite.require("judge");
    suite.require("similarity");
}

TEST_CASE("unimplemented real adapters fail with backend-unavailable semantics") {
    unsetenv("INSTANCEGEN_BACKEND_DIR");
    BackendSelection sel;
    sel.diffusion = "emu_remote";
    CHECK_THROWS_AS(make_backend_suite(sel), BackendError);
}
