#include <doctest.h>

#include <httplib.h>

#include <thread>

#include "grade/errors.hpp"
#include "grade/openai_backend.hpp"

using namespace grade;

namespace {

// Local OpenAI-shaped server. The user prompt selects the behaviour.
class FakeServer {
public:
    FakeServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            last_auth = req.get_header_value("Authorization");
            auto body = json::parse(req.body);
            last_body = body;
            const auto user = body["messages"][1]["content"].get<std::string>();
            if (user == "rate") {
                res.status = 429;
                return;
            }
            if (user == "boom") {
                res.status = 500;
                return;
            }
            if (user == "bad") {
                res.status = 400;
                res.set_content("{\"error\":\"bad request\"}", "application/json");
                return;
            }
            if (user == "garbage") {
                res.set_content("not json", "application/json");
                return;
            }
            const std::string finish = user == "filtered" ? "content_filter" : "stop";
            json out = {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", "echo: " + user}}},
                                                  {"finish_reason", finish}}})},
                        {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 3}}}};
            res.set_content(out.dump(), "application/json");
        });
        server_.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
            auto body = json::parse(req.body);
            json data = json::array();
            const auto& input = body["input"];
            // Reverse order to exercise index sorting.
            for (std::size_t i = input.size(); i-- > 0;)
                data.push_back({{"index", i}, {"embedding", {static_cast<double>(i), 1.0}}});
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

    std::string last_auth;
    json last_body;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

RenderedPrompt prompt(const std::string& user) { return {"sys", user}; }

}  // namespace

TEST_CASE("split_base_url") {
    auto [o1, p1] = OpenAIBackend::split_base_url("https://api.example.com/v1/");
    CHECK(o1 == "https://api.example.com");
    CHECK(p1 == "/v1");
    auto [o2, p2] = OpenAIBackend::split_base_url("http://localhost:8080");
    CHECK(o2 == "http://localhost:8080");
    CHECK(p2.empty());
    CHECK_THROWS_AS(OpenAIBackend::split_base_url("localhost:8080"), ConfigError);
}

TEST_CASE("chat and embeddings against a local server") {
    FakeServer server;
    OpenAIOptions o;
    o.base_url = server.url();
    o.api_key = "sk-test";
    o.timeout = std::chrono::seconds(5);
    OpenAIBackend backend(o);
    ModelParams params;
    params.model = "m1";

    auto r = backend.chat(TemplateName::judge, prompt("hello"), params);
    CHECK(r.text == "echo: hello");
    CHECK(r.usage.prompt_tokens == 7);
    CHECK(r.usage.completion_tokens == 3);
    CHECK(server.last_auth == "Bearer sk-test");
    CHECK(server.last_body["model"] == "m1");
    CHECK(server.last_body["messages"][0]["content"] == "sys");

    CHECK_THROWS_AS(backend.chat(TemplateName::judge, prompt("rate"), params), TransientError);
    CHECK_THROWS_AS(backend.chat(TemplateName::judge, prompt("boom"), params), TransientError);
    try {
        backend.chat(TemplateName::judge, prompt("bad"), params);
        FAIL("expected TransportError");
    } catch (const TransientError&) {
        FAIL("400 must not be transient");
    } catch (const TransportError& e) {
        CHECK(std::string(e.what()).find("400") != std::string::npos);
    }
    CHECK_THROWS_AS(backend.chat(TemplateName::judge, prompt("garbage"), params), TransportError);
    CHECK_THROWS_AS(backend.chat(TemplateName::judge, prompt("filtered"), params), ContentError);

    auto vecs = backend.embed({"a", "b", "c"}, "e1");
    REQUIRE(vecs.size() == 3);
    CHECK(vecs[0][0] == 0.0);
    CHECK(vecs[2][0] == 2.0);
}

TEST_CASE("connection failure is transient") {
    OpenAIOptions o;
    {
        FakeServer server;
        o.base_url = server.url();
    }
    o.timeout = std::chrono::seconds(2);
    OpenAIBackend backend(o);
    CHECK_THROWS_AS(backend.chat(TemplateName::judge, prompt("x"), ModelParams{}), TransientError);
}
