#include "grade/openai_backend.hpp"

#include <algorithm>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace grade {

OpenAIBackend::OpenAIBackend(OpenAIOptions options) : options_(std::move(options)) {
    std::tie(origin_, prefix_) = split_base_url(options_.base_url);
}

std::pair<std::string, std::string> OpenAIBackend::split_base_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("provider base_url needs a scheme: " + url);
    auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, ""};
    std::string prefix = url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, slash), prefix};
}

json OpenAIBackend::post(const std::string& endpoint, const json& body) {
    httplib::Client client(origin_);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    httplib::Headers headers;
    if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

    auto res = client.Post(prefix_ + endpoint, headers, body.dump(), "application/json");
    if (!res) throw TransientError("POST " + endpoint + " failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500) {
        throw TransientError("POST " + endpoint + " returned HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
        throw TransportError("POST " + endpoint + " returned HTTP " + std::to_string(res->status) + ": " +
                             res->body.substr(0, 300));
    }
    try {
        return json::parse(res->body);
    } catch (const json::exception& e) {
        throw TransportError("POST " + endpoint + ": malformed JSON response: " + e.what());
    }
}

ChatResult OpenAIBackend::chat(TemplateName name, const RenderedPrompt& prompt, const ModelParams& params) {
    json body = {{"model", params.model},
                 {"temperature", params.temperature},
                 {"seed", params.seed},
                 {"messages", json::array({{{"role", "system"}, {"content", prompt.system}},
                                           {{"role", "user"}, {"content", prompt.user}}})}};
    auto j = post("/chat/completions", body);
    try {
        const auto& choice = j.at("choices").at(0);
        if (choice.value("finish_reason", std::string{}) == "content_filter")
            throw ContentError(std::string(to_string(name)) + ": response withheld by content filter");
        ChatResult r;
        const auto& content = choice.at("message").at("content");
        r.text = content.is_null() ? std::string{} : content.get<std::string>();
        if (j.contains("usage")) {
            r.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
            r.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
        }
        return r;
    } catch (const json::exception& e) {
        throw TransportError(std::string("chat response missing fields: ") + e.what());
    }
}

std::vector<Embedding> OpenAIBackend::embed(const std::vector<std::string>& texts, const std::string& model) {
    auto j = post("/embeddings", {{"model", model}, {"input", texts}});
    try {
        std::vector<std::pair<std::size_t, Embedding>> rows;
        for (const auto& d : j.at("data"))
            rows.emplace_back(d.at("index").get<std::size_t>(), d.at("embedding").get<Embedding>());
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        if (rows.size() != texts.size()) throw TransportError("embedding count mismatch");
        std::vector<Embedding> out;
        for (auto& [_, e] : rows) out.push_back(std::move(e));
        return out;
    } catch (const json::exception& e) {
        throw TransportError(std::string("embedding response missing fields: ") + e.what());
    }
}

}  // namespace grade
