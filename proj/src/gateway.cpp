#include "grade/gateway.hpp"

#include <cmath>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "grade/util.hpp"

namespace grade {

void l2_normalize(Embedding& v) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * x;
    if (sq <= 0.0 || !std::isfinite(sq)) throw Error("cannot normalize a zero vector");
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& x : v) x = static_cast<float>(x * inv);
}

std::string request_cache_key(const ModelParams& params, const RenderedPrompt& prompt) {
    std::ostringstream material;
    material << "chat\x1f" << params.model << '\x1f' << prompt.system << '\x1f' << prompt.user << '\x1f'
             << json(params.temperature).dump() << '\x1f' << params.seed;
    return sha256_hex(material.str());
}

namespace {

std::string embedding_cache_key(const std::string& model, const std::string& text) {
    return sha256_hex("embed\x1f" + model + '\x1f' + text);
}

class SlotGuard {
public:
    explicit SlotGuard(std::counting_semaphore<1024>& sem) : sem_(sem) { sem_.acquire(); }
    ~SlotGuard() { sem_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

private:
    std::counting_semaphore<1024>& sem_;
};

}  // namespace

Gateway::Gateway(std::shared_ptr<ChatBackend> chat, std::shared_ptr<EmbeddingBackend> embedder,
                 GatewayOptions options)
    : chat_(std::move(chat)),
      embedder_(std::move(embedder)),
      options_(std::move(options)),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(options_.max_in_flight, 1, 1024))) {
    if (options_.max_attempts < 1) throw ConfigError("gateway: max_attempts must be >= 1");
}

template <typename Fn>
auto Gateway::with_retries(Fn&& fn) -> decltype(fn()) {
    for (int attempt = 1;; ++attempt) {
        try {
            SlotGuard slot(in_flight_);
            ++backend_calls_;
            return fn();
        } catch (const TransientError& e) {
            if (attempt >= options_.max_attempts) {
                throw TransportError("retries exhausted after " + std::to_string(attempt) +
                                     " attempts: " + e.what());
            }
            ++retries_;
            auto delay = options_.base_backoff * (1LL << (attempt - 1));
            spdlog::debug("transient provider error ({}), retrying in {} ms", e.what(), delay.count());
            std::this_thread::sleep_for(delay);
        }
    }
}

std::optional<std::string> Gateway::cache_get(const std::string& key) {
    {
        std::lock_guard lock(cache_mutex_);
        if (auto it = memory_cache_.find(key); it != memory_cache_.end()) return it->second;
    }
    if (!options_.cache_dir) return std::nullopt;
    auto path = *options_.cache_dir / key.substr(0, 2) / (key + ".json");
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    auto payload = read_file(path);
    std::lock_guard lock(cache_mutex_);
    memory_cache_.emplace(key, payload);
    return payload;
}

void Gateway::cache_put(const std::string& key, const std::string& payload) {
    {
        std::lock_guard lock(cache_mutex_);
        memory_cache_[key] = payload;
    }
    if (options_.cache_dir) write_file_atomic(*options_.cache_dir / key.substr(0, 2) / (key + ".json"), payload);
}

ModelResponse Gateway::complete(const ModelRequest& request) {
    const auto prompt = render(prompt_template(request.template_name), request.vars);
    const auto key = request_cache_key(request.params, prompt);
    if (auto cached = cache_get(key)) {
        ++cache_hits_;
        auto j = json::parse(*cached);
        return {j.at("text").get<std::string>(),
                {j.value("prompt_tokens", std::int64_t{0}), j.value("completion_tokens", std::int64_t{0})},
                true};
    }
    if (!chat_) throw TransportError("no chat provider configured and cache is cold");
    auto result = with_retries([&] { return chat_->chat(request.template_name, prompt, request.params); });
    json payload{{"text", result.text},
                 {"prompt_tokens", result.usage.prompt_tokens},
                 {"completion_tokens", result.usage.completion_tokens}};
    cache_put(key, payload.dump());
    return {std::move(result.text), result.usage, false};
}

std::vector<Embedding> Gateway::embed(const EmbeddingRequest& request) {
    std::vector<Embedding> out(request.texts.size());
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < request.texts.size(); ++i) {
        if (auto cached = cache_get(embedding_cache_key(request.model, request.texts[i]))) {
            ++cache_hits_;
            out[i] = json::parse(*cached).get<Embedding>();
        } else {
            missing.push_back(i);
        }
    }
    if (missing.empty()) return out;
    if (!embedder_) throw TransportError("no embedding provider configured and cache is cold");

    const std::size_t batch = std::max<std::size_t>(1, options_.embed_batch);
    for (std::size_t begin = 0; begin < missing.size(); begin += batch) {
        const std::size_t end = std::min(missing.size(), begin + batch);
        std::vector<std::string> texts;
        for (std::size_t m = begin; m < end; ++m) texts.push_back(request.texts[missing[m]]);
        auto vectors = with_retries([&] { return embedder_->embed(texts, request.model); });
        if (vectors.size() != texts.size()) {
            throw TransportError("embedding provider returned " + std::to_string(vectors.size()) +
                                 " vectors for " + std::to_string(texts.size()) + " texts");
        }
        const std::size_t dim = vectors.empty() ? 0 : vectors[0].size();
        for (std::size_t m = begin; m < end; ++m) {
            auto& v = vectors[m - begin];
            if (v.empty() || v.size() != dim) throw TransportError("inconsistent embedding dimension");
            l2_normalize(v);
            cache_put(embedding_cache_key(request.model, request.texts[missing[m]]), json(v).dump());
            out[missing[m]] = std::move(v);
        }
    }
    return out;
}

GatewayStats Gateway::stats() const { return {backend_calls_.load(), cache_hits_.load(), retries_.load()}; }

}  // namespace grade
