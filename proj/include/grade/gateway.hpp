#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "grade/errors.hpp"

namespace grade {

using Embedding = std::vector<float>;
using Vars = std::map<std::string, std::string>;

// ── Prompt templates ────────────────────────────────────────

enum class TemplateName {
    claim_generation,
    consistency_check,
    triple_extraction,
    equivalence_search,
    qa_generation,
    qa_validation,
    rag_answer,
    judge,
    // Not one of the benchmark prompts: backs the default fact/opinion judge.
    fact_classification,
};

std::string_view to_string(TemplateName name);
std::optional<TemplateName> template_from_string(std::string_view name);

struct PromptTemplate {
    TemplateName name;
    std::string system_text;
    std::string user_text;  // `{name}` placeholders

    /// Placeholder names in order of first appearance.
    std::vector<std::string> placeholders() const;
};

const PromptTemplate& prompt_template(TemplateName name);

struct RenderedPrompt {
    std::string system;
    std::string user;
};

/// Substitutes every `{name}` placeholder. Throws Error("unbound: name")
/// for the first placeholder without a binding. Substituted values are
/// never re-scanned.
RenderedPrompt render(const PromptTemplate& tmpl, const Vars& vars);

// ── Requests ────────────────────────────────────────────────

struct ModelParams {
    std::string model = "mock-chat";
    double temperature = 0.0;
    std::int64_t seed = 7;
};

struct ModelRequest {
    TemplateName template_name;
    Vars vars;
    ModelParams params;
};

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct ModelResponse {
    std::string text;
    Usage usage;
    bool cache_hit = false;
};

struct EmbeddingRequest {
    std::vector<std::string> texts;
    std::string model = "mock-embed";
};

/// Retryable provider failure (HTTP 429/5xx, connection reset, ...).
class TransientError : public TransportError {
public:
    using TransportError::TransportError;
};

// ── Backends ────────────────────────────────────────────────

struct ChatResult {
    std::string text;
    Usage usage;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResult chat(TemplateName name, const RenderedPrompt& prompt, const ModelParams& params) = 0;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::vector<Embedding> embed(const std::vector<std::string>& texts, const std::string& model) = 0;
};

/// Scales `v` to unit L2 norm; throws Error on a zero vector.
void l2_normalize(Embedding& v);

// ── Gateway ─────────────────────────────────────────────────

struct GatewayOptions {
    int max_attempts = 3;
    std::chrono::milliseconds base_backoff{200};
    std::size_t max_in_flight = 4;
    std::optional<std::filesystem::path> cache_dir;
    std::size_t embed_batch = 64;
};

struct GatewayStats {
    std::size_t backend_calls = 0;
    std::size_t cache_hits = 0;
    std::size_t retries = 0;
};

/// Cache key for a chat request: hash of model id, rendered prompt,
/// temperature and seed.
std::string request_cache_key(const ModelParams& params, const RenderedPrompt& prompt);

class Gateway {
public:
    Gateway(std::shared_ptr<ChatBackend> chat, std::shared_ptr<EmbeddingBackend> embedder,
            GatewayOptions options = {});

    ModelResponse complete(const ModelRequest& request);

    /// L2-normalized vectors, one per input text.
    std::vector<Embedding> embed(const EmbeddingRequest& request);

    GatewayStats stats() const;
    const GatewayOptions& options() const { return options_; }

private:
    template <typename Fn>
    auto with_retries(Fn&& fn) -> decltype(fn());

    std::optional<std::string> cache_get(const std::string& key);
    void cache_put(const std::string& key, const std::string& payload);

    std::shared_ptr<ChatBackend> chat_;
    std::shared_ptr<EmbeddingBackend> embedder_;
    GatewayOptions options_;
    std::counting_semaphore<1024> in_flight_;

    mutable std::mutex cache_mutex_;
    std::unordered_map<std::string, std::string> memory_cache_;

    std::atomic<std::size_t> backend_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
    std::atomic<std::size_t> retries_{0};
};

// ── Mock provider ───────────────────────────────────────────

/// Hash-projection embedder: each lower-cased word maps to a seeded
/// pseudo-random unit vector; a text embeds to the normalized mean.
class MockEmbeddingBackend : public EmbeddingBackend {
public:
    explicit MockEmbeddingBackend(std::size_t dimension = 64, std::uint64_t seed = 0)
        : dimension_(dimension), seed_(seed) {}
    std::vector<Embedding> embed(const std::vector<std::string>& texts, const std::string& model) override;
    std::size_t dimension() const { return dimension_; }

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

/// Rule-based chat model; outputs depend only on the rendered prompt.
/// Scripted responses (keyed by `mock_prompt_key`) take precedence.
class MockChatBackend : public ChatBackend {
public:
    MockChatBackend() = default;
    explicit MockChatBackend(std::map<std::string, std::string> script) : script_(std::move(script)) {}

    ChatResult chat(TemplateName name, const RenderedPrompt& prompt, const ModelParams& params) override;

private:
    std::map<std::string, std::string> script_;
};

/// sha256 over system + "\n" + user; the key scripted mock outputs use.
std::string mock_prompt_key(const RenderedPrompt& prompt);

/// Loads a JSON object {prompt_key: response} for MockChatBackend.
std::map<std::string, std::string> load_mock_script(const std::filesystem::path& path);

namespace mock {

struct SimpleTriple {
    std::string subject;
    std::string relation;
    std::string object;
};

/// The mock's pattern-based relation extractor: finds the first known
/// relation phrase in the sentence and splits around it.
std::optional<SimpleTriple> extract_relation(std::string_view sentence);

/// The relation phrases the mock extractor recognizes.
const std::vector<std::string>& relation_lexicon();

std::string resolve_pronouns(std::string_view evidence, std::string_view context);
bool claim_supported(std::string_view sentence, std::string_view claim);
bool looks_like_opinion(std::string_view sentence);
bool is_vague_pair(std::string_view question, std::string_view answer);
std::string equivalence_lines(const std::vector<std::string>& entities);
std::string chain_question(const std::vector<SimpleTriple>& path);
std::string answer_chain_question(std::string_view question, std::string_view context);
bool judge_fold_match(std::string_view gold, std::string_view response);

}  // namespace mock

}  // namespace grade
