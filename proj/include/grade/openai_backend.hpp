#pragma once

#include <chrono>
#include <string>

#include "grade/gateway.hpp"
#include "grade/util.hpp"

namespace grade {

struct OpenAIOptions {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;
    std::chrono::seconds timeout{60};
};

/// Chat completions and embeddings over an OpenAI-compatible HTTP API.
/// 429, 5xx and connection failures raise TransientError; a
/// content_filter finish raises ContentError.
class OpenAIBackend : public ChatBackend, public EmbeddingBackend {
public:
    explicit OpenAIBackend(OpenAIOptions options);

    ChatResult chat(TemplateName name, const RenderedPrompt& prompt, const ModelParams& params) override;
    std::vector<Embedding> embed(const std::vector<std::string>& texts, const std::string& model) override;

    /// Splits "https://host:port/prefix" into ("https://host:port", "/prefix").
    static std::pair<std::string, std::string> split_base_url(const std::string& url);

private:
    json post(const std::string& endpoint, const json& body);

    OpenAIOptions options_;
    std::string origin_;
    std::string prefix_;
};

}  // namespace grade
