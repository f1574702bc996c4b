#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>

#include "grade/gateway.hpp"
#include "grade/util.hpp"

namespace grade::test {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(GRADE_FIXTURE_DIR) / name; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("grade-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Chat backend driven by a callback; counts calls.
class FnChatBackend : public ChatBackend {
public:
    using Fn = std::function<std::string(TemplateName, const RenderedPrompt&)>;
    explicit FnChatBackend(Fn fn) : fn_(std::move(fn)) {}
    ChatResult chat(TemplateName name, const RenderedPrompt& prompt, const ModelParams&) override {
        ++calls;
        return {fn_(name, prompt), {}};
    }
    std::atomic<int> calls{0};

private:
    Fn fn_;
};

inline std::shared_ptr<Gateway> mock_gateway(std::size_t dim = 64) {
    GatewayOptions options;
    options.base_backoff = std::chrono::milliseconds(0);
    return std::make_shared<Gateway>(std::make_shared<MockChatBackend>(), std::make_shared<MockEmbeddingBackend>(dim),
                                     options);
}

inline std::shared_ptr<Gateway> fn_gateway(FnChatBackend::Fn fn) {
    GatewayOptions options;
    options.base_backoff = std::chrono::milliseconds(0);
    return std::make_shared<Gateway>(std::make_shared<FnChatBackend>(std::move(fn)),
                                     std::make_shared<MockEmbeddingBackend>(64), options);
}

}  // namespace grade::test
