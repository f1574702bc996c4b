#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "grade/corpus.hpp"
#include "grade/gateway.hpp"
#include "grade/util.hpp"

namespace grade {

// ── Configuration ───────────────────────────────────────────

struct CorpusConfig {
    std::string input;  // articles JSONL; relative to the config file
    std::string domain = "news";
    std::string tokenizer = "simple";
    std::size_t min_tokens = 512;
    std::size_t max_tokens = 8192;
    std::string on_malformed = "skip";  // skip | abort
    ChunkingOptions chunking;
    std::string fact_filter = "llm";    // llm | accept_all
};

struct ProviderConfig {
    std::string kind = "mock";  // mock | openai
    std::string chat_model = "mock-chat";
    std::string embed_model = "mock-embed";
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;        // usually "${OPENAI_API_KEY}"
    double temperature = 0.0;
    std::int64_t seed = 7;
    int max_attempts = 3;
    std::size_t backoff_ms = 200;
    std::size_t max_in_flight = 4;
    std::size_t concurrency = 4;
    std::size_t embed_batch = 32;
    std::string cache_dir = "cache";  // relative to the workdir; "" disables
    std::string mock_script;          // relative to the config file
    std::size_t embed_dim = 64;
    std::size_t timeout_s = 60;
};

struct ClusteringConfig {
    std::string k = "auto";  // auto | bic | <integer>
    double tau = 0.2;
    std::uint64_t seed = 7;
    std::size_t max_iters = 200;
    double tol = 1e-6;
    std::size_t bic_max_k = 16;
};

struct PathsConfig {
    std::size_t per_hop = 400;
    std::uint64_t seed = 7;
    std::size_t per_pair_cap = 64;
    std::size_t min_hop = 2;
    std::size_t max_hop = 5;
};

struct DifficultyConfig {
    std::string aggregator = "min";
    bool per_hop = true;
    std::size_t bins = 4;
};

struct EvalConfig {
    std::size_t k = 10;
    std::string rag = "gateway";  // gateway | subprocess
    std::string command;          // subprocess only
    std::string model;            // answer model; defaults to provider.chat_model
    std::string judge_model;      // defaults to provider.chat_model
};

struct PipelineConfig {
    CorpusConfig corpus;
    ProviderConfig provider;
    ClusteringConfig clustering;
    PathsConfig paths;
    DifficultyConfig difficulty;
    EvalConfig eval;

    /// Snapshot with the API key redacted.
    json to_json() const;
    /// Throws ConfigError on unknown sections/keys or bad values.
    static PipelineConfig from_json(const json& j, const std::filesystem::path& base_dir = {});
    /// Throws ConfigError on inconsistent values.
    void validate() const;
};

/// Replaces ${VAR} and ${VAR:-default} in every string value. An unset
/// variable without a default throws ConfigError.
json interpolate_env(const json& j);

PipelineConfig load_config(const std::filesystem::path& path);

// ── Stages ──────────────────────────────────────────────────

struct StageSpec {
    std::string name;
    std::vector<std::string> inputs;    // artifacts in the workdir
    std::vector<std::string> outputs;
    std::vector<std::string> config_sections;
};

/// The fixed stage graph in dependency order.
const std::vector<StageSpec>& stage_specs();
const StageSpec& stage_spec(const std::string& name);

/// Expands "all" and orders the requested stages topologically.
std::vector<std::string> resolve_stages(const std::vector<std::string>& requested);

enum class StageStatus { executed, cached };

struct StageReport {
    std::string name;
    StageStatus status = StageStatus::executed;
    json stats;
};

std::shared_ptr<Gateway> make_gateway(const PipelineConfig& config, const std::filesystem::path& workdir);

class Pipeline {
public:
    Pipeline(PipelineConfig config, std::filesystem::path workdir, std::shared_ptr<Gateway> gateway = nullptr);

    /// Runs one stage unless the manifest shows identical config and inputs
    /// with outputs still intact. Throws MissingArtifactError naming an
    /// absent input.
    StageReport run_stage(const std::string& name, bool force = false);
    std::vector<StageReport> run(const std::vector<std::string>& stages, bool force = false);

    std::filesystem::path artifact(const std::string& name) const { return workdir_ / name; }
    const json& manifest() const { return manifest_; }
    const PipelineConfig& config() const { return config_; }
    Gateway& gateway();

    /// Reads `artifact` from `path` instead of the workdir (e.g. `claims --in`).
    void override_input(const std::string& artifact, std::filesystem::path path);

private:
    json execute(const StageSpec& spec);
    std::string stage_config_hash(const StageSpec& spec) const;
    void save_manifest();
    std::filesystem::path input_path(const StageSpec& spec, const std::string& name) const;

    json stage_ingest(const StageSpec& spec);
    json stage_chunk(const StageSpec& spec);
    json stage_claims(const StageSpec& spec);
    json stage_triples(const StageSpec& spec);
    json stage_graph(const StageSpec& spec);
    json stage_cluster(const StageSpec& spec);
    json stage_link(const StageSpec& spec);
    json stage_augment(const StageSpec& spec);
    json stage_paths(const StageSpec& spec);
    json stage_qagen(const StageSpec& spec);
    json stage_validate(const StageSpec& spec);
    json stage_score(const StageSpec& spec);
    json stage_eval(const StageSpec& spec);
    json stage_report(const StageSpec& spec);

    PipelineConfig config_;
    std::filesystem::path workdir_;
    std::shared_ptr<Gateway> gateway_;
    json manifest_;
    std::map<std::string, std::filesystem::path> overrides_;
};

/// Name used for the ingest stage's external input in the manifest.
inline constexpr const char* kCorpusInput = "<corpus>";

}  // namespace grade
