#include "grade/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <set>

#include <spdlog/spdlog.h>

#include "grade/augment.hpp"
#include "grade/claims.hpp"
#include "grade/difficulty.hpp"
#include "grade/evalharness.hpp"
#include "grade/gmm.hpp"
#include "grade/graph.hpp"
#include "grade/openai_backend.hpp"
#include "grade/qagen.hpp"
#include "grade/subprocess_rag.hpp"

namespace fs = std::filesystem;

namespace grade {

// ── Configuration ───────────────────────────────────────────

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <typename T>
void read_key(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

std::string resolve_path(const std::string& p, const fs::path& base) {
    if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

std::string interpolate_string(const std::string& s) {
    std::string out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        const auto open = s.find("${", pos);
        if (open == std::string::npos) {
            out += s.substr(pos);
            break;
        }
        const auto close = s.find('}', open);
        if (close == std::string::npos) throw ConfigError("unterminated ${ in '" + s + "'");
        out += s.substr(pos, open - pos);
        std::string expr = s.substr(open + 2, close - open - 2);
        std::optional<std::string> fallback;
        if (auto dash = expr.find(":-"); dash != std::string::npos) {
            fallback = expr.substr(dash + 2);
            expr = expr.substr(0, dash);
        }
        const char* value = std::getenv(expr.c_str());
        if (value && *value) out += value;
        else if (fallback) out += *fallback;
        else throw ConfigError("environment variable " + expr + " is not set");
        pos = close + 1;
    }
    return out;
}

}  // namespace

json interpolate_env(const json& j) {
    if (j.is_string()) return interpolate_string(j.get<std::string>());
    if (j.is_object()) {
        json out = json::object();
        for (const auto& [k, v] : j.items()) out[k] = interpolate_env(v);
        return out;
    }
    if (j.is_array()) {
        json out = json::array();
        for (const auto& v : j) out.push_back(interpolate_env(v));
        return out;
    }
    return j;
}

json PipelineConfig::to_json() const {
    const auto& c = corpus;
    const auto& p = provider;
    return json{
        {"corpus",
         {{"input", c.input},
          {"domain", c.domain},
          {"tokenizer", c.tokenizer},
          {"min_tokens", c.min_tokens},
          {"max_tokens", c.max_tokens},
          {"on_malformed", c.on_malformed},
          {"chunk", {{"min_tokens", c.chunking.min_tokens}, {"max_tokens", c.chunking.max_tokens}, {"overlap", c.chunking.overlap}}},
          {"fact_filter", c.fact_filter}}},
        {"provider",
         {{"kind", p.kind},
          {"chat_model", p.chat_model},
          {"embed_model", p.embed_model},
          {"base_url", p.base_url},
          {"api_key", p.api_key.empty() ? "" : "<redacted>"},
          {"temperature", p.temperature},
          {"seed", p.seed},
          {"max_attempts", p.max_attempts},
          {"backoff_ms", p.backoff_ms},
          {"max_in_flight", p.max_in_flight},
          {"concurrency", p.concurrency},
          {"embed_batch", p.embed_batch},
          {"cache_dir", p.cache_dir},
          {"mock_script", p.mock_script},
          {"embed_dim", p.embed_dim},
          {"timeout_s", p.timeout_s}}},
        {"clustering",
         {{"k", clustering.k},
          {"tau", clustering.tau},
          {"seed", clustering.seed},
          {"max_iters", clustering.max_iters},
          {"tol", clustering.tol},
          {"bic_max_k", clustering.bic_max_k}}},
        {"paths",
         {{"per_hop", paths.per_hop},
          {"seed", paths.seed},
          {"per_pair_cap", paths.per_pair_cap},
          {"min_hop", paths.min_hop},
          {"max_hop", paths.max_hop}}},
        {"difficulty", {{"aggregator", difficulty.aggregator}, {"per_hop", difficulty.per_hop}, {"bins", difficulty.bins}}},
        {"eval", {{"k", eval.k}, {"rag", eval.rag}, {"command", eval.command}, {"model", eval.model}, {"judge_model", eval.judge_model}}}};
}

PipelineConfig PipelineConfig::from_json(const json& raw, const fs::path& base_dir) {
    const json j = interpolate_env(raw);
    check_keys(j, {"corpus", "provider", "clustering", "paths", "difficulty", "eval"}, "config");
    PipelineConfig cfg;

    if (j.contains("corpus")) {
        const auto& s = j["corpus"];
        check_keys(s, {"input", "domain", "tokenizer", "min_tokens", "max_tokens", "on_malformed", "chunk", "fact_filter"}, "corpus");
        auto& c = cfg.corpus;
        read_key(s, "input", c.input, "corpus");
        read_key(s, "domain", c.domain, "corpus");
        read_key(s, "tokenizer", c.tokenizer, "corpus");
        read_key(s, "min_tokens", c.min_tokens, "corpus");
        read_key(s, "max_tokens", c.max_tokens, "corpus");
        read_key(s, "on_malformed", c.on_malformed, "corpus");
        read_key(s, "fact_filter", c.fact_filter, "corpus");
        if (s.contains("chunk")) {
            const auto& ch = s["chunk"];
            check_keys(ch, {"min_tokens", "max_tokens", "overlap"}, "corpus.chunk");
            read_key(ch, "min_tokens", c.chunking.min_tokens, "corpus.chunk");
            read_key(ch, "max_tokens", c.chunking.max_tokens, "corpus.chunk");
            read_key(ch, "overlap", c.chunking.overlap, "corpus.chunk");
        }
        c.input = resolve_path(c.input, base_dir);
    }
    if (j.contains("provider")) {
        const auto& s = j["provider"];
        check_keys(s, {"kind", "chat_model", "embed_model", "base_url", "api_key", "temperature", "seed", "max_attempts",
                       "backoff_ms", "max_in_flight", "concurrency", "embed_batch", "cache_dir", "mock_script", "embed_dim",
                       "timeout_s"},
                   "provider");
        auto& p = cfg.provider;
        read_key(s, "kind", p.kind, "provider");
        read_key(s, "chat_model", p.chat_model, "provider");
        read_key(s, "embed_model", p.embed_model, "provider");
        read_key(s, "base_url", p.base_url, "provider");
        read_key(s, "api_key", p.api_key, "provider");
        read_key(s, "temperature", p.temperature, "provider");
        read_key(s, "seed", p.seed, "provider");
        read_key(s, "max_attempts", p.max_attempts, "provider");
        read_key(s, "backoff_ms", p.backoff_ms, "provider");
        read_key(s, "max_in_flight", p.max_in_flight, "provider");
        read_key(s, "concurrency", p.concurrency, "provider");
        read_key(s, "embed_batch", p.embed_batch, "provider");
        read_key(s, "cache_dir", p.cache_dir, "provider");
        read_key(s, "mock_script", p.mock_script, "provider");
        read_key(s, "embed_dim", p.embed_dim, "provider");
        read_key(s, "timeout_s", p.timeout_s, "provider");
        p.mock_script = resolve_path(p.mock_script, base_dir);
    }
    if (j.contains("clustering")) {
        const auto& s = j["clustering"];
        check_keys(s, {"k", "tau", "seed", "max_iters", "tol", "bic_max_k"}, "clustering");
        auto& c = cfg.clustering;
        if (s.contains("k")) {
            if (s["k"].is_number_unsigned()) c.k = std::to_string(s["k"].get<std::size_t>());
            else read_key(s, "k", c.k, "clustering");
        }
        read_key(s, "tau", c.tau, "clustering");
        read_key(s, "seed", c.seed, "clustering");
        read_key(s, "max_iters", c.max_iters, "clustering");
        read_key(s, "tol", c.tol, "clustering");
        read_key(s, "bic_max_k", c.bic_max_k, "clustering");
    }
    if (j.contains("paths")) {
        const auto& s = j["paths"];
        check_keys(s, {"per_hop", "seed", "per_pair_cap", "min_hop", "max_hop"}, "paths");
        read_key(s, "per_hop", cfg.paths.per_hop, "paths");
        read_key(s, "seed", cfg.paths.seed, "paths");
        read_key(s, "per_pair_cap", cfg.paths.per_pair_cap, "paths");
        read_key(s, "min_hop", cfg.paths.min_hop, "paths");
        read_key(s, "max_hop", cfg.paths.max_hop, "paths");
    }
    if (j.contains("difficulty")) {
        const auto& s = j["difficulty"];
        check_keys(s, {"aggregator", "per_hop", "bins"}, "difficulty");
        read_key(s, "aggregator", cfg.difficulty.aggregator, "difficulty");
        read_key(s, "per_hop", cfg.difficulty.per_hop, "difficulty");
        read_key(s, "bins", cfg.difficulty.bins, "difficulty");
    }
    if (j.contains("eval")) {
        const auto& s = j["eval"];
        check_keys(s, {"k", "rag", "command", "model", "judge_model"}, "eval");
        read_key(s, "k", cfg.eval.k, "eval");
        read_key(s, "rag", cfg.eval.rag, "eval");
        read_key(s, "command", cfg.eval.command, "eval");
        read_key(s, "model", cfg.eval.model, "eval");
        read_key(s, "judge_model", cfg.eval.judge_model, "eval");
    }

    cfg.validate();
    return cfg;
}

void PipelineConfig::validate() const {
    if (corpus.on_malformed != "skip" && corpus.on_malformed != "abort")
        throw ConfigError("corpus.on_malformed must be skip or abort");
    if (corpus.fact_filter != "llm" && corpus.fact_filter != "accept_all")
        throw ConfigError("corpus.fact_filter must be llm or accept_all");
    if (corpus.min_tokens > corpus.max_tokens) throw ConfigError("corpus.min_tokens exceeds corpus.max_tokens");
    const auto& ch = corpus.chunking;
    if (!(ch.overlap < ch.min_tokens && ch.min_tokens <= ch.max_tokens))
        throw ConfigError("corpus.chunk requires overlap < min_tokens <= max_tokens");
    if (provider.kind != "mock" && provider.kind != "openai") throw ConfigError("provider.kind must be mock or openai");
    if (provider.max_attempts < 1) throw ConfigError("provider.max_attempts must be >= 1");
    if (provider.max_in_flight < 1 || provider.max_in_flight > 1024)
        throw ConfigError("provider.max_in_flight must be in [1, 1024]");
    if (clustering.k != "auto" && clustering.k != "bic") {
        const auto& k = clustering.k;
        if (k.empty() || !std::all_of(k.begin(), k.end(), ::isdigit) || std::stoul(k) == 0)
            throw ConfigError("clustering.k must be auto, bic or a positive integer");
    }
    if (clustering.tau < 0.0 || clustering.tau > 1.0) throw ConfigError("clustering.tau must be in [0, 1]");
    if (paths.min_hop < 1 || paths.min_hop > paths.max_hop) throw ConfigError("paths: invalid hop range");
    if (paths.min_hop < 2 || paths.max_hop > 5) throw ConfigError("paths: hops must lie in [2, 5]");
    Aggregator::parse(difficulty.aggregator);
    if (difficulty.bins < 1) throw ConfigError("difficulty.bins must be >= 1");
    if (eval.rag != "gateway" && eval.rag != "subprocess") throw ConfigError("eval.rag must be gateway or subprocess");
    if (eval.rag == "subprocess" && eval.command.empty()) throw ConfigError("eval.command required for subprocess rag");
    if (eval.k < 1) throw ConfigError("eval.k must be >= 1");
}

PipelineConfig load_config(const fs::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return PipelineConfig::from_json(j, path.parent_path());
}

// ── Stage graph ─────────────────────────────────────────────

const std::vector<StageSpec>& stage_specs() {
    static const std::vector<StageSpec> kStages = {
        {"ingest", {kCorpusInput}, {"articles.jsonl"}, {"corpus"}},
        {"chunk", {"articles.jsonl"}, {"sentences.jsonl", "chunks.jsonl"}, {"corpus", "provider"}},
        {"claims", {"articles.jsonl", "sentences.jsonl"}, {"claims.jsonl"}, {"corpus", "provider"}},
        {"triples", {"claims.jsonl"}, {"triples.jsonl"}, {"provider"}},
        {"graph", {"triples.jsonl"}, {"graph.json"}, {}},
        {"cluster", {"claims.jsonl"}, {"gmm.json", "clusters.jsonl"}, {"clustering", "provider"}},
        {"link", {"claims.jsonl", "triples.jsonl", "clusters.jsonl"}, {"equivalences.jsonl"}, {"provider"}},
        {"augment", {"graph.json", "equivalences.jsonl", "clusters.jsonl"}, {"graph.augmented.json"}, {}},
        {"paths", {"graph.augmented.json"}, {"paths.jsonl"}, {"paths"}},
        {"qagen",
         {"paths.jsonl", "graph.augmented.json", "claims.jsonl", "sentences.jsonl", "chunks.jsonl"},
         {"qa.generated.jsonl", "qa.rejected.jsonl"},
         {"provider"}},
        {"validate", {"qa.generated.jsonl"}, {"qa.jsonl"}, {"provider"}},
        {"score", {"qa.jsonl", "chunks.jsonl"}, {"difficulty.jsonl", "matrix.json"}, {"difficulty", "provider"}},
        {"eval", {"qa.jsonl", "chunks.jsonl", "matrix.json"}, {"eval.jsonl"}, {"eval", "provider"}},
        {"report",
         {"qa.jsonl", "difficulty.jsonl", "matrix.json", "eval.jsonl"},
         {"summary.json", "matrix.csv", "trends.csv", "missing_links.csv"},
         {}},
    };
    return kStages;
}

const StageSpec& stage_spec(const std::string& name) {
    for (const auto& s : stage_specs())
        if (s.name == name) return s;
    throw ConfigError("unknown stage '" + name + "'");
}

std::vector<std::string> resolve_stages(const std::vector<std::string>& requested) {
    std::set<std::string> wanted;
    for (const auto& r : requested) {
        for (const auto& part : [&] {
                 std::vector<std::string> parts;
                 std::size_t pos = 0;
                 while (pos <= r.size()) {
                     auto comma = r.find(',', pos);
                     parts.push_back(trim(r.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
                     if (comma == std::string::npos) break;
                     pos = comma + 1;
                 }
                 return parts;
             }()) {
            if (part.empty()) continue;
            if (part == "all") {
                for (const auto& s : stage_specs()) wanted.insert(s.name);
            } else {
                wanted.insert(stage_spec(part).name);
            }
        }
    }
    std::vector<std::string> out;
    for (const auto& s : stage_specs())
        if (wanted.contains(s.name)) out.push_back(s.name);
    return out;
}

// ── Helpers ─────────────────────────────────────────────────

namespace {

template <typename T>
std::vector<T> load_rows(const fs::path& path) {
    std::vector<T> out;
    for (const auto& row : read_jsonl(path).rows) {
        try {
            out.push_back(row.get<T>());
        } catch (const json::exception& e) {
            throw ParseError(path.filename().string() + ": " + e.what());
        }
    }
    return out;
}

template <typename T>
void save_rows(const fs::path& path, const std::vector<T>& rows) {
    std::vector<json> js;
    js.reserve(rows.size());
    for (const auto& r : rows) js.push_back(json(r));
    write_file_atomic(path, to_jsonl(js));
}

json load_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(path.filename().string() + ": " + e.what());
    }
}

void save_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

std::string file_hash(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ModelParams chat_params(const ProviderConfig& p, const std::string& model = {}) {
    return {model.empty() ? p.chat_model : model, p.temperature, p.seed};
}

std::map<std::string, std::size_t> hop_histogram(const std::vector<ReasoningPath>& paths) {
    std::map<std::string, std::size_t> h;
    for (const auto& p : paths) ++h[std::to_string(p.hop())];
    return h;
}

}  // namespace

std::shared_ptr<Gateway> make_gateway(const PipelineConfig& config, const fs::path& workdir) {
    const auto& p = config.provider;
    GatewayOptions opts;
    opts.max_attempts = p.max_attempts;
    opts.base_backoff = std::chrono::milliseconds(p.backoff_ms);
    opts.max_in_flight = p.max_in_flight;
    opts.embed_batch = p.embed_batch;
    if (!p.cache_dir.empty()) {
        fs::path dir = p.cache_dir;
        opts.cache_dir = dir.is_absolute() ? dir : workdir / dir;
    }
    if (p.kind == "mock") {
        std::map<std::string, std::string> script;
        if (!p.mock_script.empty()) script = load_mock_script(p.mock_script);
        return std::make_shared<Gateway>(std::make_shared<MockChatBackend>(std::move(script)),
                                         std::make_shared<MockEmbeddingBackend>(p.embed_dim), opts);
    }
    if (p.api_key.empty()) throw ConfigError("provider.api_key is empty (set it via ${OPENAI_API_KEY})");
    auto backend = std::make_shared<OpenAIBackend>(OpenAIOptions{p.base_url, p.api_key, std::chrono::seconds(p.timeout_s)});
    return std::make_shared<Gateway>(backend, backend, opts);
}

// ── Pipeline ────────────────────────────────────────────────

Pipeline::Pipeline(PipelineConfig config, fs::path workdir, std::shared_ptr<Gateway> gateway)
    : config_(std::move(config)), workdir_(std::move(workdir)), gateway_(std::move(gateway)) {
    fs::create_directories(workdir_);
    const auto path = workdir_ / "manifest.json";
    if (fs::exists(path)) {
        try {
            manifest_ = json::parse(read_file(path));
        } catch (const std::exception& e) {
            spdlog::warn("manifest unreadable ({}); starting fresh", e.what());
        }
    }
    if (!manifest_.is_object()) manifest_ = json::object();
    if (!manifest_.contains("stages")) manifest_["stages"] = json::object();
    manifest_["run_id"] = "run-" + short_hash(utc_now() + workdir_.string() + std::to_string(std::rand()), 12);
    manifest_["config"] = config_.to_json();
    manifest_["config_hash"] = sha256_hex(config_.to_json().dump());
    manifest_["seeds"] = {{"provider", config_.provider.seed},
                          {"clustering", config_.clustering.seed},
                          {"paths", config_.paths.seed}};
    manifest_["models"] = {{"provider", config_.provider.kind},
                           {"chat", config_.provider.chat_model},
                           {"embed", config_.provider.embed_model},
                           {"answer", config_.eval.model.empty() ? config_.provider.chat_model : config_.eval.model},
                           {"judge", config_.eval.judge_model.empty() ? config_.provider.chat_model : config_.eval.judge_model}};
    manifest_["decoding"] = {{"temperature", config_.provider.temperature}, {"seed", config_.provider.seed}};
    manifest_["power_mean_epsilon"] = kPowerMeanEpsilon;
}

Gateway& Pipeline::gateway() {
    if (!gateway_) gateway_ = make_gateway(config_, workdir_);
    return *gateway_;
}

void Pipeline::override_input(const std::string& artifact, fs::path path) { overrides_[artifact] = std::move(path); }

fs::path Pipeline::input_path(const StageSpec& spec, const std::string& name) const {
    if (std::find(spec.inputs.begin(), spec.inputs.end(), name) == spec.inputs.end())
        throw Error("stage " + spec.name + " reads undeclared artifact " + name);
    if (auto it = overrides_.find(name); it != overrides_.end()) return it->second;
    if (name == kCorpusInput) {
        if (config_.corpus.input.empty()) throw ConfigError("corpus.input is not set");
        return config_.corpus.input;
    }
    return artifact(name);
}

std::string Pipeline::stage_config_hash(const StageSpec& spec) const {
    auto snapshot = config_.to_json();
    json relevant = json::object();
    for (const auto& section : spec.config_sections) relevant[section] = snapshot[section];
    if (relevant.contains("provider")) {
        // Operational knobs do not change outputs.
        for (const auto* key : {"api_key", "max_attempts", "backoff_ms", "max_in_flight", "concurrency", "cache_dir", "timeout_s", "embed_batch"})
            relevant["provider"].erase(key);
    }
    if (relevant.contains("corpus")) relevant["corpus"].erase("input");
    return sha256_hex(relevant.dump());
}

void Pipeline::save_manifest() { save_json(workdir_ / "manifest.json", manifest_); }

StageReport Pipeline::run_stage(const std::string& name, bool force) {
    const auto& spec = stage_spec(name);
    json inputs = json::object();
    for (const auto& in : spec.inputs) {
        const auto path = input_path(spec, in);
        if (!fs::exists(path)) {
            std::string producer;
            for (const auto& s : stage_specs())
                if (std::find(s.outputs.begin(), s.outputs.end(), in) != s.outputs.end()) producer = s.name;
            throw MissingArtifactError("stage '" + name + "' needs " + (in == kCorpusInput ? path.string() : in) +
                                       (producer.empty() ? std::string{} : " (run '" + producer + "' first)"));
        }
        inputs[in] = file_hash(path);
    }
    const auto cfg_hash = stage_config_hash(spec);

    auto& record = manifest_["stages"][name];
    if (!force && record.is_object() && record.value("status", "") == "done" && record.value("config_hash", "") == cfg_hash &&
        record.value("inputs", json::object()) == inputs) {
        bool intact = true;
        const auto outputs = record.value("outputs", json::object());
        for (const auto& out : spec.outputs) {
            const auto path = artifact(out);
            if (!outputs.contains(out) || !fs::exists(path) || file_hash(path) != outputs[out].get<std::string>()) {
                intact = false;
                break;
            }
        }
        if (intact) {
            spdlog::info("[{}] cached", name);
            record["cached"] = true;
            save_manifest();
            return {name, StageStatus::cached, record.value("stats", json::object())};
        }
    }

    spdlog::info("[{}] running", name);
    const auto started = utc_now();
    json stats;
    try {
        stats = execute(spec);
    } catch (const std::exception& e) {
        manifest_["stages"][name] = {{"status", "failed"}, {"error", e.what()}, {"started_at", started}, {"finished_at", utc_now()}};
        save_manifest();
        throw;
    }
    json outputs = json::object();
    for (const auto& out : spec.outputs) outputs[out] = file_hash(artifact(out));
    manifest_["stages"][name] = {{"status", "done"},
                                 {"cached", false},
                                 {"config_hash", cfg_hash},
                                 {"inputs", inputs},
                                 {"outputs", outputs},
                                 {"stats", stats},
                                 {"started_at", started},
                                 {"finished_at", utc_now()}};
    save_manifest();
    spdlog::info("[{}] done {}", name, stats.dump());
    return {name, StageStatus::executed, stats};
}

std::vector<StageReport> Pipeline::run(const std::vector<std::string>& stages, bool force) {
    std::vector<StageReport> reports;
    for (const auto& name : resolve_stages(stages)) reports.push_back(run_stage(name, force));
    return reports;
}

json Pipeline::execute(const StageSpec& spec) {
    const auto& n = spec.name;
    if (n == "ingest") return stage_ingest(spec);
    if (n == "chunk") return stage_chunk(spec);
    if (n == "claims") return stage_claims(spec);
    if (n == "triples") return stage_triples(spec);
    if (n == "graph") return stage_graph(spec);
    if (n == "cluster") return stage_cluster(spec);
    if (n == "link") return stage_link(spec);
    if (n == "augment") return stage_augment(spec);
    if (n == "paths") return stage_paths(spec);
    if (n == "qagen") return stage_qagen(spec);
    if (n == "validate") return stage_validate(spec);
    if (n == "score") return stage_score(spec);
    if (n == "eval") return stage_eval(spec);
    if (n == "report") return stage_report(spec);
    throw Error("no implementation for stage " + n);
}

// ── Stage bodies ────────────────────────────────────────────

json Pipeline::stage_ingest(const StageSpec& spec) {
    const auto tokenizer = make_tokenizer(config_.corpus.tokenizer);
    const auto policy = config_.corpus.on_malformed == "abort" ? OnMalformed::abort : OnMalformed::skip;
    auto result = ingest(input_path(spec, kCorpusInput), config_.corpus.domain, *tokenizer, policy);
    for (const auto& e : result.errors) spdlog::warn("ingest: line {}: {}", e.line, e.message);
    auto kept = filter_by_length(result.articles, config_.corpus.min_tokens, config_.corpus.max_tokens);
    save_rows(artifact("articles.jsonl"), kept);
    return {{"records", result.articles.size()},
            {"malformed", result.errors.size()},
            {"kept", kept.size()},
            {"filtered_by_length", result.articles.size() - kept.size()}};
}

json Pipeline::stage_chunk(const StageSpec& spec) {
    const auto tokenizer = make_tokenizer(config_.corpus.tokenizer);
    const auto articles = load_rows<Article>(input_path(spec, "articles.jsonl"));
    std::vector<Sentence> sentences;
    std::vector<Chunk> chunks;
    for (const auto& a : articles) {
        auto s = split_sentences(a, *tokenizer);
        sentences.insert(sentences.end(), s.begin(), s.end());
        auto c = chunk(a, *tokenizer, config_.corpus.chunking);
        chunks.insert(chunks.end(), c.begin(), c.end());
    }
    chunks = embed_chunks(std::move(chunks), gateway(),
                          {config_.provider.embed_model, config_.provider.embed_batch, config_.provider.concurrency});
    save_rows(artifact("sentences.jsonl"), sentences);
    save_rows(artifact("chunks.jsonl"), chunks);
    return {{"articles", articles.size()}, {"sentences", sentences.size()}, {"chunks", chunks.size()}};
}

json Pipeline::stage_claims(const StageSpec& spec) {
    const auto articles = load_rows<Article>(input_path(spec, "articles.jsonl"));
    const auto sentences = load_rows<Sentence>(input_path(spec, "sentences.jsonl"));
    const auto params = chat_params(config_.provider);
    std::unique_ptr<FactJudge> judge;
    if (config_.corpus.fact_filter == "accept_all") judge = std::make_unique<AcceptAllJudge>();
    else judge = std::make_unique<LlmFactJudge>(gateway(), params);
    auto result = extract_claims(sentences, articles, *judge, gateway(), params, config_.provider.concurrency);
    save_rows(artifact("claims.jsonl"), result.claims);
    const auto& r = result.report;
    return {{"sentences", r.sentences},
            {"factual", r.factual},
            {"undecided", r.undecided},
            {"claims", result.claims.size()},
            {"verified", r.verified},
            {"drop_reasons", r.drop_reasons}};
}

json Pipeline::stage_triples(const StageSpec& spec) {
    const auto claims = load_rows<Claim>(input_path(spec, "claims.jsonl"));
    auto result = extract_all_triples(claims, gateway(), chat_params(config_.provider), config_.provider.concurrency);
    save_rows(artifact("triples.jsonl"), result.triples);
    return {{"triples", result.triples.size()},
            {"parse_errors", result.stats.parse_errors},
            {"out_of_range", result.stats.out_of_range},
            {"duplicates", result.stats.duplicates}};
}

json Pipeline::stage_graph(const StageSpec& spec) {
    const auto triples = load_rows<Triple>(input_path(spec, "triples.jsonl"));
    const auto g = build_graph(triples);
    save_json(artifact("graph.json"), g);
    return {{"nodes", g.nodes.size()}, {"edges", g.edges.size()}};
}

json Pipeline::stage_cluster(const StageSpec& spec) {
    std::vector<Claim> verified;
    for (auto& c : load_rows<Claim>(input_path(spec, "claims.jsonl")))
        if (c.verified) verified.push_back(std::move(c));
    if (verified.empty()) {
        spdlog::warn("cluster: no verified claims");
        save_json(artifact("gmm.json"), json::object());
        save_rows(artifact("clusters.jsonl"), std::vector<ClusterAssignment>{});
        return {{"claims", 0}, {"k", 0}};
    }
    std::vector<std::string> texts, ids;
    for (const auto& c : verified) {
        texts.push_back(c.text);
        ids.push_back(c.id);
    }
    const auto points = to_points(gateway().embed({texts, config_.provider.embed_model}));

    const auto& cc = config_.clustering;
    GmmOptions opts;
    opts.seed = cc.seed;
    opts.max_iters = cc.max_iters;
    opts.tol = cc.tol;
    if (cc.k == "auto") opts.k = default_k(points.size());
    else if (cc.k == "bic") opts.k = select_k_bic(points, 1, std::min(cc.bic_max_k, points.size()), opts);
    else opts.k = std::min<std::size_t>(std::stoul(cc.k), points.size());
    const auto model = fit_gmm(points, opts);
    const auto assignments = assign(model, points, ids, cc.tau);
    save_json(artifact("gmm.json"), model);
    save_rows(artifact("clusters.jsonl"), assignments);

    std::size_t multi = 0;
    for (const auto& a : assignments) multi += a.memberships.size() > 1;
    return {{"claims", verified.size()},
            {"k", model.k},
            {"iterations", model.iterations},
            {"converged", model.converged},
            {"reinitializations", model.reinitializations},
            {"multi_membership", multi}};
}

json Pipeline::stage_link(const StageSpec& spec) {
    std::vector<Claim> verified;
    for (auto& c : load_rows<Claim>(input_path(spec, "claims.jsonl")))
        if (c.verified) verified.push_back(std::move(c));
    const auto triples = load_rows<Triple>(input_path(spec, "triples.jsonl"));
    const auto assignments = load_rows<ClusterAssignment>(input_path(spec, "clusters.jsonl"));
    const auto clusters = group_by_cluster(assignments, verified, triples);
    auto result = detect_all_equivalences(clusters, gateway(), chat_params(config_.provider), config_.provider.concurrency);
    save_rows(artifact("equivalences.jsonl"), result.groups);
    std::size_t exact = 0;
    for (const auto& g : result.groups) exact += g.kind == EquivalenceKind::exact;
    return {{"clusters", clusters.size()},
            {"groups", result.groups.size()},
            {"exact", exact},
            {"contextual", result.groups.size() - exact},
            {"parse_errors", result.parse_errors},
            {"dropped_members", result.dropped_members}};
}

json Pipeline::stage_augment(const StageSpec& spec) {
    const auto g = load_json(input_path(spec, "graph.json")).get<KnowledgeGraph>();
    const auto groups = load_rows<EquivalenceGroup>(input_path(spec, "equivalences.jsonl"));
    const auto assignments = load_rows<ClusterAssignment>(input_path(spec, "clusters.jsonl"));
    AugmentReport report;
    const auto augmented = augment_graph(g, groups, membership_index(assignments), &report);
    save_json(artifact("graph.augmented.json"), augmented);
    return {{"nodes_before", g.nodes.size()},
            {"nodes_after", augmented.nodes.size()},
            {"edges_before", g.edges.size()},
            {"edges_after", augmented.edges.size()},
            {"exact_components", report.exact_components},
            {"mirrored_edges_added", report.mirrored_edges_added},
            {"unresolved_members", report.unresolved_members}};
}

json Pipeline::stage_paths(const StageSpec& spec) {
    const auto g = load_json(input_path(spec, "graph.augmented.json")).get<KnowledgeGraph>();
    const auto& pc = config_.paths;
    PathOptions opts{pc.min_hop, pc.max_hop, pc.per_pair_cap, config_.provider.concurrency};
    auto all = enumerate_paths(g, opts);
    const auto enumerated = hop_histogram(all);
    auto sampled = dedupe_and_sample(std::move(all), pc.per_hop, pc.seed);
    save_rows(artifact("paths.jsonl"), sampled);
    return {{"enumerated", enumerated}, {"sampled", hop_histogram(sampled)}};
}

json Pipeline::stage_qagen(const StageSpec& spec) {
    const auto paths = load_rows<ReasoningPath>(input_path(spec, "paths.jsonl"));
    const auto g = load_json(input_path(spec, "graph.augmented.json")).get<KnowledgeGraph>();
    const auto claims = load_rows<Claim>(input_path(spec, "claims.jsonl"));
    const auto sentences = load_rows<Sentence>(input_path(spec, "sentences.jsonl"));
    const auto chunks = load_rows<Chunk>(input_path(spec, "chunks.jsonl"));
    const SupportIndex support(claims, sentences, chunks);
    const auto results = generate_all_qa(paths, g, support, gateway(), chat_params(config_.provider), config_.provider.concurrency);
    std::vector<QAPair> accepted;
    std::vector<QAGenResult> rejected;
    std::map<std::string, std::size_t> reasons;
    for (const auto& r : results) {
        if (r.qa) {
            accepted.push_back(*r.qa);
        } else {
            rejected.push_back(r);
            ++reasons[r.reject_reason];
        }
    }
    save_rows(artifact("qa.generated.jsonl"), accepted);
    save_rows(artifact("qa.rejected.jsonl"), rejected);
    return {{"paths", paths.size()}, {"generated", accepted.size()}, {"rejected", reasons}};
}

json Pipeline::stage_validate(const StageSpec& spec) {
    auto pairs = load_rows<QAPair>(input_path(spec, "qa.generated.jsonl"));
    ValidationStats stats;
    pairs = validate_all(std::move(pairs), gateway(), chat_params(config_.provider), config_.provider.concurrency, &stats);
    save_rows(artifact("qa.jsonl"), pairs);
    std::map<std::string, std::size_t> per_hop;
    for (const auto& q : pairs)
        if (q.validated) ++per_hop[std::to_string(q.hop)];
    return {{"accepted", stats.accepted},
            {"rejected", stats.rejected},
            {"parse_misses", stats.parse_misses},
            {"validated_per_hop", per_hop}};
}

json Pipeline::stage_score(const StageSpec& spec) {
    std::vector<QAPair> pairs;
    for (auto& q : load_rows<QAPair>(input_path(spec, "qa.jsonl")))
        if (q.validated) pairs.push_back(std::move(q));
    const auto chunks = load_rows<Chunk>(input_path(spec, "chunks.jsonl"));
    std::map<std::string, Embedding> chunk_embeddings;
    for (const auto& c : chunks) chunk_embeddings.emplace(c.id, c.embedding);

    const auto agg = Aggregator::parse(config_.difficulty.aggregator);
    std::vector<std::string> questions;
    for (const auto& q : pairs) questions.push_back(q.question);
    const auto q_emb = questions.empty() ? std::vector<Embedding>{} : gateway().embed({questions, config_.provider.embed_model});
    std::vector<DifficultyScore> scores;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        scores.push_back(score_query(pairs[i].id, pairs[i].hop, q_emb[i], pairs[i].chunk_ids, chunk_embeddings, agg));
    auto matrix = bin_quartiles(scores, config_.difficulty.per_hop, config_.difficulty.bins);
    std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) { return a.qa_id < b.qa_id; });
    save_rows(artifact("difficulty.jsonl"), scores);
    save_json(artifact("matrix.json"), matrix);
    return {{"scored", scores.size()}, {"aggregator", agg.name()}, {"per_hop", matrix.per_hop}, {"bins", matrix.bins}};
}

json Pipeline::stage_eval(const StageSpec& spec) {
    const auto matrix = load_json(input_path(spec, "matrix.json")).get<DifficultyMatrix>();
    std::set<std::string> in_matrix;
    for (const auto& row : matrix.cells)
        for (const auto& c : row) in_matrix.insert(c.query_ids.begin(), c.query_ids.end());
    std::vector<QAPair> pairs;
    for (auto& q : load_rows<QAPair>(input_path(spec, "qa.jsonl")))
        if (q.validated && in_matrix.contains(q.id)) pairs.push_back(std::move(q));
    const auto chunks = load_rows<Chunk>(input_path(spec, "chunks.jsonl"));

    const auto& ec = config_.eval;
    std::unique_ptr<RagSystem> rag;
    if (ec.rag == "subprocess") rag = std::make_unique<SubprocessRag>(ec.command, ec.model.empty() ? "subprocess" : ec.model);
    else rag = std::make_unique<GatewayRag>(gateway(), chat_params(config_.provider, ec.model));

    EvalOptions opts;
    opts.k = ec.k;
    opts.concurrency = config_.provider.concurrency;
    opts.embed_model = config_.provider.embed_model;
    opts.judge_params = chat_params(config_.provider, ec.judge_model);
    const auto records = evaluate(pairs, chunks, gateway(), *rag, opts);
    save_rows(artifact("eval.jsonl"), records);
    std::size_t correct = 0, misses = 0;
    for (const auto& r : records) {
        correct += r.judged_correct;
        misses += r.judge_parse_miss;
    }
    return {{"evaluated", records.size()}, {"correct", correct}, {"judge_parse_misses", misses}, {"model", rag->id()}};
}

json Pipeline::stage_report(const StageSpec& spec) {
    std::vector<QAPair> pairs;
    for (auto& q : load_rows<QAPair>(input_path(spec, "qa.jsonl")))
        if (q.validated) pairs.push_back(std::move(q));
    const auto scores = load_rows<DifficultyScore>(input_path(spec, "difficulty.jsonl"));
    const auto matrix = load_json(input_path(spec, "matrix.json")).get<DifficultyMatrix>();
    const auto records = load_rows<EvalRecord>(input_path(spec, "eval.jsonl"));
    const auto summary = diagnostics(matrix, records, scores, pairs);
    save_json(artifact("summary.json"), summary);
    write_file_atomic(artifact("matrix.csv"), matrix_csv(summary.matrix));
    write_file_atomic(artifact("trends.csv"), trends_csv(summary));
    write_file_atomic(artifact("missing_links.csv"), missing_links_csv(summary));
    return {{"queries", summary.queries},
            {"accuracy", summary.accuracy ? json(*summary.accuracy) : json(nullptr)},
            {"diagonal_r", summary.diagonal.r ? json(*summary.diagonal.r) : json(nullptr)}};
}

}  // namespace grade
