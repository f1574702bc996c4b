// grade: command-line driver for the benchmark synthesis and evaluation pipeline.

#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "grade/errors.hpp"
#include "grade/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct Overrides {
    // ingest
    std::optional<std::string> in;
    std::optional<std::string> domain;
    std::optional<std::size_t> min_tokens, max_tokens;
    // chunk
    std::optional<std::size_t> chunk_min, chunk_max, chunk_overlap;
    // claims
    std::optional<std::string> sentences_in;
    // cluster
    std::optional<std::string> k;
    std::optional<double> tau;
    std::optional<std::uint64_t> cluster_seed;
    // paths
    std::optional<std::size_t> per_hop;
    std::optional<std::uint64_t> paths_seed;
    // score
    std::optional<std::string> agg;
    bool score_per_hop = false;
    bool score_global = false;
    std::optional<std::size_t> bins;
    // eval
    std::optional<std::size_t> eval_k;
    std::optional<std::string> model;
    std::optional<std::string> rag_command;
};

void apply(const Overrides& o, grade::PipelineConfig& c) {
    if (o.in) c.corpus.input = *o.in;
    if (o.domain) c.corpus.domain = *o.domain;
    if (o.min_tokens) c.corpus.min_tokens = *o.min_tokens;
    if (o.max_tokens) c.corpus.max_tokens = *o.max_tokens;
    if (o.chunk_min) c.corpus.chunking.min_tokens = *o.chunk_min;
    if (o.chunk_max) c.corpus.chunking.max_tokens = *o.chunk_max;
    if (o.chunk_overlap) c.corpus.chunking.overlap = *o.chunk_overlap;
    if (o.k) c.clustering.k = *o.k;
    if (o.tau) c.clustering.tau = *o.tau;
    if (o.cluster_seed) c.clustering.seed = *o.cluster_seed;
    if (o.per_hop) c.paths.per_hop = *o.per_hop;
    if (o.paths_seed) c.paths.seed = *o.paths_seed;
    if (o.agg) c.difficulty.aggregator = *o.agg;
    if (o.score_per_hop) c.difficulty.per_hop = true;
    if (o.score_global) c.difficulty.per_hop = false;
    if (o.bins) c.difficulty.bins = *o.bins;
    if (o.eval_k) c.eval.k = *o.eval_k;
    if (o.model) c.eval.model = *o.model;
    if (o.rag_command) {
        c.eval.rag = "subprocess";
        c.eval.command = *o.rag_command;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"grade: multi-hop RAG benchmark synthesis and difficulty-matrix evaluation"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string workdir = "work";
    std::string config_path;
    bool force = false;
    bool verbose = false;
    bool quiet = false;
    app.add_option("-w,--workdir", workdir, "Artifact directory")->capture_default_str();
    app.add_option("-c,--config", config_path, "JSON config file");
    app.add_flag("-f,--force", force, "Re-run stages even when cached");
    app.add_flag("-v,--verbose", verbose, "Debug logging");
    app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

    Overrides o;
    std::vector<std::string> stages{"all"};
    bool dry_run = false;

    auto* run = app.add_subcommand("run", "Run several stages in dependency order");
    run->add_option("--stages", stages, "Stages (comma separated or repeated), or 'all'")->delimiter(',')->capture_default_str();
    run->add_flag("--dry-run", dry_run, "Print the stage plan and exit");

    auto* ingest = app.add_subcommand("ingest", "Read and length-filter the article JSONL");
    ingest->add_option("--in", o.in, "Articles JSONL");
    ingest->add_option("--domain", o.domain, "Domain tag for records without one");
    ingest->add_option("--min-tokens", o.min_tokens);
    ingest->add_option("--max-tokens", o.max_tokens);

    auto* chunk = app.add_subcommand("chunk", "Split sentences, chunk and embed");
    chunk->add_option("--min", o.chunk_min);
    chunk->add_option("--max", o.chunk_max);
    chunk->add_option("--overlap", o.chunk_overlap);

    auto* claims = app.add_subcommand("claims", "Filter, decontextualize and verify claims");
    claims->add_option("--in", o.sentences_in, "Sentences JSONL (defaults to the workdir's)");

    app.add_subcommand("triples", "Extract triples from verified claims");
    app.add_subcommand("graph", "Build the exact-match knowledge graph");

    auto* cluster = app.add_subcommand("cluster", "GMM soft clustering of claim embeddings");
    cluster->add_option("--k", o.k, "auto, bic or a component count");
    cluster->add_option("--tau", o.tau, "Soft membership threshold");
    cluster->add_option("--seed", o.cluster_seed);

    app.add_subcommand("link", "Detect entity equivalences within clusters");
    app.add_subcommand("augment", "Merge exact groups and mirror contextual edges");

    auto* paths = app.add_subcommand("paths", "Enumerate, dedupe and sample reasoning paths");
    paths->add_option("--per-hop", o.per_hop);
    paths->add_option("--seed", o.paths_seed);

    app.add_subcommand("qagen", "Generate question-answer pairs from paths");
    app.add_subcommand("validate", "Filter ambiguous question-answer pairs");

    auto* score = app.add_subcommand("score", "Retrieval difficulty scores and matrix binning");
    score->add_option("--agg", o.agg, "min, mean or pmean:<p>");
    score->add_flag("--per-hop", o.score_per_hop, "Quartiles within each hop row");
    score->add_flag("--global", o.score_global, "Quartiles over all queries");
    score->add_option("--bins", o.bins, "Bin count (2 collapses to low/high)");

    auto* eval = app.add_subcommand("eval", "Retrieve, answer and judge");
    eval->add_option("--k", o.eval_k, "Retrieved chunks per question");
    eval->add_option("--model", o.model, "Answer model id");
    eval->add_option("--rag-command", o.rag_command, "External RAG system speaking JSON lines");

    app.add_subcommand("report", "Summary, matrix and trend reports");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    spdlog::set_default_logger(spdlog::stderr_color_mt("grade"));
    spdlog::set_pattern("%H:%M:%S %^%l%$ %v");
    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    try {
        auto config = config_path.empty() ? grade::PipelineConfig{} : grade::load_config(config_path);
        apply(o, config);
        config.validate();

        const std::vector<std::string> requested = name == "run" ? stages : std::vector<std::string>{name};
        const auto plan = grade::resolve_stages(requested);
        if (dry_run) {
            for (const auto& stage : plan) {
                const auto& spec = grade::stage_spec(stage);
                std::cout << stage << ": " << grade::join(spec.inputs, ", ") << " -> " << grade::join(spec.outputs, ", ")
                          << "\n";
            }
            return 0;
        }

        grade::Pipeline pipeline(config, workdir);
        if (o.sentences_in) pipeline.override_input("sentences.jsonl", *o.sentences_in);
        for (const auto& report : pipeline.run(plan, force)) {
            std::cout << report.name << ": "
                      << (report.status == grade::StageStatus::cached ? "cached" : "done") << " "
                      << report.stats.dump() << "\n";
        }
        return 0;
    } catch (const grade::ConfigError& e) {
        spdlog::error("config: {}", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitStage;
    }
}
