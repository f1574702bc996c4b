#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "grade/corpus.hpp"
#include "grade/difficulty.hpp"
#include "grade/gateway.hpp"
#include "grade/qagen.hpp"

namespace grade {

struct RetrievalHit {
    std::string chunk_id;
    double score = 0.0;
};

/// Top-k chunks by cosine similarity, descending, ties by chunk id.
std::vector<RetrievalHit> retrieve(const Embedding& query, const std::vector<Chunk>& chunks, std::size_t k = 10);

/// The system under test: question plus retrieved context in, answer out.
class RagSystem {
public:
    virtual ~RagSystem() = default;
    virtual std::string answer(const std::string& qa_id, const std::string& question,
                               const std::vector<std::string>& context) = 0;
    virtual std::string id() const = 0;
};

/// Answers with the rag_answer prompt through the gateway.
class GatewayRag : public RagSystem {
public:
    GatewayRag(Gateway& gateway, ModelParams params) : gateway_(gateway), params_(std::move(params)) {}
    std::string answer(const std::string& qa_id, const std::string& question,
                       const std::vector<std::string>& context) override;
    std::string id() const override { return params_.model; }

private:
    Gateway& gateway_;
    ModelParams params_;
};

/// Trimmed answer; throws when the context is empty.
std::string answer(RagSystem& rag, const std::string& qa_id, const std::string& question,
                   const std::vector<std::string>& context);

struct JudgeResult {
    bool correct = false;
    bool parse_miss = false;
    std::string raw;
};

JudgeResult judge(Gateway& gateway, const ModelParams& params, const std::string& question, const std::string& gold,
                  const std::string& response);

struct EvalRecord {
    std::string qa_id;
    std::size_t hop = 0;
    std::vector<std::string> retrieved_chunk_ids;
    std::vector<double> retrieval_scores;
    std::string generated_answer;
    bool judged_correct = false;
    std::string model_id;
    std::string judge_raw;
    bool judge_parse_miss = false;
};

void to_json(json& j, const EvalRecord& r);
void from_json(const json& j, EvalRecord& r);

struct EvalOptions {
    std::size_t k = 10;
    std::size_t concurrency = 4;
    std::string embed_model = "mock-embed";
    ModelParams judge_params;
};

/// Retrieve, answer and judge every pair. Records come back in input order.
std::vector<EvalRecord> evaluate(const std::vector<QAPair>& pairs, const std::vector<Chunk>& chunks, Gateway& gateway,
                                 RagSystem& rag, const EvalOptions& options);

/// Cell error rate = incorrect / total; cells without records stay null.
/// Throws listing any record whose qa_id is in no cell.
DifficultyMatrix fill_matrix(const std::vector<EvalRecord>& records, DifficultyMatrix matrix);

struct Correlation {
    std::optional<double> r;
    std::string reason;  // set when r is null
};

void to_json(json& j, const Correlation& c);

/// Product-moment coefficient. Null with a reason for fewer than two points
/// or zero variance; throws on length mismatch.
Correlation pearson(const std::vector<double>& x, const std::vector<double>& y);

struct HopCorrelation {
    std::size_t hop = 0;
    Correlation difficulty_vs_accuracy;  // over the row's bin aggregates
    Correlation difficulty_vs_error;
    Correlation per_query;               // D_r vs 0/1 correctness
};

struct HopAccuracy {
    std::size_t hop = 0;
    std::size_t count = 0;
    std::optional<double> accuracy;
};

struct MissingLinkRow {
    std::size_t hop = 0;
    std::size_t count = 0;
    std::size_t mirrored = 0;
    std::size_t merged = 0;
    std::size_t either = 0;
    std::optional<double> accuracy_with_link;     // over evaluated pairs needing a link
    std::optional<double> accuracy_without_link;
};

struct AblationRow {
    std::string aggregator;
    std::vector<HopCorrelation> per_hop;
    Correlation diagonal;
};

struct EvalSummary {
    std::size_t queries = 0;
    std::optional<double> accuracy;
    std::size_t judge_parse_misses = 0;
    DifficultyMatrix matrix;
    std::vector<HopAccuracy> per_hop_accuracy;
    std::vector<HopCorrelation> per_hop_correlation;
    std::vector<std::optional<double>> diagonal_errors;  // (2,0), (3,1), (4,2), (5,3)
    Correlation diagonal;
    std::vector<AblationRow> ablation;
    std::vector<MissingLinkRow> missing_links;
};

void to_json(json& j, const EvalSummary& s);

/// Rows of 1/0 correctness keyed by qa_id.
std::map<std::string, bool> correctness_by_id(const std::vector<EvalRecord>& records);

std::vector<HopCorrelation> hop_correlations(const DifficultyMatrix& filled, const std::vector<DifficultyScore>& scores,
                                             const std::map<std::string, bool>& correct);

/// Diagonal cells' error rates and their correlation with index 0..3.
std::pair<std::vector<std::optional<double>>, Correlation> diagonal_linearity(const DifficultyMatrix& filled);

std::vector<MissingLinkRow> missing_link_breakdown(const std::vector<QAPair>& pairs,
                                                   const std::map<std::string, bool>& correct);

/// Everything the report stage writes. `pairs` are the validated pairs;
/// the aggregator ablation re-bins the stored similarities under min, mean
/// and pmean:-2.
EvalSummary diagnostics(const DifficultyMatrix& matrix, const std::vector<EvalRecord>& records,
                        const std::vector<DifficultyScore>& scores, const std::vector<QAPair>& pairs);

std::string matrix_csv(const DifficultyMatrix& filled);
std::string trends_csv(const EvalSummary& summary);
std::string missing_links_csv(const EvalSummary& summary);

}  // namespace grade
