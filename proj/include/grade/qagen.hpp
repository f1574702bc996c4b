#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "grade/claims.hpp"
#include "grade/corpus.hpp"
#include "grade/gateway.hpp"
#include "grade/graph.hpp"

namespace grade {

struct ReasoningPath {
    std::vector<Edge> edges;

    std::size_t hop() const { return edges.size(); }
    const std::string& start() const { return edges.front().src; }
    const std::string& end() const { return edges.back().dst; }
    std::vector<std::string> nodes() const;
    /// Total order used for sorting and ids.
    std::string key() const;
    std::string id() const;
};

void to_json(json& j, const ReasoningPath& p);
void from_json(const json& j, ReasoningPath& p);

struct PathOptions {
    std::size_t min_hop = 2;
    std::size_t max_hop = 5;
    std::size_t per_pair_cap = 64;
    std::size_t concurrency = 4;
};

/// For every ordered pair (s, t) whose shortest-path distance d lies in
/// [min_hop, max_hop], every simple path of exactly d edges. Parallel edges
/// (different predicate or claim) give distinct paths. Self-loops are never
/// traversed. Output sorted by key().
std::vector<ReasoningPath> enumerate_paths(const KnowledgeGraph& kg, const PathOptions& options = {});

/// Keeps one path per (start, end, hop) after a seeded shuffle, then samples
/// up to per_hop paths per hop count. Independent of input order.
std::vector<ReasoningPath> dedupe_and_sample(std::vector<ReasoningPath> paths, std::size_t per_hop, std::uint64_t seed);

/// claim -> sentence -> chunks whose token span contains the sentence
/// (falling back to chunks overlapping it).
class SupportIndex {
public:
    SupportIndex(const std::vector<Claim>& claims, const std::vector<Sentence>& sentences, const std::vector<Chunk>& chunks);

    std::vector<std::string> chunks_for_claim(const std::string& claim_id) const;
    const Claim* claim(const std::string& claim_id) const;
    const Chunk* chunk(const std::string& chunk_id) const;

private:
    std::map<std::string, Claim> claims_;
    std::map<std::string, std::vector<std::string>> support_;
    std::map<std::string, Chunk> chunks_;
};

struct QAPair {
    std::string id;
    std::string question;
    std::string answer;
    std::size_t hop = 0;
    std::string path_id;
    std::vector<std::string> claim_ids;   // path order, distinct
    std::vector<std::string> chunk_ids;   // sorted, distinct
    bool uses_mirrored = false;
    bool uses_merged = false;
    bool validated = false;
};

void to_json(json& j, const QAPair& q);
void from_json(const json& j, QAPair& q);

/// Any edge mirrored.
bool path_uses_mirrored(const ReasoningPath& path);
/// At some junction the two edges name the shared node by surface forms
/// with different canonical keys, i.e. the link only exists after a merge.
bool path_uses_merged(const ReasoningPath& path);

/// "(a, r, b); (b, r2, c)" from edge surfaces.
std::string format_path_triples(const ReasoningPath& path);

const std::string& default_qa_examples();

inline constexpr std::size_t kMaxAnswerTokens = 10;

struct QAParse {
    std::string question;
    std::string answer;
};

/// Single-line "Question: ... | Answer: ..." format.
std::optional<QAParse> parse_qa_output(std::string_view output);

struct QAGenResult {
    std::string path_id;
    std::optional<QAPair> qa;
    std::string reject_reason;  // qa_parse, empty_answer, answer_too_long, answer_not_terminal, no_supporting_chunk
    std::string raw;
};

void to_json(json& j, const QAGenResult& r);

/// Whether `answer` names the terminal node: equal to one of its surface
/// forms after case folding and punctuation folding.
bool answer_matches_node(std::string_view answer, const Entity& node);

QAGenResult generate_qa(const ReasoningPath& path, const KnowledgeGraph& kg, const SupportIndex& support,
                        Gateway& gateway, const ModelParams& params);

std::vector<QAGenResult> generate_all_qa(const std::vector<ReasoningPath>& paths, const KnowledgeGraph& kg,
                                         const SupportIndex& support, Gateway& gateway, const ModelParams& params,
                                         std::size_t concurrency = 4);

/// "true" / "false" after trimming, case folding and dropping punctuation.
std::optional<bool> parse_true_false(std::string_view raw);

struct ValidationStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t parse_misses = 0;
};

QAPair validate_qa(QAPair qa, Gateway& gateway, const ModelParams& params, bool* parse_miss = nullptr);

std::vector<QAPair> validate_all(std::vector<QAPair> pairs, Gateway& gateway, const ModelParams& params,
                                 std::size_t concurrency = 4, ValidationStats* stats = nullptr);

}  // namespace grade
