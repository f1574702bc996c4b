#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "grade/corpus.hpp"
#include "grade/gateway.hpp"

namespace grade {

struct Claim {
    std::string id;
    std::string sentence_id;
    std::string article_id;
    std::string text;
    bool verified = false;
    std::optional<std::string> drop_reason;
    std::string raw_verification;
    Embedding embedding;
};

void to_json(json& j, const Claim& c);
void from_json(const json& j, Claim& c);

std::string claim_id_for(std::string_view sentence_id);

/// Folds a model label ("Yes.", " TRUE\n") to its lower-case word form;
/// whitespace and punctuation are dropped.
std::string normalize_label(std::string_view raw);

/// "yes" -> true, "no" -> false, anything else -> nullopt.
std::optional<bool> parse_yes_no(std::string_view raw);

// ── Fact/opinion judges ─────────────────────────────────────

class FactJudge {
public:
    virtual ~FactJudge() = default;
    /// true = factual, false = opinion, nullopt = undecided.
    virtual std::optional<bool> is_factual(const Sentence& sentence) = 0;
};

class AcceptAllJudge final : public FactJudge {
public:
    std::optional<bool> is_factual(const Sentence&) override { return true; }
};

/// Prompts the gateway with the fact_classification template and expects
/// "Fact" or "Opinion".
class LlmFactJudge final : public FactJudge {
public:
    LlmFactJudge(Gateway& gateway, ModelParams params) : gateway_(gateway), params_(std::move(params)) {}
    std::optional<bool> is_factual(const Sentence& sentence) override;

private:
    Gateway& gateway_;
    ModelParams params_;
};

struct FactDecision {
    std::string sentence_id;
    std::string decision;  // "fact", "opinion", "undecided"
};

struct ClassifyResult {
    std::vector<Sentence> factual;
    std::vector<FactDecision> decisions;
    std::size_t undecided = 0;
};

ClassifyResult classify_factual(const std::vector<Sentence>& sentences, FactJudge& judge, std::size_t concurrency = 4);

// ── Claim generation and verification ───────────────────────

/// Rewrites a sentence into a standalone claim. A blank model response
/// yields a claim with empty text and drop_reason "blank_claim".
Claim decontextualize(const Sentence& sentence, const Article& context, Gateway& gateway, const ModelParams& params);

/// Sets verified from the consistency prompt; a parse miss is unverified
/// with drop_reason "verify_parse_miss", a "No" is "inconsistent".
Claim verify(Claim claim, const Sentence& sentence, Gateway& gateway, const ModelParams& params);

struct ClaimsReport {
    std::size_t sentences = 0;
    std::size_t factual = 0;
    std::size_t undecided = 0;
    std::size_t verified = 0;
    std::map<std::string, std::size_t> drop_reasons;
};

struct ClaimsResult {
    std::vector<Claim> claims;  // every decontextualized sentence, verified or not
    ClaimsReport report;
};

/// classify -> decontextualize -> verify, ordered by (article_id, sentence index).
ClaimsResult extract_claims(const std::vector<Sentence>& sentences, const std::vector<Article>& articles,
                            FactJudge& judge, Gateway& gateway, const ModelParams& params,
                            std::size_t concurrency = 4);

}  // namespace grade
