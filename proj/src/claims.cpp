#include "grade/claims.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include <spdlog/spdlog.h>

namespace grade {

void to_json(json& j, const Claim& c) {
    j = json{{"id", c.id},
             {"sentence_id", c.sentence_id},
             {"article_id", c.article_id},
             {"text", c.text},
             {"verified", c.verified}};
    if (c.drop_reason) j["drop_reason"] = *c.drop_reason;
}

void from_json(const json& j, Claim& c) {
    c.id = j.at("id").get<std::string>();
    c.sentence_id = j.at("sentence_id").get<std::string>();
    c.article_id = j.at("article_id").get<std::string>();
    c.text = j.at("text").get<std::string>();
    c.verified = j.value("verified", false);
    if (j.contains("drop_reason") && j["drop_reason"].is_string()) c.drop_reason = j["drop_reason"].get<std::string>();
}

std::string claim_id_for(std::string_view sentence_id) { return "cl-" + short_hash(sentence_id, 16); }

std::string normalize_label(std::string_view raw) {
    std::string out;
    for (char c : raw) {
        auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) out.push_back(static_cast<char>(std::tolower(u)));
    }
    return out;
}

std::optional<bool> parse_yes_no(std::string_view raw) {
    const auto label = normalize_label(raw);
    if (label == "yes") return true;
    if (label == "no") return false;
    return std::nullopt;
}

std::optional<bool> LlmFactJudge::is_factual(const Sentence& sentence) {
    try {
        auto resp = gateway_.complete({TemplateName::fact_classification, {{"sentence", sentence.text}}, params_});
        const auto label = normalize_label(resp.text);
        if (label == "fact") return true;
        if (label == "opinion") return false;
        spdlog::debug("fact judge parse miss for {}: '{}'", sentence.id, resp.text);
    } catch (const TransportError& e) {
        spdlog::warn("fact judge failed for {}: {}", sentence.id, e.what());
    } catch (const ContentError& e) {
        spdlog::warn("fact judge refused {}: {}", sentence.id, e.what());
    }
    return std::nullopt;
}

ClassifyResult classify_factual(const std::vector<Sentence>& sentences, FactJudge& judge, std::size_t concurrency) {
    std::vector<std::optional<bool>> verdicts(sentences.size());
    parallel_for(sentences.size(), concurrency, [&](std::size_t i) { verdicts[i] = judge.is_factual(sentences[i]); });
    ClassifyResult result;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        const auto& v = verdicts[i];
        result.decisions.push_back({sentences[i].id, !v ? "undecided" : (*v ? "fact" : "opinion")});
        if (!v) ++result.undecided;
        if (v && *v) result.factual.push_back(sentences[i]);
    }
    return result;
}

Claim decontextualize(const Sentence& sentence, const Article& context, Gateway& gateway, const ModelParams& params) {
    if (sentence.article_id != context.id) {
        throw Error("decontextualize: sentence " + sentence.id + " does not belong to article " + context.id);
    }
    Claim claim;
    claim.id = claim_id_for(sentence.id);
    claim.sentence_id = sentence.id;
    claim.article_id = sentence.article_id;
    auto resp = gateway.complete(
        {TemplateName::claim_generation, {{"context", context.text}, {"evidence", sentence.text}}, params});
    claim.text = collapse_whitespace(resp.text);
    if (claim.text.rfind("Claim:", 0) == 0) claim.text = trim(claim.text.substr(6));
    if (claim.text.empty()) claim.drop_reason = "blank_claim";
    return claim;
}

Claim verify(Claim claim, const Sentence& sentence, Gateway& gateway, const ModelParams& params) {
    auto resp = gateway.complete(
        {TemplateName::consistency_check, {{"sentence", sentence.text}, {"claim", claim.text}}, params});
    claim.raw_verification = resp.text;
    auto verdict = parse_yes_no(resp.text);
    claim.verified = verdict.value_or(false);
    if (!verdict) {
        spdlog::debug("verification parse miss for {}: '{}'", claim.id, resp.text);
        claim.drop_reason = "verify_parse_miss";
    } else if (!*verdict) {
        claim.drop_reason = "inconsistent";
    } else {
        claim.drop_reason.reset();
    }
    return claim;
}

ClaimsResult extract_claims(const std::vector<Sentence>& sentences, const std::vector<Article>& articles,
                            FactJudge& judge, Gateway& gateway, const ModelParams& params, std::size_t concurrency) {
    std::unordered_map<std::string, const Article*> by_id;
    for (const auto& a : articles) by_id.emplace(a.id, &a);

    std::vector<Sentence> ordered = sentences;
    std::stable_sort(ordered.begin(), ordered.end(), [](const Sentence& a, const Sentence& b) {
        return std::tie(a.article_id, a.index) < std::tie(b.article_id, b.index);
    });

    ClaimsResult result;
    result.report.sentences = ordered.size();
    auto classified = classify_factual(ordered, judge, concurrency);
    result.report.factual = classified.factual.size();
    result.report.undecided = classified.undecided;

    const auto& factual = classified.factual;
    std::vector<Claim> claims(factual.size());
    parallel_for(factual.size(), concurrency, [&](std::size_t i) {
        const auto& s = factual[i];
        auto it = by_id.find(s.article_id);
        if (it == by_id.end()) throw Error("sentence " + s.id + " references unknown article " + s.article_id);
        auto claim = decontextualize(s, *it->second, gateway, params);
        if (!claim.drop_reason) claim = verify(std::move(claim), s, gateway, params);
        claims[i] = std::move(claim);
    });

    for (auto& c : claims) {
        if (c.verified) ++result.report.verified;
        if (c.drop_reason) ++result.report.drop_reasons[*c.drop_reason];
    }
    result.claims = std::move(claims);
    return result;
}

}  // namespace grade
