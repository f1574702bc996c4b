#include "grade/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

namespace grade {

std::vector<RetrievalHit> retrieve(const Embedding& query, const std::vector<Chunk>& chunks, std::size_t k) {
    if (chunks.empty()) throw Error("retrieve: empty corpus");
    std::vector<RetrievalHit> hits;
    hits.reserve(chunks.size());
    for (const auto& c : chunks) {
        if (c.embedding.empty()) throw Error("retrieve: chunk " + c.id + " is not embedded");
        hits.push_back({c.id, similarity(query, c.embedding)});
    }
    const auto take = std::min(k, hits.size());
    auto better = [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_id < b.chunk_id;
    };
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(), better);
    hits.resize(take);
    return hits;
}

std::string GatewayRag::answer(const std::string&, const std::string& question, const std::vector<std::string>& context) {
    auto resp = gateway_.complete({TemplateName::rag_answer, {{"question", question}, {"top_chunks", join(context, "\n\n")}}, params_});
    return resp.text;
}

std::string answer(RagSystem& rag, const std::string& qa_id, const std::string& question,
                   const std::vector<std::string>& context) {
    if (context.empty()) throw Error("answer: empty retrieved context for " + qa_id);
    return trim(rag.answer(qa_id, question, context));
}

JudgeResult judge(Gateway& gateway, const ModelParams& params, const std::string& question, const std::string& gold,
                  const std::string& response) {
    auto resp = gateway.complete(
        {TemplateName::judge, {{"question", question}, {"gt_answer", gold}, {"rag_answer", response}}, params});
    JudgeResult r;
    r.raw = resp.text;
    auto verdict = parse_true_false(resp.text);
    r.parse_miss = !verdict;
    r.correct = verdict.value_or(false);
    if (r.parse_miss) spdlog::warn("judge: unparseable verdict '{}'", resp.text);
    return r;
}

void to_json(json& j, const EvalRecord& r) {
    j = json{{"qa_id", r.qa_id},
             {"hop", r.hop},
             {"retrieved_chunk_ids", r.retrieved_chunk_ids},
             {"retrieval_scores", r.retrieval_scores},
             {"generated_answer", r.generated_answer},
             {"judged_correct", r.judged_correct},
             {"model_id", r.model_id},
             {"judge_raw", r.judge_raw},
             {"judge_parse_miss", r.judge_parse_miss}};
}

void from_json(const json& j, EvalRecord& r) {
    r.qa_id = j.at("qa_id").get<std::string>();
    r.hop = j.value("hop", std::size_t{0});
    r.retrieved_chunk_ids = j.at("retrieved_chunk_ids").get<std::vector<std::string>>();
    r.retrieval_scores = j.value("retrieval_scores", std::vector<double>{});
    r.generated_answer = j.at("generated_answer").get<std::string>();
    r.judged_correct = j.at("judged_correct").get<bool>();
    r.model_id = j.value("model_id", std::string{});
    r.judge_raw = j.value("judge_raw", std::string{});
    r.judge_parse_miss = j.value("judge_parse_miss", false);
}

std::vector<EvalRecord> evaluate(const std::vector<QAPair>& pairs, const std::vector<Chunk>& chunks, Gateway& gateway,
                                 RagSystem& rag, const EvalOptions& options) {
    std::map<std::string, const Chunk*> by_id;
    for (const auto& c : chunks) by_id.emplace(c.id, &c);
    std::vector<EvalRecord> out(pairs.size());
    parallel_for(pairs.size(), options.concurrency, [&](std::size_t i) {
        const auto& qa = pairs[i];
        EvalRecord rec;
        rec.qa_id = qa.id;
        rec.hop = qa.hop;
        rec.model_id = rag.id();
        const auto q = gateway.embed({{qa.question}, options.embed_model}).front();
        std::vector<std::string> context;
        for (const auto& hit : retrieve(q, chunks, options.k)) {
            rec.retrieved_chunk_ids.push_back(hit.chunk_id);
            rec.retrieval_scores.push_back(hit.score);
            context.push_back(by_id.at(hit.chunk_id)->text);
        }
        rec.generated_answer = answer(rag, qa.id, qa.question, context);
        auto verdict = judge(gateway, options.judge_params, qa.question, qa.answer, rec.generated_answer);
        rec.judged_correct = verdict.correct;
        rec.judge_raw = verdict.raw;
        rec.judge_parse_miss = verdict.parse_miss;
        out[i] = std::move(rec);
    });
    return out;
}

DifficultyMatrix fill_matrix(const std::vector<EvalRecord>& records, DifficultyMatrix matrix) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> where;
    for (std::size_t r = 0; r < matrix.cells.size(); ++r)
        for (std::size_t b = 0; b < matrix.cells[r].size(); ++b)
            for (const auto& id : matrix.cells[r][b].query_ids) where.emplace(id, std::pair{r, b});

    std::vector<std::string> orphans;
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> tally(
        matrix.cells.size(), std::vector<std::pair<std::size_t, std::size_t>>(matrix.bins));  // (total, wrong)
    for (const auto& rec : records) {
        auto it = where.find(rec.qa_id);
        if (it == where.end()) {
            orphans.push_back(rec.qa_id);
            continue;
        }
        auto& [total, wrong] = tally[it->second.first][it->second.second];
        ++total;
        if (!rec.judged_correct) ++wrong;
    }
    if (!orphans.empty()) throw Error("fill_matrix: records without a matrix cell: " + join(orphans, ", "));
    for (std::size_t r = 0; r < matrix.cells.size(); ++r)
        for (std::size_t b = 0; b < matrix.bins; ++b) {
            const auto [total, wrong] = tally[r][b];
            auto& cell = matrix.cells[r][b];
            if (total == 0) cell.error_rate.reset();
            else cell.error_rate = static_cast<double>(wrong) / static_cast<double>(total);
        }
    return matrix;
}

void to_json(json& j, const Correlation& c) {
    j = json{{"r", c.r ? json(*c.r) : json(nullptr)}};
    if (!c.r) j["reason"] = c.reason;
}

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error("pearson: length mismatch");
    if (x.size() < 2) return {std::nullopt, "fewer than 2 points"};
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Relative threshold so that constant series with rounding noise count as constant.
    auto flat = [&](double ss, const std::vector<double>& v, double m) {
        double scale = std::abs(m);
        for (double a : v) scale = std::max(scale, std::abs(a));
        return ss <= 1e-24 * std::max(1.0, scale * scale) * n;
    };
    if (flat(sxx, x, mx) || flat(syy, y, my)) return {std::nullopt, "zero variance"};
    return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), {}};
}

std::map<std::string, bool> correctness_by_id(const std::vector<EvalRecord>& records) {
    std::map<std::string, bool> out;
    for (const auto& r : records) out[r.qa_id] = r.judged_correct;
    return out;
}

std::vector<HopCorrelation> hop_correlations(const DifficultyMatrix& filled, const std::vector<DifficultyScore>& scores,
                                             const std::map<std::string, bool>& correct) {
    std::vector<HopCorrelation> out;
    for (std::size_t r = 0; r < filled.hops.size(); ++r) {
        HopCorrelation hc;
        hc.hop = filled.hops[r];
        std::vector<double> d, acc, err;
        for (const auto& cell : filled.cells[r]) {
            if (!cell.error_rate) continue;
            d.push_back(cell.mean_score);
            acc.push_back(1.0 - *cell.error_rate);
            err.push_back(*cell.error_rate);
        }
        if (d.size() < 2) {
            hc.difficulty_vs_accuracy = hc.difficulty_vs_error = {std::nullopt, "fewer than 2 non-null bins"};
        } else {
            hc.difficulty_vs_accuracy = pearson(d, acc);
            hc.difficulty_vs_error = pearson(d, err);
        }
        std::vector<double> qd, qc;
        for (const auto& s : scores) {
            if (s.hop != hc.hop) continue;
            auto it = correct.find(s.qa_id);
            if (it == correct.end()) continue;
            qd.push_back(s.score);
            qc.push_back(it->second ? 1.0 : 0.0);
        }
        hc.per_query = pearson(qd, qc);
        out.push_back(std::move(hc));
    }
    return out;
}

std::pair<std::vector<std::optional<double>>, Correlation> diagonal_linearity(const DifficultyMatrix& filled) {
    std::vector<std::optional<double>> diag;
    std::vector<double> idx, err;
    const auto n = std::min(filled.cells.size(), filled.bins);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = filled.cells[i][i].error_rate;
        diag.push_back(e);
        if (e) {
            idx.push_back(static_cast<double>(i));
            err.push_back(*e);
        }
    }
    return {diag, pearson(idx, err)};
}

std::vector<MissingLinkRow> missing_link_breakdown(const std::vector<QAPair>& pairs,
                                                   const std::map<std::string, bool>& correct) {
    std::vector<MissingLinkRow> rows;
    for (std::size_t hop = kMinHop; hop <= kMaxHop; ++hop) {
        MissingLinkRow row;
        row.hop = hop;
        std::size_t with_n = 0, with_ok = 0, without_n = 0, without_ok = 0;
        for (const auto& qa : pairs) {
            if (qa.hop != hop) continue;
            ++row.count;
            row.mirrored += qa.uses_mirrored;
            row.merged += qa.uses_merged;
            const bool link = qa.uses_mirrored || qa.uses_merged;
            row.either += link;
            auto it = correct.find(qa.id);
            if (it == correct.end()) continue;
            (link ? with_n : without_n)++;
            if (it->second) (link ? with_ok : without_ok)++;
        }
        if (with_n) row.accuracy_with_link = static_cast<double>(with_ok) / static_cast<double>(with_n);
        if (without_n) row.accuracy_without_link = static_cast<double>(without_ok) / static_cast<double>(without_n);
        rows.push_back(row);
    }
    return rows;
}

EvalSummary diagnostics(const DifficultyMatrix& matrix, const std::vector<EvalRecord>& records,
                        const std::vector<DifficultyScore>& scores, const std::vector<QAPair>& pairs) {
    EvalSummary s;
    s.matrix = fill_matrix(records, matrix);
    const auto correct = correctness_by_id(records);
    s.queries = records.size();
    std::size_t ok = 0;
    for (const auto& r : records) {
        ok += r.judged_correct;
        s.judge_parse_misses += r.judge_parse_miss;
    }
    if (!records.empty()) s.accuracy = static_cast<double>(ok) / static_cast<double>(records.size());

    for (std::size_t row = 0; row < s.matrix.hops.size(); ++row) {
        HopAccuracy ha;
        ha.hop = s.matrix.hops[row];
        std::size_t row_ok = 0;
        for (const auto& r : records) {
            if (r.hop != ha.hop) continue;
            ++ha.count;
            row_ok += r.judged_correct;
        }
        if (ha.count) ha.accuracy = static_cast<double>(row_ok) / static_cast<double>(ha.count);
        s.per_hop_accuracy.push_back(ha);
    }
    s.per_hop_correlation = hop_correlations(s.matrix, scores, correct);
    std::tie(s.diagonal_errors, s.diagonal) = diagonal_linearity(s.matrix);

    for (const auto& agg : {Aggregator::min(), Aggregator::mean(), Aggregator::power_mean(-2.0)}) {
        auto rescored = scores;
        for (auto& sc : rescored) {
            sc.aggregator = agg.name();
            sc.score = aggregate(sc.similarities, agg);
        }
        auto m = fill_matrix(records, bin_quartiles(rescored, matrix.per_hop, matrix.bins));
        AblationRow row;
        row.aggregator = agg.name();
        row.per_hop = hop_correlations(m, rescored, correct);
        row.diagonal = diagonal_linearity(m).second;
        s.ablation.push_back(std::move(row));
    }
    s.missing_links = missing_link_breakdown(pairs, correct);
    return s;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json hop_correlations_json(const std::vector<HopCorrelation>& rows) {
    json out = json::array();
    for (const auto& h : rows) {
        out.push_back({{"hop", h.hop},
                       {"difficulty_vs_accuracy", h.difficulty_vs_accuracy},
                       {"difficulty_vs_error", h.difficulty_vs_error},
                       {"per_query", h.per_query}});
    }
    return out;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : std::string{}; }

}  // namespace

void to_json(json& j, const EvalSummary& s) {
    json per_hop = json::array();
    for (const auto& h : s.per_hop_accuracy) per_hop.push_back({{"hop", h.hop}, {"count", h.count}, {"accuracy", opt(h.accuracy)}});
    json cells = json::array();
    for (std::size_t r = 0; r < s.matrix.cells.size(); ++r)
        for (std::size_t b = 0; b < s.matrix.cells[r].size(); ++b) {
            const auto& c = s.matrix.cells[r][b];
            cells.push_back({{"hop", s.matrix.hops[r]},
                             {"bin", b},
                             {"count", c.count},
                             {"mean_score", c.mean_score},
                             {"error_rate", opt(c.error_rate)}});
        }
    json diag = json::array();
    for (const auto& d : s.diagonal_errors) diag.push_back(opt(d));
    json ablation = json::array();
    for (const auto& a : s.ablation)
        ablation.push_back({{"aggregator", a.aggregator}, {"per_hop", hop_correlations_json(a.per_hop)}, {"diagonal", a.diagonal}});
    json links = json::array();
    for (const auto& m : s.missing_links) {
        auto share = [&](std::size_t k) { return m.count ? json(static_cast<double>(k) / static_cast<double>(m.count)) : json(nullptr); };
        links.push_back({{"hop", m.hop},
                         {"count", m.count},
                         {"mirrored", m.mirrored},
                         {"merged", m.merged},
                         {"either", m.either},
                         {"mirrored_share", share(m.mirrored)},
                         {"merged_share", share(m.merged)},
                         {"either_share", share(m.either)},
                         {"accuracy_with_link", opt(m.accuracy_with_link)},
                         {"accuracy_without_link", opt(m.accuracy_without_link)}});
    }
    j = json{{"queries", s.queries},
             {"accuracy", opt(s.accuracy)},
             {"judge_parse_misses", s.judge_parse_misses},
             {"binning", {{"per_hop", s.matrix.per_hop}, {"bins", s.matrix.bins}}},
             {"per_hop_accuracy", std::move(per_hop)},
             {"cells", std::move(cells)},
             {"per_hop_correlation", hop_correlations_json(s.per_hop_correlation)},
             {"diagonal", {{"error_rates", std::move(diag)}, {"correlation", s.diagonal}}},
             {"aggregator_ablation", std::move(ablation)},
             {"missing_links", std::move(links)}};
}

std::string matrix_csv(const DifficultyMatrix& filled) {
    std::string out = "hop";
    for (std::size_t b = 0; b < filled.bins; ++b) out += ",bin" + std::to_string(b);
    out += '\n';
    for (std::size_t r = 0; r < filled.cells.size(); ++r) {
        out += std::to_string(filled.hops[r]);
        for (const auto& c : filled.cells[r]) out += "," + fmt_opt(c.error_rate);
        out += '\n';
    }
    return out;
}

std::string trends_csv(const EvalSummary& summary) {
    std::string out = "hop,count,accuracy\n";
    for (const auto& h : summary.per_hop_accuracy)
        out += fmt::format("{},{},{}\n", h.hop, h.count, fmt_opt(h.accuracy));
    return out;
}

std::string missing_links_csv(const EvalSummary& summary) {
    std::string out = "hop,count,mirrored,merged,either,mirrored_share,merged_share,either_share\n";
    for (const auto& m : summary.missing_links) {
        auto share = [&](std::size_t k) {
            return m.count ? fmt::format("{:.6f}", static_cast<double>(k) / static_cast<double>(m.count)) : std::string{};
        };
        out += fmt::format("{},{},{},{},{},{},{},{}\n", m.hop, m.count, m.mirrored, m.merged, m.either, share(m.mirrored),
                           share(m.merged), share(m.either));
    }
    return out;
}

}  // namespace grade
