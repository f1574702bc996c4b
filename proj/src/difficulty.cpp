#include "grade/difficulty.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

namespace grade {

std::string Aggregator::name() const {
    switch (kind) {
        case AggregatorKind::min: return "min";
        case AggregatorKind::mean: return "mean";
        case AggregatorKind::power_mean: {
            json j = p;  // shortest round-trip formatting
            return "pmean:" + j.dump();
        }
    }
    return "min";
}

Aggregator Aggregator::parse(std::string_view text) {
    const auto t = to_lower(trim(text));
    if (t == "min") return min();
    if (t == "mean") return mean();
    if (t.starts_with("pmean:")) {
        const auto num = t.substr(6);
        double p = 0.0;
        auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), p);
        if (ec == std::errc{} && ptr == num.data() + num.size() && std::isfinite(p)) return power_mean(p);
    }
    throw ConfigError("unknown aggregator '" + std::string(text) + "' (expected min, mean or pmean:<p>)");
}

double similarity(const Embedding& a, const Embedding& b) {
    if (a.size() != b.size()) throw Error("similarity: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error("similarity: zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double aggregate(const std::vector<double>& s, const Aggregator& agg) {
    if (s.empty()) throw Error("aggregate: empty similarity list");
    switch (agg.kind) {
        case AggregatorKind::min: return 1.0 - *std::min_element(s.begin(), s.end());
        case AggregatorKind::mean: return 1.0 - std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
        case AggregatorKind::power_mean: {
            const double n = static_cast<double>(s.size());
            if (agg.p == 0.0) {
                double logs = 0.0;
                for (double x : s) logs += std::log(std::max(x, kPowerMeanEpsilon));
                return 1.0 - std::exp(logs / n);
            }
            double acc = 0.0;
            for (double x : s) acc += std::pow(std::max(x, kPowerMeanEpsilon), agg.p);
            return 1.0 - std::pow(acc / n, 1.0 / agg.p);
        }
    }
    throw Error("aggregate: unknown aggregator");
}

void to_json(json& j, const DifficultyScore& s) {
    j = json{{"qa_id", s.qa_id},
             {"hop", s.hop},
             {"aggregator", s.aggregator},
             {"chunk_ids", s.chunk_ids},
             {"similarities", s.similarities},
             {"score", s.score},
             {"bin", s.bin ? json(*s.bin) : json(nullptr)}};
}

void from_json(const json& j, DifficultyScore& s) {
    s.qa_id = j.at("qa_id").get<std::string>();
    s.hop = j.at("hop").get<std::size_t>();
    s.aggregator = j.at("aggregator").get<std::string>();
    s.chunk_ids = j.value("chunk_ids", std::vector<std::string>{});
    s.similarities = j.at("similarities").get<std::vector<double>>();
    s.score = j.at("score").get<double>();
    if (j.contains("bin") && !j.at("bin").is_null()) s.bin = j.at("bin").get<std::size_t>();
    else s.bin.reset();
}

DifficultyScore score_query(const std::string& qa_id, std::size_t hop, const Embedding& question,
                            const std::vector<std::string>& chunk_ids, const std::map<std::string, Embedding>& chunk_embeddings,
                            const Aggregator& aggregator) {
    if (chunk_ids.empty()) throw Error("score: query " + qa_id + " has no supporting chunks");
    DifficultyScore s;
    s.qa_id = qa_id;
    s.hop = hop;
    s.aggregator = aggregator.name();
    s.chunk_ids = chunk_ids;
    for (const auto& id : chunk_ids) {
        auto it = chunk_embeddings.find(id);
        if (it == chunk_embeddings.end()) throw Error("score: chunk " + id + " has no embedding");
        s.similarities.push_back(similarity(question, it->second));
    }
    s.score = aggregate(s.similarities, aggregator);
    return s;
}

std::optional<std::pair<std::size_t, std::size_t>> DifficultyMatrix::locate(const std::string& qa_id) const {
    for (std::size_t r = 0; r < cells.size(); ++r)
        for (std::size_t b = 0; b < cells[r].size(); ++b) {
            const auto& ids = cells[r][b].query_ids;
            if (std::find(ids.begin(), ids.end(), qa_id) != ids.end()) return std::pair{r, b};
        }
    return std::nullopt;
}

std::size_t DifficultyMatrix::total() const {
    std::size_t n = 0;
    for (const auto& row : cells)
        for (const auto& c : row) n += c.count;
    return n;
}

std::size_t DifficultyMatrix::row_of(std::size_t hop) const {
    auto it = std::find(hops.begin(), hops.end(), hop);
    if (it == hops.end()) throw Error("matrix: no row for hop " + std::to_string(hop));
    return static_cast<std::size_t>(it - hops.begin());
}

void to_json(json& j, const DifficultyMatrix& m) {
    json cells = json::array();
    for (std::size_t r = 0; r < m.cells.size(); ++r)
        for (std::size_t b = 0; b < m.cells[r].size(); ++b) {
            const auto& c = m.cells[r][b];
            cells.push_back({{"hop", m.hops[r]},
                             {"bin", b},
                             {"count", c.count},
                             {"mean_score", c.mean_score},
                             {"error_rate", c.error_rate ? json(*c.error_rate) : json(nullptr)},
                             {"query_ids", c.query_ids}});
        }
    j = json{{"per_hop", m.per_hop}, {"bins", m.bins}, {"hops", m.hops}, {"cells", std::move(cells)}};
}

void from_json(const json& j, DifficultyMatrix& m) {
    m.per_hop = j.at("per_hop").get<bool>();
    m.bins = j.at("bins").get<std::size_t>();
    m.hops = j.at("hops").get<std::vector<std::size_t>>();
    m.cells.assign(m.hops.size(), std::vector<MatrixCell>(m.bins));
    for (const auto& jc : j.at("cells")) {
        const auto r = m.row_of(jc.at("hop").get<std::size_t>());
        const auto b = jc.at("bin").get<std::size_t>();
        if (b >= m.bins) throw ParseError("matrix cell bin out of range");
        auto& c = m.cells[r][b];
        c.count = jc.at("count").get<std::size_t>();
        c.mean_score = jc.value("mean_score", 0.0);
        c.query_ids = jc.at("query_ids").get<std::vector<std::string>>();
        if (jc.contains("error_rate") && !jc.at("error_rate").is_null()) c.error_rate = jc.at("error_rate").get<double>();
    }
}

std::vector<std::size_t> bin_sizes(std::size_t n, std::size_t bins) {
    std::vector<std::size_t> sizes(bins, n / bins);
    for (std::size_t b = 0; b < n % bins; ++b) ++sizes[b];
    return sizes;
}

DifficultyMatrix bin_quartiles(std::vector<DifficultyScore>& scores, bool per_hop, std::size_t bins) {
    if (bins == 0) throw ConfigError("bins must be >= 1");
    DifficultyMatrix m;
    m.per_hop = per_hop;
    m.bins = bins;
    for (std::size_t h = kMinHop; h <= kMaxHop; ++h) m.hops.push_back(h);
    m.cells.assign(m.hops.size(), std::vector<MatrixCell>(bins));

    for (const auto& s : scores)
        if (s.hop < kMinHop || s.hop > kMaxHop) throw Error("bin: query " + s.qa_id + " has hop " + std::to_string(s.hop));

    auto by_score = [&](std::size_t a, std::size_t b) {
        return std::tie(scores[a].score, scores[a].qa_id) < std::tie(scores[b].score, scores[b].qa_id);
    };
    auto cut = [&](std::vector<std::size_t>& idx) {
        std::sort(idx.begin(), idx.end(), by_score);
        const auto sizes = bin_sizes(idx.size(), bins);
        std::size_t pos = 0;
        for (std::size_t b = 0; b < bins; ++b)
            for (std::size_t i = 0; i < sizes[b]; ++i) scores[idx[pos++]].bin = b;
    };

    if (per_hop) {
        for (auto hop : m.hops) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < scores.size(); ++i)
                if (scores[i].hop == hop) idx.push_back(i);
            if (idx.size() < bins)
                spdlog::warn("bin: hop {} has {} queries; some bins stay empty", hop, idx.size());
            cut(idx);
        }
    } else {
        std::vector<std::size_t> idx(scores.size());
        std::iota(idx.begin(), idx.end(), 0);
        cut(idx);
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), by_score);
    for (auto i : order) {
        auto& cell = m.cells[m.row_of(scores[i].hop)][*scores[i].bin];
        cell.query_ids.push_back(scores[i].qa_id);
        cell.mean_score += scores[i].score;
        ++cell.count;
    }
    for (auto& row : m.cells)
        for (auto& c : row)
            if (c.count) c.mean_score /= static_cast<double>(c.count);
    return m;
}

}  // namespace grade
