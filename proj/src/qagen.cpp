#include "grade/qagen.hpp"

#include <algorithm>
#include <queue>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

namespace grade {

std::vector<std::string> ReasoningPath::nodes() const {
    std::vector<std::string> out;
    if (edges.empty()) return out;
    out.push_back(edges.front().src);
    for (const auto& e : edges) out.push_back(e.dst);
    return out;
}

std::string ReasoningPath::key() const {
    std::string k;
    for (const auto& e : edges) {
        k += e.src;
        k += '\x1f';
        k += e.predicate;
        k += '\x1f';
        k += e.claim_id;
        k += '\x1f';
        k += to_string(e.provenance);
        k += '\x1e';
    }
    if (!edges.empty()) k += edges.back().dst;
    return k;
}

std::string ReasoningPath::id() const { return "p-" + short_hash(key()); }

void to_json(json& j, const ReasoningPath& p) {
    j = json{{"id", p.id()}, {"hop", p.hop()}, {"nodes", p.nodes()}, {"edges", p.edges}};
}

void from_json(const json& j, ReasoningPath& p) {
    p.edges = j.at("edges").get<std::vector<Edge>>();
    if (p.edges.empty()) throw ParseError("reasoning path without edges");
    for (std::size_t i = 1; i < p.edges.size(); ++i)
        if (p.edges[i - 1].dst != p.edges[i].src) throw ParseError("reasoning path edges do not chain");
}

// ── Enumeration ─────────────────────────────────────────────

namespace {

struct Adjacency {
    std::vector<std::string> names;
    std::vector<std::vector<std::size_t>> out;  // node -> edge indices
    std::vector<std::size_t> src, dst;
};

Adjacency build_adjacency(const KnowledgeGraph& kg) {
    Adjacency adj;
    std::map<std::string, std::size_t> index;
    for (const auto& [id, _] : kg.nodes) {
        index.emplace(id, adj.names.size());
        adj.names.push_back(id);
    }
    adj.out.resize(adj.names.size());
    adj.src.resize(kg.edges.size());
    adj.dst.resize(kg.edges.size());
    for (std::size_t e = 0; e < kg.edges.size(); ++e) {
        adj.src[e] = index.at(kg.edges[e].src);
        adj.dst[e] = index.at(kg.edges[e].dst);
        if (adj.src[e] != adj.dst[e]) adj.out[adj.src[e]].push_back(e);
    }
    return adj;
}

std::vector<ReasoningPath> paths_from(const KnowledgeGraph& kg, const Adjacency& adj, std::size_t source,
                                      const PathOptions& options) {
    const std::size_t n = adj.names.size();
    constexpr auto kUnreached = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> dist(n, kUnreached);
    dist[source] = 0;
    std::queue<std::size_t> q;
    q.push(source);
    while (!q.empty()) {
        const auto u = q.front();
        q.pop();
        if (dist[u] >= options.max_hop) continue;
        for (auto e : adj.out[u]) {
            const auto v = adj.dst[e];
            if (dist[v] == kUnreached) {
                dist[v] = dist[u] + 1;
                q.push(v);
            }
        }
    }

    // Every step strictly increases the BFS distance, so paths are simple
    // and each has length equal to its endpoint's distance.
    std::vector<ReasoningPath> out;
    std::vector<std::size_t> emitted(n, 0);
    std::vector<bool> capped(n, false);
    std::vector<std::size_t> stack;
    auto dfs = [&](auto&& self, std::size_t u) -> void {
        const std::size_t depth = stack.size();
        if (depth >= options.min_hop && depth <= options.max_hop) {
            if (emitted[u] < options.per_pair_cap) {
                ReasoningPath p;
                for (auto e : stack) p.edges.push_back(kg.edges[e]);
                out.push_back(std::move(p));
                ++emitted[u];
            } else if (!capped[u]) {
                capped[u] = true;
                spdlog::debug("paths: pair ({}, {}) truncated at {} paths", adj.names[source], adj.names[u],
                             options.per_pair_cap);
            }
        }
        if (depth >= options.max_hop) return;
        for (auto e : adj.out[u]) {
            const auto v = adj.dst[e];
            if (dist[v] != depth + 1) continue;
            stack.push_back(e);
            self(self, v);
            stack.pop_back();
        }
    };
    dfs(dfs, source);
    return out;
}

}  // namespace

std::vector<ReasoningPath> enumerate_paths(const KnowledgeGraph& kg, const PathOptions& options) {
    if (options.min_hop < 1 || options.min_hop > options.max_hop) throw ConfigError("paths: invalid hop range");
    if (kg.empty()) return {};
    const auto adj = build_adjacency(kg);
    std::vector<std::vector<ReasoningPath>> per_source(adj.names.size());
    parallel_for(adj.names.size(), options.concurrency,
                 [&](std::size_t s) { per_source[s] = paths_from(kg, adj, s, options); });
    std::vector<std::pair<std::string, ReasoningPath>> keyed;
    for (auto& part : per_source)
        for (auto& p : part) {
            auto k = p.key();
            keyed.emplace_back(std::move(k), std::move(p));
        }
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<ReasoningPath> out;
    out.reserve(keyed.size());
    for (auto& [_, p] : keyed) out.push_back(std::move(p));
    return out;
}

// ── Dedup and sampling ──────────────────────────────────────

namespace {

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased and independent of the
    // standard library's distribution implementation.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do x = rng();
    while (x >= limit);
    return x % n;
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[bounded(rng, i)]);
}

}  // namespace

std::vector<ReasoningPath> dedupe_and_sample(std::vector<ReasoningPath> paths, std::size_t per_hop, std::uint64_t seed) {
    std::vector<std::pair<std::string, ReasoningPath>> keyed;
    keyed.reserve(paths.size());
    for (auto& p : paths) {
        auto k = p.key();
        keyed.emplace_back(std::move(k), std::move(p));
    }
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    std::mt19937_64 rng(seed);
    seeded_shuffle(keyed, rng);
    std::set<std::tuple<std::string, std::string, std::size_t>> seen;
    std::map<std::size_t, std::vector<std::pair<std::string, ReasoningPath>>> by_hop;
    for (auto& kp : keyed) {
        const auto& p = kp.second;
        if (!seen.insert({p.start(), p.end(), p.hop()}).second) continue;
        by_hop[p.hop()].push_back(std::move(kp));
    }

    std::vector<std::pair<std::string, ReasoningPath>> kept;
    for (auto& [hop, group] : by_hop) {
        std::mt19937_64 hop_rng(hash_seed(std::to_string(seed) + "\x1fhop\x1f" + std::to_string(hop)));
        seeded_shuffle(group, hop_rng);
        if (group.size() > per_hop) group.resize(per_hop);
        for (auto& kp : group) kept.push_back(std::move(kp));
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<ReasoningPath> out;
    out.reserve(kept.size());
    for (auto& [_, p] : kept) out.push_back(std::move(p));
    return out;
}

// ── Supporting chunks ───────────────────────────────────────

SupportIndex::SupportIndex(const std::vector<Claim>& claims, const std::vector<Sentence>& sentences,
                           const std::vector<Chunk>& chunks) {
    std::map<std::string, const Sentence*> sentence_by_id;
    for (const auto& s : sentences) sentence_by_id.emplace(s.id, &s);
    std::map<std::string, std::vector<const Chunk*>> chunks_by_article;
    for (const auto& c : chunks) {
        chunks_.emplace(c.id, c);
        chunks_by_article[c.article_id].push_back(&c);
    }
    for (const auto& claim : claims) {
        claims_.emplace(claim.id, claim);
        auto sit = sentence_by_id.find(claim.sentence_id);
        if (sit == sentence_by_id.end()) continue;
        const auto& s = *sit->second;
        std::vector<std::string> containing, overlapping;
        for (const auto* c : chunks_by_article[s.article_id]) {
            if (c->start <= s.token_begin && s.token_end <= c->end) containing.push_back(c->id);
            else if (c->start < s.token_end && s.token_begin < c->end) overlapping.push_back(c->id);
        }
        auto& support = containing.empty() ? overlapping : containing;
        std::sort(support.begin(), support.end());
        support_.emplace(claim.id, std::move(support));
    }
}

std::vector<std::string> SupportIndex::chunks_for_claim(const std::string& claim_id) const {
    auto it = support_.find(claim_id);
    return it == support_.end() ? std::vector<std::string>{} : it->second;
}

const Claim* SupportIndex::claim(const std::string& claim_id) const {
    auto it = claims_.find(claim_id);
    return it == claims_.end() ? nullptr : &it->second;
}

const Chunk* SupportIndex::chunk(const std::string& chunk_id) const {
    auto it = chunks_.find(chunk_id);
    return it == chunks_.end() ? nullptr : &it->second;
}

// ── QA pairs ────────────────────────────────────────────────

void to_json(json& j, const QAPair& q) {
    j = json{{"id", q.id},
             {"question", q.question},
             {"answer", q.answer},
             {"hop", q.hop},
             {"path_id", q.path_id},
             {"claim_ids", q.claim_ids},
             {"chunk_ids", q.chunk_ids},
             {"uses_mirrored", q.uses_mirrored},
             {"uses_merged", q.uses_merged},
             {"validated", q.validated}};
}

void from_json(const json& j, QAPair& q) {
    q.id = j.at("id").get<std::string>();
    q.question = j.at("question").get<std::string>();
    q.answer = j.at("answer").get<std::string>();
    q.hop = j.at("hop").get<std::size_t>();
    q.path_id = j.value("path_id", std::string{});
    q.claim_ids = j.at("claim_ids").get<std::vector<std::string>>();
    q.chunk_ids = j.at("chunk_ids").get<std::vector<std::string>>();
    q.uses_mirrored = j.value("uses_mirrored", false);
    q.uses_merged = j.value("uses_merged", false);
    q.validated = j.value("validated", false);
}

void to_json(json& j, const QAGenResult& r) {
    j = json{{"path_id", r.path_id}, {"reason", r.reject_reason}, {"raw", r.raw}};
}

bool path_uses_mirrored(const ReasoningPath& path) {
    return std::any_of(path.edges.begin(), path.edges.end(),
                       [](const Edge& e) { return e.provenance == Provenance::mirrored; });
}

bool path_uses_merged(const ReasoningPath& path) {
    for (std::size_t i = 1; i < path.edges.size(); ++i)
        if (canonical_key(path.edges[i - 1].dst_surface) != canonical_key(path.edges[i].src_surface)) return true;
    return false;
}

std::string format_path_triples(const ReasoningPath& path) {
    std::vector<std::string> parts;
    for (const auto& e : path.edges) parts.push_back("(" + e.src_surface + ", " + e.predicate + ", " + e.dst_surface + ")");
    return join(parts, "; ");
}

const std::string& default_qa_examples() {
    static const std::string kExamples =
        "Question: What condition did actor Matthew Perry experience due to elevated ketamine levels in his "
        "blood? | Answer: Respiratory depression";
    return kExamples;
}

std::optional<QAParse> parse_qa_output(std::string_view output) {
    for (const auto& raw : split_lines(output)) {
        auto line = trim(raw);
        if (line.empty()) continue;
        const auto bar = line.find('|');
        if (bar == std::string::npos) return std::nullopt;
        auto left = trim(std::string_view(line).substr(0, bar));
        auto right = trim(std::string_view(line).substr(bar + 1));
        auto strip = [](std::string s, std::string_view label) -> std::optional<std::string> {
            if (to_lower(s.substr(0, label.size())) != label) return std::nullopt;
            return trim(std::string_view(s).substr(label.size()));
        };
        auto q = strip(left, "question:");
        auto a = strip(right, "answer:");
        if (!q || !a) return std::nullopt;
        return QAParse{*q, *a};
    }
    return std::nullopt;
}

bool answer_matches_node(std::string_view answer, const Entity& node) {
    const auto folded = fold_punctuation(answer);
    if (folded == fold_punctuation(node.canonical)) return true;
    return std::any_of(node.surface_forms.begin(), node.surface_forms.end(),
                       [&](const auto& f) { return fold_punctuation(f.first) == folded; });
}

QAGenResult generate_qa(const ReasoningPath& path, const KnowledgeGraph& kg, const SupportIndex& support,
                        Gateway& gateway, const ModelParams& params) {
    QAGenResult result;
    result.path_id = path.id();

    QAPair qa;
    qa.hop = path.hop();
    qa.path_id = result.path_id;
    qa.id = "qa-" + short_hash(path.key());
    qa.uses_mirrored = path_uses_mirrored(path);
    qa.uses_merged = path_uses_merged(path);
    std::set<std::string> chunk_set;
    std::vector<std::string> claim_texts;
    for (const auto& e : path.edges) {
        const auto chunks = support.chunks_for_claim(e.claim_id);
        if (chunks.empty()) {
            result.reject_reason = "no_supporting_chunk";
            result.raw = e.claim_id;
            return result;
        }
        chunk_set.insert(chunks.begin(), chunks.end());
        if (std::find(qa.claim_ids.begin(), qa.claim_ids.end(), e.claim_id) == qa.claim_ids.end()) {
            qa.claim_ids.push_back(e.claim_id);
            if (const auto* c = support.claim(e.claim_id)) claim_texts.push_back(c->text);
        }
    }
    qa.chunk_ids.assign(chunk_set.begin(), chunk_set.end());
    std::vector<std::string> chunk_texts;
    for (const auto& id : qa.chunk_ids)
        if (const auto* c = support.chunk(id)) chunk_texts.push_back(c->text);

    auto resp = gateway.complete({TemplateName::qa_generation,
                                  {{"examples", default_qa_examples()},
                                   {"triples", format_path_triples(path)},
                                   {"claims", join(claim_texts, " ")},
                                   {"chunks", join(chunk_texts, "\n\n")}},
                                  params});
    result.raw = resp.text;
    auto parsed = parse_qa_output(resp.text);
    if (!parsed || parsed->question.empty()) {
        result.reject_reason = "qa_parse";
        return result;
    }
    if (parsed->answer.empty()) {
        result.reject_reason = "empty_answer";
        return result;
    }
    if (split_whitespace(parsed->answer).size() > kMaxAnswerTokens) {
        result.reject_reason = "answer_too_long";
        return result;
    }
    auto terminal = kg.nodes.find(path.end());
    if (terminal == kg.nodes.end() || !answer_matches_node(parsed->answer, terminal->second)) {
        result.reject_reason = "answer_not_terminal";
        return result;
    }
    qa.question = parsed->question;
    qa.answer = parsed->answer;
    result.qa = std::move(qa);
    return result;
}

std::vector<QAGenResult> generate_all_qa(const std::vector<ReasoningPath>& paths, const KnowledgeGraph& kg,
                                         const SupportIndex& support, Gateway& gateway, const ModelParams& params,
                                         std::size_t concurrency) {
    std::vector<QAGenResult> out(paths.size());
    parallel_for(paths.size(), concurrency,
                 [&](std::size_t i) { out[i] = generate_qa(paths[i], kg, support, gateway, params); });
    return out;
}

std::optional<bool> parse_true_false(std::string_view raw) {
    const auto label = normalize_label(raw);
    if (label == "true") return true;
    if (label == "false") return false;
    return std::nullopt;
}

QAPair validate_qa(QAPair qa, Gateway& gateway, const ModelParams& params, bool* parse_miss) {
    auto resp = gateway.complete({TemplateName::qa_validation, {{"question", qa.question}, {"answer", qa.answer}}, params});
    auto verdict = parse_true_false(resp.text);
    if (!verdict) spdlog::warn("validate: unparseable verdict for {}: '{}'", qa.id, resp.text);
    if (parse_miss) *parse_miss = !verdict.has_value();
    qa.validated = verdict.value_or(false);
    return qa;
}

std::vector<QAPair> validate_all(std::vector<QAPair> pairs, Gateway& gateway, const ModelParams& params,
                                 std::size_t concurrency, ValidationStats* stats) {
    std::vector<char> misses(pairs.size(), 0);
    parallel_for(pairs.size(), concurrency, [&](std::size_t i) {
        bool miss = false;
        pairs[i] = validate_qa(std::move(pairs[i]), gateway, params, &miss);
        misses[i] = miss;
    });
    if (stats) {
        *stats = {};
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            pairs[i].validated ? ++stats->accepted : ++stats->rejected;
            stats->parse_misses += misses[i] ? 1 : 0;
        }
    }
    return pairs;
}

}  // namespace grade
