#include "grade/graph.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include <spdlog/spdlog.h>

namespace grade {

void to_json(json& j, const Triple& t) {
    j = json{{"subject", t.subject},
             {"predicate", t.predicate},
             {"object", t.object},
             {"sentence_id", t.sentence_id},
             {"claim_id", t.claim_id}};
}

void from_json(const json& j, Triple& t) {
    t.subject = j.at("subject").get<std::string>();
    t.predicate = j.at("predicate").get<std::string>();
    t.object = j.at("object").get<std::string>();
    t.sentence_id = j.value("sentence_id", std::string{});
    t.claim_id = j.value("claim_id", std::string{});
}

std::optional<TripleLine> parse_triple_line(std::string_view raw) {
    const auto line = trim(raw);
    if (line.size() < 2 || line.front() != '(' || line.back() != ')') return std::nullopt;
    std::vector<std::string> fields;
    std::string_view inner(line.data() + 1, line.size() - 2);
    std::size_t pos = 0;
    while (true) {
        auto bar = inner.find('|', pos);
        fields.push_back(trim(inner.substr(pos, bar == std::string_view::npos ? std::string_view::npos : bar - pos)));
        if (bar == std::string_view::npos) break;
        pos = bar + 1;
    }
    if (fields.size() != 4) return std::nullopt;
    for (const auto& f : fields)
        if (f.empty()) return std::nullopt;
    TripleLine out{fields[0], fields[1], fields[2], 0};
    const auto& idx = fields[3];
    auto [ptr, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), out.index);
    if (ec != std::errc{} || ptr != idx.data() + idx.size()) return std::nullopt;
    return out;
}

std::string format_triple_line(const TripleLine& line) {
    return "(" + line.subject + "|" + line.predicate + "|" + line.object + "|" + std::to_string(line.index) + ")";
}

std::string format_sentence_list(const std::vector<Claim>& batch) {
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < batch.size(); ++i)
        lines.push_back("Sentence " + std::to_string(i + 1) + ": " + collapse_whitespace(batch[i].text));
    return join(lines, "\n");
}

TripleExtraction parse_triple_output(std::string_view output, const std::vector<Claim>& batch) {
    TripleExtraction result;
    std::set<std::tuple<std::size_t, std::string, std::string, std::string>> seen;
    for (const auto& raw : split_lines(output)) {
        if (trim(raw).empty()) continue;
        auto parsed = parse_triple_line(raw);
        if (!parsed) {
            ++result.stats.parse_errors;
            spdlog::debug("unparseable triple line: '{}'", raw);
            continue;
        }
        if (parsed->index < 1 || parsed->index > batch.size()) {
            ++result.stats.out_of_range;
            continue;
        }
        const auto s = canonical_key(parsed->subject);
        const auto p = canonical_key(parsed->predicate);
        const auto o = canonical_key(parsed->object);
        if (seen.contains({parsed->index, s, p, o}) || seen.contains({parsed->index, o, p, s})) {
            ++result.stats.duplicates;
            continue;
        }
        seen.insert({parsed->index, s, p, o});
        const auto& claim = batch[parsed->index - 1];
        result.triples.push_back({parsed->subject, parsed->predicate, parsed->object, claim.sentence_id, claim.id});
        ++result.stats.parsed;
    }
    return result;
}

TripleExtraction extract_triples(const std::vector<Claim>& batch, Gateway& gateway, const ModelParams& params) {
    if (batch.size() > kTripleBatchSize) {
        throw Error("extract_triples: batch of " + std::to_string(batch.size()) + " exceeds " +
                    std::to_string(kTripleBatchSize));
    }
    if (batch.empty()) return {};
    auto resp = gateway.complete({TemplateName::triple_extraction, {{"sentences", format_sentence_list(batch)}}, params});
    return parse_triple_output(resp.text, batch);
}

TripleExtraction extract_all_triples(const std::vector<Claim>& claims, Gateway& gateway, const ModelParams& params,
                                     std::size_t concurrency) {
    std::vector<Claim> verified;
    std::copy_if(claims.begin(), claims.end(), std::back_inserter(verified), [](const Claim& c) { return c.verified; });
    const std::size_t batches = (verified.size() + kTripleBatchSize - 1) / kTripleBatchSize;
    std::vector<TripleExtraction> parts(batches);
    parallel_for(batches, concurrency, [&](std::size_t b) {
        const auto begin = verified.begin() + static_cast<std::ptrdiff_t>(b * kTripleBatchSize);
        const auto end = verified.begin() + static_cast<std::ptrdiff_t>(std::min(verified.size(), (b + 1) * kTripleBatchSize));
        parts[b] = extract_triples(std::vector<Claim>(begin, end), gateway, params);
    });
    TripleExtraction all;
    for (auto& part : parts) {
        all.triples.insert(all.triples.end(), part.triples.begin(), part.triples.end());
        all.stats.parsed += part.stats.parsed;
        all.stats.parse_errors += part.stats.parse_errors;
        all.stats.out_of_range += part.stats.out_of_range;
        all.stats.duplicates += part.stats.duplicates;
    }
    return all;
}

// ── Knowledge graph ─────────────────────────────────────────

std::string_view to_string(Provenance p) { return p == Provenance::extracted ? "extracted" : "mirrored"; }

std::optional<std::string> KnowledgeGraph::resolve(std::string_view surface) const {
    const auto key = canonical_key(surface);
    if (nodes.contains(key)) return key;
    for (const auto& [id, entity] : nodes) {
        for (const auto& [form, count] : entity.surface_forms)
            if (canonical_key(form) == key) return id;
    }
    return std::nullopt;
}

void KnowledgeGraph::normalize() {
    std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        if (a.key() != b.key()) return a.key() < b.key();
        return std::tie(a.src_surface, a.dst_surface) < std::tie(b.src_surface, b.dst_surface);
    });
    edges.erase(std::unique(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.key() == b.key(); }),
                edges.end());
}

std::size_t KnowledgeGraph::degree(const std::string& node) const {
    return static_cast<std::size_t>(
        std::count_if(edges.begin(), edges.end(), [&](const Edge& e) { return e.src == node || e.dst == node; }));
}

void to_json(json& j, const Edge& e) {
    j = json{{"src", e.src},
             {"dst", e.dst},
             {"predicate", e.predicate},
             {"claim_id", e.claim_id},
             {"provenance", to_string(e.provenance)},
             {"src_surface", e.src_surface},
             {"dst_surface", e.dst_surface}};
}

void from_json(const json& j, Edge& e) {
    e.src = j.at("src").get<std::string>();
    e.dst = j.at("dst").get<std::string>();
    e.predicate = j.at("predicate").get<std::string>();
    e.claim_id = j.at("claim_id").get<std::string>();
    const auto prov = j.at("provenance").get<std::string>();
    if (prov != "extracted" && prov != "mirrored") throw ParseError("unknown edge provenance: " + prov);
    e.provenance = prov == "extracted" ? Provenance::extracted : Provenance::mirrored;
    e.src_surface = j.value("src_surface", e.src);
    e.dst_surface = j.value("dst_surface", e.dst);
}

void to_json(json& j, const KnowledgeGraph& g) {
    json nodes = json::array();
    for (const auto& [id, e] : g.nodes) nodes.push_back({{"id", id}, {"surface_forms", e.surface_forms}});
    j = json{{"nodes", std::move(nodes)}, {"edges", g.edges}};
}

void from_json(const json& j, KnowledgeGraph& g) {
    g = {};
    for (const auto& n : j.at("nodes")) {
        Entity e;
        e.canonical = n.at("id").get<std::string>();
        e.surface_forms = n.at("surface_forms").get<std::map<std::string, std::size_t>>();
        g.nodes.emplace(e.canonical, std::move(e));
    }
    for (const auto& je : j.at("edges")) {
        auto e = je.get<Edge>();
        if (!g.nodes.contains(e.src) || !g.nodes.contains(e.dst)) throw ParseError("edge endpoint missing from nodes");
        g.edges.push_back(std::move(e));
    }
    g.normalize();
}

KnowledgeGraph build_graph(const std::vector<Triple>& input) {
    std::vector<Triple> triples = input;
    std::sort(triples.begin(), triples.end(), [](const Triple& a, const Triple& b) {
        return std::tie(a.claim_id, a.subject, a.predicate, a.object, a.sentence_id) <
               std::tie(b.claim_id, b.subject, b.predicate, b.object, b.sentence_id);
    });
    KnowledgeGraph g;
    for (const auto& t : triples) {
        if (trim(t.subject).empty() || trim(t.predicate).empty() || trim(t.object).empty()) continue;
        const auto s = canonical_key(t.subject);
        const auto o = canonical_key(t.object);
        auto& sn = g.nodes[s];
        sn.canonical = s;
        ++sn.surface_forms[collapse_whitespace(t.subject)];
        auto& on = g.nodes[o];
        on.canonical = o;
        ++on.surface_forms[collapse_whitespace(t.object)];
        g.edges.push_back({s, o, collapse_whitespace(t.predicate), t.claim_id, Provenance::extracted,
                           collapse_whitespace(t.subject), collapse_whitespace(t.object)});
    }
    g.normalize();
    return g;
}

}  // namespace grade
