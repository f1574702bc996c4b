#include "grade/augment.hpp"

#include <algorithm>
#include <numeric>

#include <spdlog/spdlog.h>

namespace grade {

std::string_view to_string(EquivalenceKind k) { return k == EquivalenceKind::exact ? "exact" : "contextual"; }

void to_json(json& j, const EquivalenceGroup& g) {
    j = json{{"cluster_id", g.cluster_id}, {"members", g.members}, {"kind", to_string(g.kind)}};
}

void from_json(const json& j, EquivalenceGroup& g) {
    g.cluster_id = j.at("cluster_id").get<std::size_t>();
    g.members = j.at("members").get<std::vector<std::string>>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind != "exact" && kind != "contextual") throw ParseError("unknown equivalence kind: " + kind);
    g.kind = kind == "exact" ? EquivalenceKind::exact : EquivalenceKind::contextual;
}

namespace {

bool is_sentinel(std::string_view line) {
    auto s = to_lower(trim(line));
    while (!s.empty() && s.back() == '.') s.pop_back();
    return s == "no identical entities found";
}

std::optional<EquivalenceKind> parse_kind(std::string_view tail) {
    std::string t = to_lower(trim(tail));
    std::erase_if(t, [](char c) { return c == '"' || c == '\'' || c == '`'; });
    // Curly quotes arrive as UTF-8 sequences; keep only ASCII letters.
    std::erase_if(t, [](char c) { return !std::isalpha(static_cast<unsigned char>(c)); });
    if (t == "always") return EquivalenceKind::exact;
    if (t == "context") return EquivalenceKind::contextual;
    return std::nullopt;
}

}  // namespace

EquivalenceParse parse_equivalence_output(std::string_view output, std::size_t cluster_id,
                                          const std::vector<std::string>& cluster_entities) {
    std::map<std::string, std::string> known;  // canonical -> first surface
    for (const auto& e : cluster_entities) known.emplace(canonical_key(e), collapse_whitespace(e));

    EquivalenceParse result;
    for (const auto& raw : split_lines(output)) {
        const auto line = trim(raw);
        if (line.empty() || is_sentinel(line)) continue;
        const auto open = line.find('[');
        const auto close = line.rfind(']');
        if (open != 0 || close == std::string::npos || close < open) {
            ++result.parse_errors;
            continue;
        }
        auto kind = parse_kind(std::string_view(line).substr(close + 1));
        if (!kind) {
            ++result.parse_errors;
            continue;
        }
        EquivalenceGroup group{cluster_id, {}, *kind};
        std::set<std::string> keys;
        std::string_view inner = std::string_view(line).substr(open + 1, close - open - 1);
        std::size_t pos = 0;
        while (true) {
            auto bar = inner.find('|', pos);
            auto member = trim(inner.substr(pos, bar == std::string_view::npos ? std::string_view::npos : bar - pos));
            if (!member.empty()) {
                const auto key = canonical_key(member);
                auto it = known.find(key);
                if (it == known.end()) {
                    spdlog::warn("cluster {}: equivalence member '{}' not in cluster triples; dropped", cluster_id, member);
                    ++result.dropped_members;
                } else if (keys.insert(key).second) {
                    group.members.push_back(it->second);
                }
            }
            if (bar == std::string_view::npos) break;
            pos = bar + 1;
        }
        if (group.members.size() < 2) continue;
        std::sort(group.members.begin(), group.members.end());
        result.groups.push_back(std::move(group));
    }
    return result;
}

std::vector<ClusterContents> group_by_cluster(const std::vector<ClusterAssignment>& assignments,
                                              const std::vector<Claim>& claims, const std::vector<Triple>& triples) {
    std::map<std::string, const Claim*> claim_by_id;
    for (const auto& c : claims) claim_by_id.emplace(c.id, &c);
    std::map<std::string, std::vector<const Triple*>> triples_by_claim;
    for (const auto& t : triples) triples_by_claim[t.claim_id].push_back(&t);

    std::map<std::size_t, ClusterContents> clusters;
    for (const auto& a : assignments) {
        auto it = claim_by_id.find(a.claim_id);
        if (it == claim_by_id.end()) continue;
        for (auto c : a.memberships) {
            auto& cluster = clusters[c];
            cluster.cluster_id = c;
            cluster.claims.push_back(*it->second);
            for (const auto* t : triples_by_claim[a.claim_id]) cluster.triples.push_back(*t);
        }
    }
    std::vector<ClusterContents> out;
    for (auto& [id, c] : clusters) out.push_back(std::move(c));
    return out;
}

std::string format_equivalence_entries(const std::vector<Triple>& triples,
                                       const std::map<std::string, std::string>& claim_text) {
    std::vector<std::string> blocks;
    for (const auto& t : triples) {
        auto it = claim_text.find(t.claim_id);
        blocks.push_back("Triple: (" + t.subject + ", " + t.predicate + ", " + t.object + ")\nClaim: " +
                         (it == claim_text.end() ? std::string{} : it->second));
    }
    return join(blocks, "\n");
}

const std::string& default_equivalence_examples() {
    static const std::string kExamples =
        "[USA|United States] \"always\"\n"
        "[study co-author|microplastics researcher] \"context\"";
    return kExamples;
}

EquivalenceParse detect_equivalences(const ClusterContents& cluster, Gateway& gateway, const ModelParams& params) {
    EquivalenceParse result;
    if (cluster.claims.size() < 2 || cluster.triples.empty()) return result;

    std::map<std::string, std::string> claim_text;
    for (const auto& c : cluster.claims) claim_text.emplace(c.id, c.text);
    std::vector<std::string> entities;
    for (const auto& t : cluster.triples) {
        entities.push_back(t.subject);
        entities.push_back(t.object);
    }

    const std::size_t n = cluster.triples.size();
    const std::size_t stride = kEquivalenceBatchTriples - kEquivalenceBatchOverlap;
    std::set<EquivalenceGroup> unique_groups;
    for (std::size_t begin = 0; begin < n; begin += stride) {
        const std::size_t end = std::min(n, begin + kEquivalenceBatchTriples);
        std::vector<Triple> window(cluster.triples.begin() + static_cast<std::ptrdiff_t>(begin),
                                   cluster.triples.begin() + static_cast<std::ptrdiff_t>(end));
        auto resp = gateway.complete({TemplateName::equivalence_search,
                                      {{"examples", default_equivalence_examples()},
                                       {"entries", format_equivalence_entries(window, claim_text)}},
                                      params});
        auto parsed = parse_equivalence_output(resp.text, cluster.cluster_id, entities);
        result.parse_errors += parsed.parse_errors;
        result.dropped_members += parsed.dropped_members;
        unique_groups.insert(parsed.groups.begin(), parsed.groups.end());
        if (end == n) break;
    }
    result.groups.assign(unique_groups.begin(), unique_groups.end());
    return result;
}

EquivalenceParse detect_all_equivalences(const std::vector<ClusterContents>& clusters, Gateway& gateway,
                                         const ModelParams& params, std::size_t concurrency) {
    std::vector<EquivalenceParse> parts(clusters.size());
    parallel_for(clusters.size(), concurrency,
                 [&](std::size_t i) { parts[i] = detect_equivalences(clusters[i], gateway, params); });
    EquivalenceParse all;
    for (auto& p : parts) {
        all.groups.insert(all.groups.end(), p.groups.begin(), p.groups.end());
        all.parse_errors += p.parse_errors;
        all.dropped_members += p.dropped_members;
    }
    std::sort(all.groups.begin(), all.groups.end());
    return all;
}

std::map<std::string, std::vector<std::size_t>> membership_index(const std::vector<ClusterAssignment>& assignments) {
    std::map<std::string, std::vector<std::size_t>> out;
    for (const auto& a : assignments) out[a.claim_id] = a.memberships;
    return out;
}

namespace {

struct UnionFind {
    std::map<std::string, std::string> parent;
    std::string find(const std::string& x) {
        auto it = parent.find(x);
        if (it == parent.end()) {
            parent.emplace(x, x);
            return x;
        }
        if (it->second == x) return x;
        auto root = find(it->second);
        parent[x] = root;
        return root;
    }
    void unite(const std::string& a, const std::string& b) {
        auto ra = find(a);
        auto rb = find(b);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }
};

void merge_exact(KnowledgeGraph& g, const std::vector<EquivalenceGroup>& groups, AugmentReport& report) {
    UnionFind uf;
    for (const auto& group : groups) {
        if (group.kind != EquivalenceKind::exact) continue;
        std::optional<std::string> first;
        for (const auto& member : group.members) {
            auto node = g.resolve(member);
            if (!node) {
                spdlog::warn("augment: exact member '{}' does not resolve to a node; skipped", member);
                ++report.unresolved_members;
                continue;
            }
            uf.find(*node);
            if (first) uf.unite(*first, *node);
            else first = node;
        }
    }

    std::map<std::string, std::vector<std::string>> components;
    for (const auto& [node, _] : uf.parent) components[uf.find(node)].push_back(node);

    std::map<std::string, std::string> rename;
    for (const auto& [root, members] : components) {
        if (members.size() < 2) continue;
        ++report.exact_components;
        std::map<std::string, std::size_t> forms;
        for (const auto& m : members)
            for (const auto& [form, count] : g.nodes.at(m).surface_forms) forms[form] += count;
        std::string best;
        std::size_t best_count = 0;
        for (const auto& [form, count] : forms) {
            if (count > best_count) {  // map order makes ties resolve to the smallest form
                best = form;
                best_count = count;
            }
        }
        const auto target = canonical_key(best);
        Entity merged{target, forms};
        for (const auto& m : members) {
            g.nodes.erase(m);
            if (m != target) rename[m] = target;
        }
        g.nodes[target] = std::move(merged);
        report.nodes_removed += members.size() - 1;
    }
    if (rename.empty()) return;
    for (auto& e : g.edges) {
        if (auto it = rename.find(e.src); it != rename.end()) e.src = it->second;
        if (auto it = rename.find(e.dst); it != rename.end()) e.dst = it->second;
    }
    g.normalize();
}

void mirror_contextual(KnowledgeGraph& g, const std::vector<EquivalenceGroup>& groups,
                       const std::map<std::string, std::vector<std::size_t>>& memberships, AugmentReport& report) {
    auto in_cluster = [&](const std::string& claim_id, std::size_t cluster) {
        auto it = memberships.find(claim_id);
        return it != memberships.end() && std::find(it->second.begin(), it->second.end(), cluster) != it->second.end();
    };

    std::set<std::tuple<std::string, std::string, std::string, std::string>> extracted_keys;
    std::vector<Edge> originals;
    for (const auto& e : g.edges) {
        if (e.provenance != Provenance::extracted) continue;
        originals.push_back(e);
        extracted_keys.insert({e.src, e.dst, e.predicate, e.claim_id});
    }

    std::vector<EquivalenceGroup> sorted = groups;
    std::sort(sorted.begin(), sorted.end());
    std::vector<Edge> added;
    for (const auto& group : sorted) {
        if (group.kind != EquivalenceKind::contextual) continue;
        std::vector<std::pair<std::string, std::string>> nodes;  // node id, member surface
        for (const auto& member : group.members) {
            auto node = g.resolve(member);
            if (!node) {
                spdlog::warn("augment: contextual member '{}' does not resolve to a node; skipped", member);
                ++report.unresolved_members;
                continue;
            }
            if (std::none_of(nodes.begin(), nodes.end(), [&](const auto& n) { return n.first == *node; }))
                nodes.emplace_back(*node, member);
        }
        for (const auto& [a, a_surface] : nodes) {
            for (const auto& [b, b_surface] : nodes) {
                if (a == b) continue;
                for (const auto& e : originals) {
                    if (!in_cluster(e.claim_id, group.cluster_id)) continue;
                    if (e.src == a && e.dst != b) {
                        added.push_back({b, e.dst, e.predicate, e.claim_id, Provenance::mirrored, b_surface, e.dst_surface});
                    }
                    if (e.dst == a && e.src != b) {
                        added.push_back({e.src, b, e.predicate, e.claim_id, Provenance::mirrored, e.src_surface, b_surface});
                    }
                }
            }
        }
    }
    const auto before = g.edges.size();
    for (auto& e : added) {
        if (extracted_keys.contains({e.src, e.dst, e.predicate, e.claim_id})) continue;
        g.edges.push_back(std::move(e));
    }
    g.normalize();
    report.mirrored_edges_added += g.edges.size() - before;
}

}  // namespace

KnowledgeGraph augment_graph(const KnowledgeGraph& kg, const std::vector<EquivalenceGroup>& groups,
                             const std::map<std::string, std::vector<std::size_t>>& claim_memberships,
                             AugmentReport* report) {
    AugmentReport local;
    KnowledgeGraph g = kg;
    merge_exact(g, groups, local);
    mirror_contextual(g, groups, claim_memberships, local);
    if (report) *report = local;
    return g;
}

}  // namespace grade
