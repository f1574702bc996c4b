#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "grade/claims.hpp"
#include "grade/gateway.hpp"
#include "grade/gmm.hpp"
#include "grade/graph.hpp"

namespace grade {

enum class EquivalenceKind { exact, contextual };

std::string_view to_string(EquivalenceKind k);

struct EquivalenceGroup {
    std::size_t cluster_id = 0;
    std::vector<std::string> members;  // distinct by canonical key, sorted
    EquivalenceKind kind = EquivalenceKind::exact;

    auto operator<=>(const EquivalenceGroup&) const = default;
};

void to_json(json& j, const EquivalenceGroup& g);
void from_json(const json& j, EquivalenceGroup& g);

struct EquivalenceParse {
    std::vector<EquivalenceGroup> groups;
    std::size_t parse_errors = 0;
    std::size_t dropped_members = 0;
};

/// Parses `[e1|e2|...] "always"` / `... "context"` lines. The sentinel
/// "No identical entities found." yields no groups. Members that do not
/// occur (by canonical key) among `cluster_entities` are dropped; groups
/// left with fewer than two members are discarded.
EquivalenceParse parse_equivalence_output(std::string_view output, std::size_t cluster_id,
                                          const std::vector<std::string>& cluster_entities);

/// Claims and triples belonging to one cluster (soft membership).
struct ClusterContents {
    std::size_t cluster_id = 0;
    std::vector<Claim> claims;
    std::vector<Triple> triples;
};

std::vector<ClusterContents> group_by_cluster(const std::vector<ClusterAssignment>& assignments,
                                              const std::vector<Claim>& claims, const std::vector<Triple>& triples);

/// "Triple: (s, p, o)\nClaim: text" blocks for the equivalence prompt.
std::string format_equivalence_entries(const std::vector<Triple>& triples, const std::map<std::string, std::string>& claim_text);

inline constexpr std::size_t kEquivalenceBatchTriples = 40;
inline constexpr std::size_t kEquivalenceBatchOverlap = 10;

/// Default few-shot block shown under "Example output:".
const std::string& default_equivalence_examples();

/// One prompt per cluster; clusters above kEquivalenceBatchTriples triples
/// are split into overlapping windows and their groups unioned.
EquivalenceParse detect_equivalences(const ClusterContents& cluster, Gateway& gateway, const ModelParams& params);

EquivalenceParse detect_all_equivalences(const std::vector<ClusterContents>& clusters, Gateway& gateway,
                                         const ModelParams& params, std::size_t concurrency = 4);

struct AugmentReport {
    std::size_t exact_components = 0;
    std::size_t nodes_removed = 0;
    std::size_t mirrored_edges_added = 0;
    std::size_t unresolved_members = 0;
};

/// Exact groups are unioned across clusters and merged into one node named
/// by the most frequent surface form (ties: lexicographically smallest).
/// For each contextual group, every extracted edge incident to a member
/// whose claim belongs to the group's cluster is copied onto each other
/// member with provenance "mirrored". Idempotent.
KnowledgeGraph augment_graph(const KnowledgeGraph& kg, const std::vector<EquivalenceGroup>& groups,
                             const std::map<std::string, std::vector<std::size_t>>& claim_memberships,
                             AugmentReport* report = nullptr);

std::map<std::string, std::vector<std::size_t>> membership_index(const std::vector<ClusterAssignment>& assignments);

}  // namespace grade
