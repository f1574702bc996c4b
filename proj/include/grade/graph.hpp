#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "grade/claims.hpp"
#include "grade/gateway.hpp"

namespace grade {

struct Triple {
    std::string subject;
    std::string predicate;
    std::string object;
    std::string sentence_id;
    std::string claim_id;

    auto operator<=>(const Triple&) const = default;
};

void to_json(json& j, const Triple& t);
void from_json(const json& j, Triple& t);

/// One "(source|relationship|target|index)" line before index resolution.
struct TripleLine {
    std::string subject;
    std::string predicate;
    std::string object;
    std::size_t index = 0;
};

/// Parses a single output line. Lines with a missing/empty field, an extra
/// '|' (entity containing the separator) or a non-numeric index fail.
std::optional<TripleLine> parse_triple_line(std::string_view line);
std::string format_triple_line(const TripleLine& line);

struct TripleParseStats {
    std::size_t parsed = 0;
    std::size_t parse_errors = 0;
    std::size_t out_of_range = 0;
    std::size_t duplicates = 0;  // exact and reversed
};

struct TripleExtraction {
    std::vector<Triple> triples;
    TripleParseStats stats;
};

inline constexpr std::size_t kTripleBatchSize = 10;

/// "Sentence 1: ...\nSentence 2: ..." for the triple extraction prompt.
std::string format_sentence_list(const std::vector<Claim>& batch);

/// Maps the model's 1-based sentence indices back to the batch's claims.
TripleExtraction parse_triple_output(std::string_view output, const std::vector<Claim>& batch);

/// One prompt for up to kTripleBatchSize claims.
TripleExtraction extract_triples(const std::vector<Claim>& batch, Gateway& gateway, const ModelParams& params);

/// Splits verified claims into batches of ten and extracts concurrently;
/// triples come back in claim order.
TripleExtraction extract_all_triples(const std::vector<Claim>& claims, Gateway& gateway, const ModelParams& params,
                                     std::size_t concurrency = 4);

// ── Knowledge graph ─────────────────────────────────────────

enum class Provenance { extracted, mirrored };

std::string_view to_string(Provenance p);

struct Entity {
    std::string canonical;                               // node id
    std::map<std::string, std::size_t> surface_forms;    // surface -> occurrences in triples
};

struct Edge {
    std::string src;
    std::string dst;
    std::string predicate;
    std::string claim_id;
    Provenance provenance = Provenance::extracted;
    // Surface strings of the endpoints in the originating triple.
    std::string src_surface;
    std::string dst_surface;

    auto key() const { return std::tie(src, dst, predicate, claim_id, provenance); }
};

void to_json(json& j, const Edge& e);
void from_json(const json& j, Edge& e);

struct KnowledgeGraph {
    std::map<std::string, Entity> nodes;
    std::vector<Edge> edges;  // sorted by key(), no duplicate keys

    bool empty() const { return nodes.empty(); }

    /// Node id for a surface string: exact canonical match, else any node
    /// listing it among its surface forms.
    std::optional<std::string> resolve(std::string_view surface) const;

    /// Re-sorts edges, collapsing duplicate keys (first in sort order wins).
    void normalize();

    std::size_t degree(const std::string& node) const;
};

void to_json(json& j, const KnowledgeGraph& g);
void from_json(const json& j, KnowledgeGraph& g);

/// Exact-match assembly: one node per canonical key, one extracted edge per
/// distinct (src, dst, predicate, claim_id). Independent of input order.
KnowledgeGraph build_graph(const std::vector<Triple>& triples);

}  // namespace grade
