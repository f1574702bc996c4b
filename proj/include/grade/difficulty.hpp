#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "grade/gateway.hpp"
#include "grade/util.hpp"

namespace grade {

enum class AggregatorKind { min, mean, power_mean };

struct Aggregator {
    AggregatorKind kind = AggregatorKind::min;
    double p = -2.0;  // power_mean only

    /// "min", "mean", "pmean:<p>".
    std::string name() const;
    static Aggregator parse(std::string_view text);
    static Aggregator min() { return {AggregatorKind::min, 0.0}; }
    static Aggregator mean() { return {AggregatorKind::mean, 0.0}; }
    static Aggregator power_mean(double p) { return {AggregatorKind::power_mean, p}; }
};

/// Power-mean inputs are clamped to at least this value.
inline constexpr double kPowerMeanEpsilon = 1e-4;

/// Cosine similarity. Throws on a zero vector or mismatched dimensions.
double similarity(const Embedding& a, const Embedding& b);

/// 1 - aggregate(similarities). Throws on an empty list.
double aggregate(const std::vector<double>& similarities, const Aggregator& aggregator);

struct DifficultyScore {
    std::string qa_id;
    std::size_t hop = 0;
    std::string aggregator;
    std::vector<std::string> chunk_ids;
    std::vector<double> similarities;  // aligned with chunk_ids
    double score = 0.0;
    std::optional<std::size_t> bin;
};

void to_json(json& j, const DifficultyScore& s);
void from_json(const json& j, DifficultyScore& s);

/// Scores one query against its supporting chunks' embeddings.
DifficultyScore score_query(const std::string& qa_id, std::size_t hop, const Embedding& question,
                            const std::vector<std::string>& chunk_ids, const std::map<std::string, Embedding>& chunk_embeddings,
                            const Aggregator& aggregator);

inline constexpr std::size_t kMinHop = 2;
inline constexpr std::size_t kMaxHop = 5;

struct MatrixCell {
    std::vector<std::string> query_ids;
    std::size_t count = 0;
    double mean_score = 0.0;              // mean D_r of the cell's queries
    std::optional<double> error_rate;     // null until evaluated
};

struct DifficultyMatrix {
    bool per_hop = true;
    std::size_t bins = 4;
    std::vector<std::size_t> hops;             // row labels, 2..5
    std::vector<std::vector<MatrixCell>> cells;  // [row][bin]

    /// (row, bin) holding a query.
    std::optional<std::pair<std::size_t, std::size_t>> locate(const std::string& qa_id) const;
    std::size_t total() const;
    std::size_t row_of(std::size_t hop) const;
};

void to_json(json& j, const DifficultyMatrix& m);
void from_json(const json& j, DifficultyMatrix& m);

/// Sorts by (score, qa_id) and cuts each hop row (or the whole set when
/// per_hop is false) into `bins` contiguous groups whose sizes differ by at
/// most one, larger groups first. Writes each score's bin back.
DifficultyMatrix bin_quartiles(std::vector<DifficultyScore>& scores, bool per_hop = true, std::size_t bins = 4);

/// Balanced cut sizes: first n % bins groups get one extra.
std::vector<std::size_t> bin_sizes(std::size_t n, std::size_t bins);

}  // namespace grade
