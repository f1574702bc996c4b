#include <doctest.h>

#include <cmath>
#include <random>

#include "grade/difficulty.hpp"
#include "grade/errors.hpp"

using namespace grade;

namespace {

std::vector<DifficultyScore> row(std::size_t hop, std::size_t n, const std::string& prefix = "q") {
    std::vector<DifficultyScore> out;
    for (std::size_t i = 0; i < n; ++i) {
        DifficultyScore s;
        s.qa_id = prefix + std::to_string(hop) + "-" + std::to_string(100 + i);
        s.hop = hop;
        s.score = static_cast<double>((i * 7) % n) / static_cast<double>(n);
        out.push_back(s);
    }
    return out;
}

std::vector<std::size_t> counts(const DifficultyMatrix& m, std::size_t r) {
    std::vector<std::size_t> out;
    for (const auto& c : m.cells[r]) out.push_back(c.count);
    return out;
}

}  // namespace

TEST_CASE("similarity") {
    CHECK(similarity({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
    CHECK(similarity({1, 0}, {0, 5}) == doctest::Approx(0.0));
    CHECK(similarity({1, -2}, {-1, 2}) == doctest::Approx(-1.0));
    CHECK_THROWS(similarity({0, 0}, {1, 0}));
    CHECK_THROWS(similarity({1, 0}, {1, 0, 0}));
}

TEST_CASE("aggregation") {
    for (auto agg : {Aggregator::min(), Aggregator::mean(), Aggregator::power_mean(-2.0)})
        CHECK(aggregate({1.0, 1.0}, agg) == doctest::Approx(0.0));
    CHECK(aggregate({0.6, 0.8, 0.9}, Aggregator::min()) == doctest::Approx(0.4));
    CHECK(aggregate({0.5, 1.0}, Aggregator::power_mean(-2.0)) == doctest::Approx(1.0 - std::pow(2.5, -0.5)));
    CHECK(aggregate({0.5, 1.0}, Aggregator::mean()) == doctest::Approx(0.25));
    CHECK(aggregate({0.25, 1.0}, Aggregator::power_mean(0.0)) == doctest::Approx(0.5));
    CHECK_THROWS(aggregate({}, Aggregator::min()));

    // Non-positive similarities are clamped before the power mean.
    const double clamped = aggregate({-0.3, 1.0}, Aggregator::power_mean(-2.0));
    CHECK(clamped == doctest::Approx(aggregate({kPowerMeanEpsilon, 1.0}, Aggregator::power_mean(-2.0))));
    CHECK(std::isfinite(clamped));
}

TEST_CASE("aggregator names") {
    CHECK(Aggregator::parse("min").kind == AggregatorKind::min);
    CHECK(Aggregator::parse("MEAN").kind == AggregatorKind::mean);
    auto p = Aggregator::parse("pmean:-2");
    CHECK(p.kind == AggregatorKind::power_mean);
    CHECK(p.p == -2.0);
    CHECK(p.name() == "pmean:-2.0");
    CHECK(Aggregator::parse(p.name()).p == -2.0);
    CHECK_THROWS_AS(Aggregator::parse("max"), ConfigError);
    CHECK_THROWS_AS(Aggregator::parse("pmean:abc"), ConfigError);
}

TEST_CASE("score a query") {
    std::map<std::string, Embedding> chunks = {{"a", {1, 0}}, {"b", {0.6f, 0.8f}}};
    auto s = score_query("q", 2, {1, 0}, {"a", "b"}, chunks, Aggregator::min());
    CHECK(s.similarities.size() == 2);
    CHECK(s.similarities[0] == doctest::Approx(1.0));
    CHECK(s.score == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(s.aggregator == "min");
    CHECK_FALSE(s.bin);
    CHECK_THROWS(score_query("q", 2, {1, 0}, {}, chunks, Aggregator::min()));
    CHECK_THROWS(score_query("q", 2, {1, 0}, {"zzz"}, chunks, Aggregator::min()));
}

TEST_CASE("bin sizes") {
    CHECK(bin_sizes(8, 4) == std::vector<std::size_t>{2, 2, 2, 2});
    CHECK(bin_sizes(10, 4) == std::vector<std::size_t>{3, 3, 2, 2});
    CHECK(bin_sizes(3, 4) == std::vector<std::size_t>{1, 1, 1, 0});
    CHECK(bin_sizes(0, 4) == std::vector<std::size_t>{0, 0, 0, 0});
    CHECK(bin_sizes(7, 2) == std::vector<std::size_t>{4, 3});
}

TEST_CASE("per-hop quartile binning") {
    auto scores = row(2, 8);
    auto more = row(3, 10);
    scores.insert(scores.end(), more.begin(), more.end());
    auto m = bin_quartiles(scores);
    CHECK(m.hops == std::vector<std::size_t>{2, 3, 4, 5});
    CHECK(counts(m, m.row_of(2)) == std::vector<std::size_t>{2, 2, 2, 2});
    CHECK(counts(m, m.row_of(3)) == std::vector<std::size_t>{3, 3, 2, 2});
    CHECK(counts(m, m.row_of(4)) == std::vector<std::size_t>{0, 0, 0, 0});
    CHECK(m.total() == scores.size());

    // Every score in bin b is <= every score in bin b+1.
    std::map<std::string, double> by_id;
    for (const auto& s : scores) by_id[s.qa_id] = s.score;
    for (const auto& r : m.cells) {
        for (std::size_t b = 0; b + 1 < r.size(); ++b) {
            for (const auto& lo : r[b].query_ids)
                for (const auto& hi : r[b + 1].query_ids) CHECK(by_id[lo] <= by_id[hi]);
        }
    }
    for (const auto& s : scores) {
        REQUIRE(s.bin);
        auto where = m.locate(s.qa_id);
        REQUIRE(where);
        CHECK(where->second == *s.bin);
    }
}

TEST_CASE("equal scores bin by id") {
    std::vector<DifficultyScore> scores;
    for (const auto* id : {"d", "b", "a", "c"}) {
        DifficultyScore s;
        s.qa_id = id;
        s.hop = 2;
        s.score = 0.5;
        scores.push_back(s);
    }
    auto m = bin_quartiles(scores);
    const auto r = m.row_of(2);
    CHECK(m.cells[r][0].query_ids == std::vector<std::string>{"a"});
    CHECK(m.cells[r][3].query_ids == std::vector<std::string>{"d"});
}

TEST_CASE("global binning and two bins") {
    auto scores = row(2, 6);
    auto more = row(5, 6);
    scores.insert(scores.end(), more.begin(), more.end());
    auto m = bin_quartiles(scores, false, 2);
    CHECK(m.bins == 2);
    std::size_t low = 0;
    for (const auto& r : m.cells) low += r[0].count;
    CHECK(low == 6);
    CHECK(m.total() == 12);

    auto bad = row(6, 1);
    CHECK_THROWS(bin_quartiles(bad));
    CHECK_THROWS_AS(bin_quartiles(scores, true, 0), ConfigError);
}

TEST_CASE("matrix json round trip") {
    auto scores = row(2, 5);
    auto m = bin_quartiles(scores);
    m.cells[0][1].error_rate = 0.5;
    auto back = json(m).get<DifficultyMatrix>();
    CHECK(json(back).dump() == json(m).dump());
    CHECK(back.locate(scores[0].qa_id) == m.locate(scores[0].qa_id));
}
