#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "grade/gmm.hpp"

using namespace grade;

namespace {

Points one_d(std::initializer_list<double> xs) {
    Points out;
    for (double x : xs) out.push_back({x});
    return out;
}

std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST_CASE("k = 1 is closed form") {
    Points data = {{0.0, 1.0}, {2.0, 3.0}, {4.0, -1.0}};
    auto m = fit_gmm(data, {.k = 1});
    REQUIRE(m.weights.size() == 1);
    CHECK(m.weights[0] == doctest::Approx(1.0));
    CHECK(m.means[0][0] == doctest::Approx(2.0));
    CHECK(m.means[0][1] == doctest::Approx(1.0));
    CHECK(m.variances[0][0] == doctest::Approx(8.0 / 3.0));
}

TEST_CASE("two separated groups in one dimension") {
    const auto data = one_d({0.0, 0.1, 10.0, 10.1});
    int recovered = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto m = fit_gmm(data, {.k = 2, .seed = seed});
        auto r = responsibilities(m, data);
        const auto a = argmax(r[0]);
        if (argmax(r[1]) == a && argmax(r[2]) != a && argmax(r[3]) == argmax(r[2])) ++recovered;
    }
    CHECK(recovered >= 9);
}

TEST_CASE("point at a well-separated mean is claimed by that component") {
    Points data;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.3);
    for (int i = 0; i < 40; ++i) data.push_back({noise(rng), noise(rng)});
    for (int i = 0; i < 40; ++i) data.push_back({8.0 + noise(rng), 8.0 + noise(rng)});
    auto m = fit_gmm(data, {.k = 2, .seed = 3});
    for (std::size_t j = 0; j < 2; ++j) {
        auto r = responsibilities(m, {m.means[j]});
        CHECK(r[0][j] > 0.99);
    }
}

TEST_CASE("EM invariants") {
    Points data;
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 120; ++i) data.push_back({g(rng) + (i % 3) * 4.0, g(rng), g(rng) * 2.0});
    auto m = fit_gmm(data, {.k = 3, .seed = 2});
    REQUIRE_FALSE(m.log_likelihood_trace.empty());
    for (std::size_t i = 1; i < m.log_likelihood_trace.size(); ++i)
        CHECK(m.log_likelihood_trace[i] >= m.log_likelihood_trace[i - 1] - 1e-7);
    for (const auto& row : responsibilities(m, data))
        CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::accumulate(m.weights.begin(), m.weights.end(), 0.0) == doctest::Approx(1.0));
    CHECK(log_likelihood(m, data) == doctest::Approx(m.log_likelihood_trace.back()).epsilon(1e-6));

    auto again = fit_gmm(data, {.k = 3, .seed = 2});
    CHECK(json(again).dump() == json(m).dump());
}

TEST_CASE("soft assignment thresholds") {
    const auto data = one_d({0.0, 0.1, 5.0, 10.0, 10.1});
    auto m = fit_gmm(data, {.k = 2, .seed = 1});
    const std::vector<std::string> ids = {"a", "b", "c", "d", "e"};

    for (const auto& a : assign(m, data, ids, 1.0)) {
        REQUIRE(a.memberships.size() == 1);
        CHECK(a.memberships[0] == argmax(a.responsibilities));
    }
    for (const auto& a : assign(m, data, ids, 0.0)) CHECK(a.memberships.size() == 2);
    for (const auto& a : assign(m, data, ids, 0.2)) {
        CHECK(std::is_sorted(a.memberships.begin(), a.memberships.end()));
        CHECK(std::find(a.memberships.begin(), a.memberships.end(), argmax(a.responsibilities)) != a.memberships.end());
    }
    CHECK_THROWS(assign(m, data, {"a"}, 0.2));
}

TEST_CASE("model selection helpers") {
    CHECK(default_k(1) == 1);
    CHECK(default_k(10) == 2);
    CHECK(default_k(100) == 5);
    CHECK(default_k(101) == 6);
    CHECK(default_k(100000) == 64);

    Points data;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 0.2);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 30; ++i) data.push_back({c * 6.0 + g(rng), c * -4.0 + g(rng)});
    CHECK(select_k_bic(data, 1, 6, {.seed = 4}) == 3);

    auto m1 = fit_gmm(data, {.k = 1});
    auto m3 = fit_gmm(data, {.k = 3, .seed = 4});
    CHECK(bic(m3, data) < bic(m1, data));
}

TEST_CASE("degenerate input") {
    CHECK_THROWS(fit_gmm({}, {.k = 1}));
    CHECK_THROWS(fit_gmm(one_d({1.0}), {.k = 2}));
    CHECK_THROWS(fit_gmm({{1.0}, {1.0, 2.0}}, {.k = 1}));

    // Duplicate points force a collapse; the fit still finishes with a
    // non-decreasing trace.
    auto m = fit_gmm(one_d({1.0, 1.0, 1.0, 1.0, 1.0, 9.0}), {.k = 3, .seed = 2});
    for (std::size_t i = 1; i < m.log_likelihood_trace.size(); ++i)
        CHECK(m.log_likelihood_trace[i] >= m.log_likelihood_trace[i - 1] - 1e-7);
}

TEST_CASE("gmm json round trip") {
    auto m = fit_gmm(one_d({0.0, 0.1, 10.0, 10.1}), {.k = 2, .seed = 1});
    auto back = json(m).get<GmmModel>();
    CHECK(json(back).dump() == json(m).dump());
    ClusterAssignment a{"c1", {0.7, 0.3}, {0, 1}};
    auto ab = json(a).get<ClusterAssignment>();
    CHECK(ab.claim_id == "c1");
    CHECK(ab.memberships == std::vector<std::size_t>{0, 1});
}
