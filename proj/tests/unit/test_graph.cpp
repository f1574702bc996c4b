#include <doctest.h>

#include <algorithm>
#include <random>

#include "grade/graph.hpp"
#include "support.hpp"

using namespace grade;

namespace {

Claim claim(const std::string& id, const std::string& text) {
    Claim c;
    c.id = id;
    c.sentence_id = "s-" + id;
    c.article_id = "a";
    c.text = text;
    c.verified = true;
    return c;
}

Triple triple(std::string s, std::string p, std::string o, std::string claim_id = "c1") {
    return {std::move(s), std::move(p), std::move(o), "s-" + claim_id, std::move(claim_id)};
}

}  // namespace

TEST_CASE("triple line parsing") {
    auto t = parse_triple_line("(matthew perry|had|elevated ketamine levels in his blood|1)");
    REQUIRE(t);
    CHECK(t->subject == "matthew perry");
    CHECK(t->predicate == "had");
    CHECK(t->object == "elevated ketamine levels in his blood");
    CHECK(t->index == 1);
    CHECK(format_triple_line(*t) == "(matthew perry|had|elevated ketamine levels in his blood|1)");

    CHECK_FALSE(parse_triple_line("(a|b|2)"));
    CHECK_FALSE(parse_triple_line("(a|b|c|d|1)"));
    CHECK_FALSE(parse_triple_line("(a||c|1)"));
    CHECK_FALSE(parse_triple_line("(a|b|c|one)"));
    CHECK_FALSE(parse_triple_line("a|b|c|1"));
}

TEST_CASE("triple output parsing") {
    std::vector<Claim> batch = {claim("c1", "A beats B."), claim("c2", "C owns D.")};
    auto r = parse_triple_output("(a|beats|b|1)\n(b|beats|a|1)\n(a|b|2)\n(c|owns|d|2)\n(x|y|z|3)\n\n", batch);
    REQUIRE(r.triples.size() == 2);
    CHECK(r.triples[0].claim_id == "c1");
    CHECK(r.triples[0].sentence_id == "s-c1");
    CHECK(r.triples[1].subject == "c");
    CHECK(r.triples[1].claim_id == "c2");
    CHECK(r.stats.duplicates == 1);
    CHECK(r.stats.parse_errors == 1);
    CHECK(r.stats.out_of_range == 1);
    CHECK(r.stats.parsed == 2);

    // The same fact from two different sentences is kept twice.
    auto two = parse_triple_output("(a|beats|b|1)\n(a|beats|b|2)", batch);
    CHECK(two.triples.size() == 2);
}

TEST_CASE("mock triple extraction batches") {
    auto gw = test::mock_gateway();
    std::vector<Claim> claims;
    for (int i = 0; i < 23; ++i)
        claims.push_back(claim("c" + std::to_string(i), "Club " + std::to_string(i) + " signed with Player X."));
    claims[5].verified = false;
    auto r = extract_all_triples(claims, *gw, {});
    CHECK(r.triples.size() == 22);
    CHECK(r.triples[0].subject == "club 0");
    CHECK(r.triples[0].predicate == "signed with");
    CHECK(r.triples[0].object == "player x");
    for (const auto& t : r.triples) CHECK(t.claim_id != "c5");

    std::vector<Claim> too_many(11, claim("c", "x"));
    CHECK_THROWS(extract_triples(too_many, *gw, {}));
    CHECK(extract_triples({}, *gw, {}).triples.empty());
}

TEST_CASE("exact-match graph assembly") {
    CHECK(build_graph({}).empty());

    auto g = build_graph({triple("USA", "hosted", "the games", "c1"), triple("Canada", "borders", "usa", "c2")});
    CHECK(g.nodes.size() == 3);
    REQUIRE(g.nodes.contains("usa"));
    CHECK(g.degree("usa") == 2);
    CHECK(g.nodes["usa"].surface_forms.size() == 2);
    CHECK(g.resolve("USA") == "usa");
    CHECK(g.resolve("  usa ") == "usa");
    CHECK_FALSE(g.resolve("United States"));

    SUBCASE("duplicate triples collapse, distinct claims do not") {
        auto d = build_graph({triple("a", "r", "b", "c1"), triple("a", "r", "b", "c1"), triple("a", "r", "b", "c2")});
        CHECK(d.edges.size() == 2);
    }
    SUBCASE("independent of input order") {
        std::vector<Triple> ts = {triple("a", "r", "b", "c1"), triple("B", "q", "c", "c2"), triple("c", "r", "A", "c3"),
                                  triple("a", "s", "c", "c4")};
        const auto expected = json(build_graph(ts)).dump();
        std::mt19937 rng(3);
        for (int i = 0; i < 10; ++i) {
            std::shuffle(ts.begin(), ts.end(), rng);
            CHECK(json(build_graph(ts)).dump() == expected);
        }
    }
}

TEST_CASE("graph json round trip") {
    auto g = build_graph({triple("a", "r", "b", "c1"), triple("b", "q", "c", "c2")});
    g.edges[0].provenance = Provenance::mirrored;
    g.normalize();
    auto back = json(g).get<KnowledgeGraph>();
    CHECK(json(back).dump() == json(g).dump());

    auto broken = json(g);
    broken["edges"][0]["dst"] = "nowhere";
    CHECK_THROWS(broken.get<KnowledgeGraph>());
}
