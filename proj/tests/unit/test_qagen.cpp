#include <doctest.h>

#include <algorithm>
#include <random>

#include "grade/qagen.hpp"
#include "path_oracle.hpp"
#include "support.hpp"

using namespace grade;

namespace {

Triple triple(std::string s, std::string p, std::string o, std::string claim_id = "c1") {
    return {std::move(s), std::move(p), std::move(o), "s-" + claim_id, std::move(claim_id)};
}

std::set<test::EdgeSeq> as_set(const std::vector<ReasoningPath>& paths) {
    std::set<test::EdgeSeq> out;
    for (const auto& p : paths) out.insert(test::edge_seq(p));
    return out;
}

std::vector<std::string> node_walk(const ReasoningPath& p) { return p.nodes(); }

// A tiny world: one article, one sentence and one chunk per claim.
struct World {
    std::vector<Claim> claims;
    std::vector<Sentence> sentences;
    std::vector<Chunk> chunks;

    void add(const std::string& claim_id, const std::string& text) {
        const auto i = claims.size();
        Sentence s;
        s.id = "s-" + claim_id;
        s.article_id = "a";
        s.index = i;
        s.text = text;
        s.token_begin = i * 10;
        s.token_end = i * 10 + 8;
        sentences.push_back(s);
        Claim c;
        c.id = claim_id;
        c.sentence_id = s.id;
        c.article_id = "a";
        c.text = text;
        c.verified = true;
        claims.push_back(c);
        Chunk ch;
        ch.id = "ch-" + claim_id;
        ch.article_id = "a";
        ch.start = i * 10;
        ch.end = i * 10 + 10;
        ch.text = text;
        chunks.push_back(ch);
    }
    SupportIndex index() const { return SupportIndex(claims, sentences, chunks); }
};

ReasoningPath path_of(const KnowledgeGraph& g, std::initializer_list<std::pair<std::string, std::string>> hops) {
    ReasoningPath p;
    for (const auto& [s, d] : hops) {
        auto it = std::find_if(g.edges.begin(), g.edges.end(), [&](const Edge& e) { return e.src == s && e.dst == d; });
        REQUIRE(it != g.edges.end());
        p.edges.push_back(*it);
    }
    return p;
}

}  // namespace

TEST_CASE("chain paths") {
    auto g = build_graph({triple("a", "r", "b", "c1"), triple("b", "r", "c", "c2"), triple("c", "r", "d", "c3")});
    auto paths = enumerate_paths(g);
    std::vector<std::vector<std::string>> walks;
    for (const auto& p : paths) walks.push_back(node_walk(p));
    std::sort(walks.begin(), walks.end());
    CHECK(walks == std::vector<std::vector<std::string>>{{"a", "b", "c"}, {"a", "b", "c", "d"}, {"b", "c", "d"}});
}

TEST_CASE("shortcut removes the longer path") {
    auto g = build_graph({triple("a", "r", "b", "c1"), triple("b", "r", "c", "c2"), triple("a", "r", "c", "c3")});
    CHECK(enumerate_paths(g).empty());
    CHECK(enumerate_paths(KnowledgeGraph{}).empty());
}

TEST_CASE("parallel edges and self-loops") {
    auto g = build_graph({triple("a", "r", "b", "c1"), triple("a", "q", "b", "c2"), triple("b", "r", "c", "c3"),
                          triple("b", "loves", "b", "c4")});
    auto paths = enumerate_paths(g);
    CHECK(paths.size() == 2);
    for (const auto& p : paths)
        for (const auto& e : p.edges) CHECK(e.src != e.dst);
}

TEST_CASE("per-pair cap") {
    std::vector<Triple> ts;
    for (int i = 0; i < 10; ++i) {
        ts.push_back(triple("s", "r", "m" + std::to_string(i), "c" + std::to_string(i)));
        ts.push_back(triple("m" + std::to_string(i), "r", "t", "d" + std::to_string(i)));
    }
    auto g = build_graph(ts);
    CHECK(enumerate_paths(g, {.per_pair_cap = 64}).size() == 10);
    CHECK(enumerate_paths(g, {.per_pair_cap = 4}).size() == 4);
}

TEST_CASE("matches the brute-force oracle on random graphs") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 30; ++trial) {
        auto g = test::random_graph(rng);
        auto paths = enumerate_paths(g, {.min_hop = 2, .max_hop = 5, .per_pair_cap = 1u << 20, .concurrency = 2});
        CHECK(as_set(paths) == test::brute_force_paths(g, 2, 5));
        CHECK(std::is_sorted(paths.begin(), paths.end(),
                             [](const ReasoningPath& a, const ReasoningPath& b) { return a.key() < b.key(); }));
    }
}

TEST_CASE("dedupe and sample") {
    auto g = build_graph({triple("a", "r", "x", "c1"), triple("x", "r", "c", "c2"), triple("a", "r", "y", "c3"),
                          triple("y", "r", "c", "c4")});
    auto paths = enumerate_paths(g);
    REQUIRE(paths.size() == 2);
    auto kept = dedupe_and_sample(paths, 400, 7);
    CHECK(kept.size() == 1);

    SUBCASE("undersupply keeps everything") {
        std::vector<Triple> ts;
        for (int i = 0; i < 100; ++i) {
            const auto s = std::to_string(i);
            ts.push_back(triple("a" + s, "r", "b" + s, "c" + s));
            ts.push_back(triple("b" + s, "r", "c" + s, "d" + s));
            ts.push_back(triple("c" + s, "r", "d" + s, "e" + s));
        }
        auto all = enumerate_paths(build_graph(ts), {.min_hop = 3, .max_hop = 3});
        REQUIRE(all.size() == 100);
        CHECK(dedupe_and_sample(all, 400, 7).size() == 100);
        CHECK(dedupe_and_sample(all, 30, 7).size() == 30);
    }
    SUBCASE("deterministic and order independent") {
        std::mt19937_64 rng(5);
        auto big = enumerate_paths(test::random_graph(rng, 12, 30));
        auto a = dedupe_and_sample(big, 5, 11);
        auto shuffled = big;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto b = dedupe_and_sample(shuffled, 5, 11);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].key() == b[i].key());
        std::set<std::tuple<std::string, std::string, std::size_t>> ends;
        for (const auto& p : a) CHECK(ends.insert({p.start(), p.end(), p.hop()}).second);
    }
}

TEST_CASE("path json and flags") {
    auto g = build_graph({triple("a", "r", "b", "c1"), triple("B", "q", "c", "c2")});
    auto p = path_of(g, {{"a", "b"}, {"b", "c"}});
    CHECK(p.hop() == 2);
    CHECK(p.id() == "p-" + short_hash(p.key()));
    auto back = json(p).get<ReasoningPath>();
    CHECK(back.key() == p.key());
    CHECK(format_path_triples(p) == "(a, r, b); (B, q, c)");
    CHECK_FALSE(path_uses_mirrored(p));
    CHECK_FALSE(path_uses_merged(p));

    p.edges[1].src_surface = "bee";
    CHECK(path_uses_merged(p));
    p.edges[0].provenance = Provenance::mirrored;
    CHECK(path_uses_mirrored(p));

    auto broken = json(p);
    broken["edges"][1]["src"] = "zzz";
    CHECK_THROWS(broken.get<ReasoningPath>());
}

TEST_CASE("qa output parsing") {
    auto q = parse_qa_output(default_qa_examples());
    REQUIRE(q);
    CHECK(q->question ==
          "What condition did actor Matthew Perry experience due to elevated ketamine levels in his blood?");
    CHECK(q->answer == "Respiratory depression");
    CHECK_FALSE(parse_qa_output("Question: what? Answer: that"));
    CHECK_FALSE(parse_qa_output("Q: what? | A: that"));
    CHECK_FALSE(parse_qa_output(""));
    CHECK(parse_qa_output("\nquestion: x? | ANSWER: y")->answer == "y");
}

TEST_CASE("qa generation") {
    World w;
    w.add("c1", "Matthew Perry had elevated ketamine levels in his blood.");
    w.add("c2", "Elevated ketamine levels in his blood led to respiratory depression.");
    auto g = build_graph({triple("matthew perry", "had", "elevated ketamine levels in his blood", "c1"),
                          triple("elevated ketamine levels in his blood", "led to", "respiratory depression", "c2")});
    auto path = path_of(g, {{"matthew perry", "elevated ketamine levels in his blood"},
                            {"elevated ketamine levels in his blood", "respiratory depression"}});
    const auto support = w.index();
    CHECK(support.chunks_for_claim("c1") == std::vector<std::string>{"ch-c1"});

    SUBCASE("perry example") {
        auto gw = test::fn_gateway([](TemplateName, const RenderedPrompt&) { return default_qa_examples(); });
        auto r = generate_qa(path, g, support, *gw, {});
        REQUIRE(r.qa);
        CHECK(r.qa->answer == "Respiratory depression");
        CHECK(r.qa->hop == 2);
        CHECK(r.qa->claim_ids == std::vector<std::string>{"c1", "c2"});
        CHECK(r.qa->chunk_ids == std::vector<std::string>{"ch-c1", "ch-c2"});
        CHECK(r.qa->path_id == path.id());
        CHECK_FALSE(r.qa->validated);
    }
    SUBCASE("mock chain question") {
        auto gw = test::mock_gateway();
        auto r = generate_qa(path, g, support, *gw, {});
        REQUIRE(r.qa);
        CHECK(r.qa->answer == "respiratory depression");
        CHECK(r.qa->question.find("matthew perry") != std::string::npos);
    }
    auto reject = [&](std::string reply) {
        auto gw = test::fn_gateway([reply](TemplateName, const RenderedPrompt&) { return reply; });
        auto r = generate_qa(path, g, support, *gw, {});
        CHECK_FALSE(r.qa);
        return r.reject_reason;
    };
    CHECK(reject("What happened? Respiratory depression") == "qa_parse");
    CHECK(reject("Question: What happened? | Answer:") == "empty_answer");
    std::string long_answer;
    for (int i = 0; i < 40; ++i) long_answer += "word ";
    CHECK(reject("Question: What happened? | Answer: " + long_answer) == "answer_too_long");
    CHECK(reject("Question: What happened? | Answer: Cardiac arrest") == "answer_not_terminal");

    SUBCASE("claim without a chunk") {
        World bare;
        bare.add("c9", "unrelated");
        auto gw = test::mock_gateway();
        auto r = generate_qa(path, g, bare.index(), *gw, {});
        CHECK(r.reject_reason == "no_supporting_chunk");
    }
}

TEST_CASE("validation") {
    CHECK(parse_true_false("true.") == true);
    CHECK(parse_true_false("FALSE\n") == false);
    CHECK_FALSE(parse_true_false("yes").has_value());

    auto gw = test::mock_gateway();
    QAPair vague;
    vague.id = "q1";
    vague.question = "Which places receive exports from Harbor Foods?";
    vague.answer = "other countries";
    QAPair clear;
    clear.id = "q2";
    clear.question = "Starting from naloxone, which entity is reached by following \"is made by\"?";
    clear.answer = "calder pharma";
    CHECK_FALSE(validate_qa(vague, *gw, {}).validated);
    CHECK(validate_qa(clear, *gw, {}).validated);

    ValidationStats stats;
    auto out = validate_all({vague, clear}, *gw, {}, 2, &stats);
    CHECK(out.size() == 2);
    CHECK(stats.accepted == 1);
    CHECK(stats.rejected == 1);

    auto odd = test::fn_gateway([](TemplateName, const RenderedPrompt&) { return "Unsure"; });
    bool miss = false;
    CHECK_FALSE(validate_qa(clear, *odd, {}, &miss).validated);
    CHECK(miss);
}
