#include <doctest.h>

#include <cmath>
#include <numeric>

#include "grade/corpus.hpp"
#include "grade/errors.hpp"
#include "support.hpp"

using namespace grade;

namespace {

Article words_article(std::size_t n, const std::string& id = "a1") {
    Article a;
    a.id = id;
    for (std::size_t i = 0; i < n; ++i) a.text += (i ? " w" : "w") + std::to_string(i);
    a.token_count = n;
    return a;
}

Article counted(std::size_t tokens, const std::string& id) {
    Article a;
    a.id = id;
    a.token_count = tokens;
    return a;
}

}  // namespace

TEST_CASE("simple tokenizer") {
    SimpleTokenizer tok;
    const std::string text = "Reed's 2-1 win.";
    auto tokens = tok.tokenize(text);
    std::vector<std::string> parts;
    for (auto t : tokens) parts.push_back(text.substr(t.begin, t.end - t.begin));
    CHECK(parts == std::vector<std::string>{"Reed", "'", "s", "2", "-", "1", "win", "."});
    CHECK(tok.count("") == 0);
    CHECK(make_tokenizer("simple")->name() == "simple");
    CHECK_THROWS_AS(make_tokenizer("bpe"), ConfigError);
}

TEST_CASE("ingest") {
    SimpleTokenizer tok;
    SUBCASE("well-formed records") {
        auto r = ingest_text(
            "{\"id\":\"a\",\"text\":\"One two.\"}\n{\"id\":\"b\",\"text\":\"Three.\",\"domain\":\"health\"}\n"
            "{\"text\":\"No id here.\"}\n",
            "news", tok);
        REQUIRE(r.articles.size() == 3);
        CHECK(r.errors.empty());
        CHECK(r.articles[0].domain_tag == "news");
        CHECK(r.articles[1].domain_tag == "health");
        CHECK(r.articles[0].token_count == 3);
        CHECK_FALSE(r.articles[2].id.empty());
        // Content-hashed ids are stable.
        CHECK(ingest_text("{\"text\":\"No id here.\"}\n", "news", tok).articles[0].id == r.articles[2].id);
    }
    SUBCASE("empty input") {
        auto r = ingest_text("", "news", tok);
        CHECK(r.articles.empty());
        CHECK(r.errors.empty());
    }
    SUBCASE("one malformed line among five") {
        const std::string jsonl =
            "{\"id\":\"1\",\"text\":\"a\"}\n{\"id\":\"2\",\"text\":\"b\"}\n{\"id\":\"3\"\n"
            "{\"id\":\"4\",\"text\":\"d\"}\n{\"id\":\"5\",\"text\":\"e\"}\n";
        auto r = ingest_text(jsonl, "news", tok);
        CHECK(r.articles.size() == 4);
        REQUIRE(r.errors.size() == 1);
        CHECK(r.errors[0].line == 3);
        try {
            ingest_text(jsonl, "news", tok, OnMalformed::abort);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 3);
        }
    }
    SUBCASE("record without text is malformed") {
        auto r = ingest_text("{\"id\":\"x\"}\n{\"id\":\"y\",\"text\":42}\n", "news", tok);
        CHECK(r.articles.empty());
        CHECK(r.errors.size() == 2);
    }
    SUBCASE("fixture corpus") {
        auto r = ingest(test::fixture("articles.jsonl"), "news", tok);
        CHECK(r.articles.size() == 20);
        for (const auto& a : r.articles) CHECK(a.token_count >= 512);
    }
}

TEST_CASE("length filter") {
    std::vector<Article> in = {counted(100, "a"), counted(512, "b"), counted(8192, "c"), counted(9000, "d")};
    auto out = filter_by_length(in);
    REQUIRE(out.size() == 2);
    CHECK(out[0].id == "b");
    CHECK(out[1].id == "c");

    std::vector<Article> ok = {counted(600, "x"), counted(700, "y")};
    auto same = filter_by_length(ok);
    REQUIRE(same.size() == 2);
    CHECK(same[0].id == "x");
    CHECK(filter_by_length({}).empty());
}

TEST_CASE("sentence splitting") {
    CHECK(split_text_sentences("A. B? C!") == std::vector<std::string>{"A.", "B?", "C!"});
    CHECK(split_text_sentences("no terminal punctuation here") ==
          std::vector<std::string>{"no terminal punctuation here"});
    CHECK(split_text_sentences("Dr. Smith won.") == std::vector<std::string>{"Dr. Smith won."});
    CHECK(split_text_sentences("").empty());

    SUBCASE("hand-labeled fixture") {
        auto j = json::parse(read_file(test::fixture("sentences.json")));
        auto expected = j["sentences"].get<std::vector<std::string>>();
        REQUIRE(expected.size() == 20);
        CHECK(split_text_sentences(j["text"].get<std::string>()) == expected);
    }

    SUBCASE("spans index back into the article") {
        SimpleTokenizer tok;
        Article a;
        a.id = "art";
        a.text = "First one here. Second one!\n\nThird?";
        auto sentences = split_sentences(a, tok);
        REQUIRE(sentences.size() == 3);
        for (std::size_t i = 0; i < sentences.size(); ++i) {
            const auto& s = sentences[i];
            CHECK(s.index == i);
            CHECK(s.article_id == "art");
            CHECK(a.text.substr(s.char_begin, s.char_end - s.char_begin) == s.text);
        }
        CHECK(sentences[0].token_begin == 0);
        CHECK(sentences[0].token_end == 4);
        CHECK(sentences[1].token_begin == 4);
        CHECK(sentences[2].token_end == tok.count(a.text));
        CHECK(sentences[0].id != sentences[1].id);
    }
}

TEST_CASE("chunking windows") {
    SimpleTokenizer tok;
    auto spans = [&](std::size_t n) {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (const auto& c : chunk(words_article(n), tok)) out.emplace_back(c.start, c.end);
        return out;
    };
    using Spans = std::vector<std::pair<std::size_t, std::size_t>>;
    CHECK(spans(200) == Spans{{0, 200}});
    CHECK(spans(300) == Spans{{0, 256}, {206, 300}});
    CHECK(spans(256) == Spans{{0, 256}});
    CHECK(spans(0).empty());

    auto chunks = chunk(words_article(300), tok);
    CHECK(chunks[1].text.rfind("w206 ", 0) == 0);
    CHECK(chunks[1].text.substr(chunks[1].text.size() - 4) == "w299");
    CHECK(chunks[0].id == chunk_id("a1", 0, 256));

    ChunkingOptions bad;
    bad.overlap = 256;
    CHECK_THROWS_AS(chunk(words_article(300), tok, bad), ConfigError);
}

TEST_CASE("chunk coverage property") {
    SimpleTokenizer tok;
    for (std::size_t n : {1u, 50u, 257u, 511u, 1000u, 4097u}) {
        for (auto [max, overlap] : {std::pair{256u, 50u}, std::pair{128u, 0u}, std::pair{64u, 63u}}) {
            ChunkingOptions o{overlap + 1, max, overlap};
            auto cs = chunk(words_article(n), tok, o);
            REQUIRE_FALSE(cs.empty());
            CHECK(cs.front().start == 0);
            CHECK(cs.back().end == n);
            for (std::size_t i = 0; i < cs.size(); ++i) {
                CHECK(cs[i].end - cs[i].start <= max);
                if (i) CHECK(cs[i].start == cs[i - 1].end - overlap);
            }
        }
    }
}

TEST_CASE("embedding chunks") {
    SimpleTokenizer tok;
    auto gw = test::mock_gateway();
    auto chunks = embed_chunks(chunk(words_article(600), tok), *gw);
    for (const auto& c : chunks) {
        REQUIRE(c.embedding.size() == 64);
        double sq = std::inner_product(c.embedding.begin(), c.embedding.end(), c.embedding.begin(), 0.0);
        CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-6));
    }
    auto again = embed_chunks(chunk(words_article(600), tok), *gw);
    CHECK(again[0].embedding == chunks[0].embedding);

    auto calls_before = gw->stats().backend_calls;
    CHECK(embed_chunks({}, *gw).empty());
    CHECK(gw->stats().backend_calls == calls_before);
}

TEST_CASE("article and chunk json round trip") {
    Chunk c;
    c.id = "c1";
    c.article_id = "a";
    c.start = 3;
    c.end = 9;
    c.text = "t";
    c.embedding = {0.6f, 0.8f};
    Chunk back = json(c).get<Chunk>();
    CHECK(back.id == "c1");
    CHECK(back.end == 9);
    CHECK(back.embedding == c.embedding);
}
