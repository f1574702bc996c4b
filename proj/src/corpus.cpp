#include "grade/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <mutex>
#include <set>
#include <unordered_set>

#include <spdlog/spdlog.h>

namespace grade {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

// Length of a closing quote/bracket at text[i], 0 if none.
std::size_t closer_len(std::string_view text, std::size_t i) {
    const char c = text[i];
    if (c == '"' || c == '\'' || c == ')' || c == ']') return 1;
    // U+2019 and U+201D
    if (i + 2 < text.size() && static_cast<unsigned char>(c) == 0xE2 &&
        static_cast<unsigned char>(text[i + 1]) == 0x80 &&
        (static_cast<unsigned char>(text[i + 2]) == 0x99 || static_cast<unsigned char>(text[i + 2]) == 0x9D))
        return 3;
    return 0;
}

const std::set<std::string, std::less<>>& abbreviations() {
    static const std::set<std::string, std::less<>> kAbbrev = {
        "mr",  "mrs",  "ms",   "dr",  "prof", "sr",  "jr",   "st",    "mt",   "vs",   "e.g", "i.e",
        "u.s", "u.k",  "u.n",  "inc", "ltd",  "co",  "corp", "gen",   "gov",  "sen",  "rep", "lt",
        "col", "capt", "sgt",  "no",  "jan",  "feb", "aug",  "sept",  "oct",  "nov",  "dec", "approx",
        "dept", "est", "fig",  "a.m", "p.m",  "ft",  "vol",  "ave",   "blvd", "rev",  "hon", "gov't"};
    return kAbbrev;
}

std::string word_before(std::string_view text, std::size_t dot) {
    std::size_t k = dot;
    while (k > 0) {
        const auto c = static_cast<unsigned char>(text[k - 1]);
        if (std::isalpha(c) || c == '.' || c == '\'') {
            --k;
        } else {
            break;
        }
    }
    return to_lower(text.substr(k, dot - k));
}

struct Span {
    std::size_t begin;
    std::size_t end;
};

std::vector<Span> sentence_spans(std::string_view text) {
    std::vector<Span> spans;
    const std::size_t n = text.size();
    auto push = [&](std::size_t b, std::size_t e) {
        while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
        if (e > b) spans.push_back({b, e});
    };
    std::size_t start = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_terminal(text[i])) continue;
        std::size_t j = i + 1;
        while (j < n && is_terminal(text[j])) ++j;
        while (j < n) {
            auto len = closer_len(text, j);
            if (len == 0) break;
            j += len;
        }
        if (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) {
            i = j - 1;
            continue;
        }
        if (text[i] == '.' && j == i + 1) {
            if (abbreviations().contains(word_before(text, i))) continue;
            std::size_t k = j;
            while (k < n && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
            if (k < n && std::islower(static_cast<unsigned char>(text[k]))) continue;
        }
        push(start, j);
        start = j;
        i = j - 1;
    }
    push(start, n);
    return spans;
}

Article article_from_record(const json& record, std::string_view domain_tag, const Tokenizer& tokenizer) {
    if (!record.is_object()) throw Error("record is not a JSON object");
    if (!record.contains("text") || !record["text"].is_string()) throw Error("record has no string 'text' field");
    Article a;
    a.text = record["text"].get<std::string>();
    a.id = record.contains("id") && !record["id"].is_null()
               ? (record["id"].is_string() ? record["id"].get<std::string>() : record["id"].dump())
               : "art-" + short_hash(a.text, 12);
    a.source = record.value("source", std::string{});
    a.published_at = record.value("published_at", record.value("date", std::string{}));
    a.domain_tag = record.value("domain", std::string(domain_tag));
    a.token_count = tokenizer.count(a.text);
    return a;
}

}  // namespace

std::vector<Token> SimpleTokenizer::tokenize(std::string_view text) const {
    std::vector<Token> out;
    const std::size_t n = text.size();
    std::size_t i = 0;
    while (i < n) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            ++i;
        } else if (is_word_byte(c)) {
            std::size_t j = i + 1;
            while (j < n && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
            out.push_back({i, j});
            i = j;
        } else {
            out.push_back({i, i + 1});
            ++i;
        }
    }
    return out;
}

std::unique_ptr<Tokenizer> make_tokenizer(std::string_view name) {
    if (name.empty() || name == "simple") return std::make_unique<SimpleTokenizer>();
    throw ConfigError("unknown tokenizer: " + std::string(name));
}

// ── JSON ────────────────────────────────────────────────────

void to_json(json& j, const Article& a) {
    j = json{{"id", a.id},
             {"source", a.source},
             {"domain", a.domain_tag},
             {"published_at", a.published_at},
             {"text", a.text},
             {"token_count", a.token_count}};
}

void from_json(const json& j, Article& a) {
    a.id = j.at("id").get<std::string>();
    a.source = j.value("source", std::string{});
    a.domain_tag = j.value("domain", std::string{});
    a.published_at = j.value("published_at", std::string{});
    a.text = j.at("text").get<std::string>();
    a.token_count = j.value("token_count", std::size_t{0});
}

void to_json(json& j, const Sentence& s) {
    j = json{{"id", s.id},
             {"article_id", s.article_id},
             {"index", s.index},
             {"text", s.text},
             {"char_begin", s.char_begin},
             {"char_end", s.char_end},
             {"token_begin", s.token_begin},
             {"token_end", s.token_end}};
}

void from_json(const json& j, Sentence& s) {
    s.id = j.at("id").get<std::string>();
    s.article_id = j.at("article_id").get<std::string>();
    s.index = j.at("index").get<std::size_t>();
    s.text = j.at("text").get<std::string>();
    s.char_begin = j.value("char_begin", std::size_t{0});
    s.char_end = j.value("char_end", std::size_t{0});
    s.token_begin = j.value("token_begin", std::size_t{0});
    s.token_end = j.value("token_end", std::size_t{0});
}

void to_json(json& j, const Chunk& c) {
    j = json{{"id", c.id}, {"article_id", c.article_id}, {"start", c.start},
             {"end", c.end}, {"text", c.text},             {"embedding", c.embedding}};
}

void from_json(const json& j, Chunk& c) {
    c.id = j.at("id").get<std::string>();
    c.article_id = j.at("article_id").get<std::string>();
    c.start = j.at("start").get<std::size_t>();
    c.end = j.at("end").get<std::size_t>();
    c.text = j.at("text").get<std::string>();
    c.embedding = j.value("embedding", Embedding{});
}

// ── Operations ──────────────────────────────────────────────

IngestResult ingest_text(std::string_view jsonl, std::string_view domain_tag, const Tokenizer& tokenizer,
                         OnMalformed on_malformed) {
    const bool skip = on_malformed == OnMalformed::skip;
    auto parsed_lines = split_lines(jsonl);
    IngestResult result;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < parsed_lines.size(); ++i) {
        const auto& line = parsed_lines[i];
        if (trim(line).empty()) continue;
        const std::size_t line_no = i + 1;
        try {
            json record;
            try {
                record = json::parse(line);
            } catch (const json::parse_error& e) {
                throw Error(std::string("malformed JSON: ") + e.what());
            }
            auto article = article_from_record(record, domain_tag, tokenizer);
            if (!seen.insert(article.id).second) throw Error("duplicate article id '" + article.id + "'");
            result.articles.push_back(std::move(article));
        } catch (const Error& e) {
            if (!skip) throw ParseError(e.what(), line_no);
            spdlog::warn("ingest: skipping line {}: {}", line_no, e.what());
            result.errors.push_back({line_no, e.what()});
        }
    }
    return result;
}

IngestResult ingest(const std::filesystem::path& path, std::string_view domain_tag, const Tokenizer& tokenizer,
                    OnMalformed on_malformed) {
    return ingest_text(read_file(path), domain_tag, tokenizer, on_malformed);
}

std::vector<Article> filter_by_length(const std::vector<Article>& articles, std::size_t min_tokens,
                                      std::size_t max_tokens) {
    if (min_tokens > max_tokens) throw ConfigError("filter_by_length: min_tokens > max_tokens");
    std::vector<Article> kept;
    std::copy_if(articles.begin(), articles.end(), std::back_inserter(kept), [&](const Article& a) {
        return a.token_count >= min_tokens && a.token_count <= max_tokens;
    });
    return kept;
}

std::vector<std::string> split_text_sentences(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& span : sentence_spans(text)) out.emplace_back(text.substr(span.begin, span.end - span.begin));
    return out;
}

std::vector<Sentence> split_sentences(const Article& article, const Tokenizer& tokenizer) {
    const auto tokens = tokenizer.tokenize(article.text);
    std::vector<Sentence> out;
    for (const auto& span : sentence_spans(article.text)) {
        Sentence s;
        s.index = out.size();
        s.id = article.id + ":s" + std::to_string(s.index);
        s.article_id = article.id;
        s.text = article.text.substr(span.begin, span.end - span.begin);
        s.char_begin = span.begin;
        s.char_end = span.end;
        auto first = std::lower_bound(tokens.begin(), tokens.end(), span.begin,
                                      [](const Token& t, std::size_t pos) { return t.begin < pos; });
        auto last = std::lower_bound(first, tokens.end(), span.end,
                                     [](const Token& t, std::size_t pos) { return t.begin < pos; });
        s.token_begin = static_cast<std::size_t>(first - tokens.begin());
        s.token_end = static_cast<std::size_t>(last - tokens.begin());
        out.push_back(std::move(s));
    }
    return out;
}

std::string chunk_id(std::string_view article_id, std::size_t start, std::size_t end) {
    return "ch-" + short_hash(std::string(article_id) + '\x1f' + std::to_string(start) + '-' + std::to_string(end));
}

std::vector<Chunk> chunk(const Article& article, const Tokenizer& tokenizer, const ChunkingOptions& options) {
    if (!(options.overlap < options.min_tokens && options.min_tokens <= options.max_tokens)) {
        throw ConfigError("chunk: require overlap < min_tokens <= max_tokens");
    }
    const auto tokens = tokenizer.tokenize(article.text);
    const std::size_t n = tokens.size();
    std::vector<Chunk> out;
    std::size_t p = 0;
    while (p < n) {
        const std::size_t end = std::min(p + options.max_tokens, n);
        Chunk c;
        c.article_id = article.id;
        c.start = p;
        c.end = end;
        c.id = chunk_id(article.id, p, end);
        c.text = article.text.substr(tokens[p].begin, tokens[end - 1].end - tokens[p].begin);
        out.push_back(std::move(c));
        if (end == n) break;
        p = end - options.overlap;
    }
    return out;
}

std::vector<Chunk> embed_chunks(std::vector<Chunk> chunks, Gateway& gateway, const EmbedOptions& options) {
    if (chunks.empty()) return chunks;
    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
    const std::size_t batches = (chunks.size() + batch - 1) / batch;
    std::vector<std::string> failed;
    std::mutex failed_mutex;
    parallel_for(batches, options.concurrency, [&](std::size_t b) {
        const std::size_t begin = b * batch;
        const std::size_t end = std::min(chunks.size(), begin + batch);
        EmbeddingRequest req;
        req.model = options.model;
        for (std::size_t i = begin; i < end; ++i) req.texts.push_back(chunks[i].text);
        try {
            auto vectors = gateway.embed(req);
            for (std::size_t i = begin; i < end; ++i) chunks[i].embedding = std::move(vectors[i - begin]);
        } catch (const TransportError& e) {
            spdlog::error("embedding batch {} failed: {}", b, e.what());
            std::lock_guard lock(failed_mutex);
            for (std::size_t i = begin; i < end; ++i) failed.push_back(chunks[i].id);
        }
    });
    if (!failed.empty()) {
        std::sort(failed.begin(), failed.end());
        throw StageError("embedding failed for " + std::to_string(failed.size()) + " chunks", failed);
    }
    return chunks;
}

}  // namespace grade
