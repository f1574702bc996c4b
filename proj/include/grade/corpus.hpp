#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "grade/gateway.hpp"
#include "grade/util.hpp"

namespace grade {

// ── Tokenization ────────────────────────────────────────────

/// Byte span [begin, end) of one token in the source text.
struct Token {
    std::size_t begin;
    std::size_t end;
};

class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::vector<Token> tokenize(std::string_view text) const = 0;
    virtual std::string name() const = 0;
    std::size_t count(std::string_view text) const { return tokenize(text).size(); }
};

/// Maximal runs of word characters (ASCII alphanumerics and any non-ASCII
/// byte) are tokens; every other non-space byte is a token on its own.
class SimpleTokenizer final : public Tokenizer {
public:
    std::vector<Token> tokenize(std::string_view text) const override;
    std::string name() const override { return "simple"; }
};

/// Looks up a tokenizer by config name; only "simple" ships built in.
std::unique_ptr<Tokenizer> make_tokenizer(std::string_view name);

// ── Types ───────────────────────────────────────────────────

struct Article {
    std::string id;
    std::string source;
    std::string domain_tag;
    std::string published_at;
    std::string text;
    std::size_t token_count = 0;
};

struct Sentence {
    std::string id;
    std::string article_id;
    std::size_t index = 0;
    std::string text;
    // Byte span in the article text and the token span it covers.
    std::size_t char_begin = 0;
    std::size_t char_end = 0;
    std::size_t token_begin = 0;
    std::size_t token_end = 0;
};

struct Chunk {
    std::string id;
    std::string article_id;
    std::size_t start = 0;  // token offsets, [start, end)
    std::size_t end = 0;
    std::string text;
    Embedding embedding;
};

void to_json(json& j, const Article& a);
void from_json(const json& j, Article& a);
void to_json(json& j, const Sentence& s);
void from_json(const json& j, Sentence& s);
void to_json(json& j, const Chunk& c);
void from_json(const json& j, Chunk& c);

// ── Operations ──────────────────────────────────────────────

enum class OnMalformed { skip, abort };

struct IngestResult {
    std::vector<Article> articles;
    std::vector<JsonlLineError> errors;
};

/// Reads JSONL records {id?, text, source?, published_at?, domain?}. Records
/// without an id get a content hash of their text. Under OnMalformed::abort
/// the first bad record throws ParseError carrying its line number.
IngestResult ingest(const std::filesystem::path& path, std::string_view domain_tag, const Tokenizer& tokenizer,
                    OnMalformed on_malformed = OnMalformed::skip);
IngestResult ingest_text(std::string_view jsonl, std::string_view domain_tag, const Tokenizer& tokenizer,
                         OnMalformed on_malformed = OnMalformed::skip);

std::vector<Article> filter_by_length(const std::vector<Article>& articles, std::size_t min_tokens = 512,
                                      std::size_t max_tokens = 8192);

/// Sentence boundaries: '.', '!' or '?' (plus trailing quotes/brackets)
/// followed by whitespace or end of text, unless the word before a period
/// is a known abbreviation or the next word starts lower-case.
std::vector<Sentence> split_sentences(const Article& article, const Tokenizer& tokenizer);

/// Sentence texts of an arbitrary string, same rules as split_sentences.
std::vector<std::string> split_text_sentences(std::string_view text);

struct ChunkingOptions {
    std::size_t min_tokens = 128;
    std::size_t max_tokens = 256;
    std::size_t overlap = 50;
};

/// Greedy windows: [p, min(p + max, N)), then p = end - overlap, until the
/// article is covered. The final window may be shorter than min_tokens.
std::vector<Chunk> chunk(const Article& article, const Tokenizer& tokenizer, const ChunkingOptions& options = {});

std::string chunk_id(std::string_view article_id, std::size_t start, std::size_t end);

struct EmbedOptions {
    std::string model = "mock-embed";
    std::size_t batch_size = 32;
    std::size_t concurrency = 4;
};

/// Fills every chunk's embedding through the gateway. When batches fail
/// after retries the stage throws StageError listing the failed chunk ids.
std::vector<Chunk> embed_chunks(std::vector<Chunk> chunks, Gateway& gateway, const EmbedOptions& options = {});

}  // namespace grade
