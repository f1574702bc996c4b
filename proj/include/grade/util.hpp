#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

namespace grade {

using json = nlohmann::json;

// ── Hashing ─────────────────────────────────────────────────

std::string sha256_hex(std::string_view data);

/// First `hex_chars` characters of the SHA-256 digest; used for stable ids.
std::string short_hash(std::string_view data, std::size_t hex_chars = 16);

/// 64-bit seed derived from the SHA-256 digest of `data`.
std::uint64_t hash_seed(std::string_view data);

// ── Strings ─────────────────────────────────────────────────

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string collapse_whitespace(std::string_view s);

/// Case-folded, whitespace-collapsed key for exact entity matching.
std::string canonical_key(std::string_view s);

/// Lower-cases and drops everything that is not alphanumeric or a space.
std::string fold_punctuation(std::string_view s);

/// Splits on runs of whitespace.
std::vector<std::string> split_whitespace(std::string_view s);

/// Lower-cased alphanumeric words (non-ASCII bytes count as word chars).
std::vector<std::string> word_tokens(std::string_view s);

bool is_stopword(std::string_view lowered_word);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Splits on '\n', dropping a trailing '\r' from each line.
std::vector<std::string> split_lines(std::string_view s);

// ── Files ───────────────────────────────────────────────────

std::string read_file(const std::filesystem::path& path);

/// Writes via temp file + rename so readers never observe partial content.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// One compact JSON document per line, trailing newline.
std::string to_jsonl(const std::vector<json>& rows);

struct JsonlLineError {
    std::size_t line;
    std::string message;
};

struct JsonlReadResult {
    std::vector<json> rows;
    std::vector<JsonlLineError> errors;
};

/// Parses a JSONL file. Blank lines are ignored. When `skip_malformed` is
/// false the first malformed line throws ParseError.
JsonlReadResult read_jsonl(const std::filesystem::path& path, bool skip_malformed = false);
JsonlReadResult parse_jsonl(std::string_view content, bool skip_malformed = false);

// ── Parallelism ─────────────────────────────────────────────

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Results land by
/// index, so output order never depends on scheduling. The first exception
/// thrown by any task is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    if (n == 0) return;
    workers = std::clamp<std::size_t>(workers, 1, n);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!first_error) first_error = std::current_exception();
                    }
                }
            });
        }
    }
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace grade
