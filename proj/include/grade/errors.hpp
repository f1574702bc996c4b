#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace grade {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed configuration or CLI arguments (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Record-level input problem; carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Provider unreachable or retries exhausted.
class TransportError : public Error {
public:
    using Error::Error;
};

/// Provider refused to produce content (moderation, policy).
class ContentError : public Error {
public:
    using Error::Error;
};

class MissingArtifactError : public Error {
public:
    explicit MissingArtifactError(const std::string& artifact)
        : Error("missing artifact: " + artifact), artifact_(artifact) {}
    const std::string& artifact() const { return artifact_; }

private:
    std::string artifact_;
};

/// A batch stage where some items failed after retries.
class StageError : public Error {
public:
    StageError(const std::string& what, std::vector<std::string> failed_ids = {})
        : Error(what), failed_ids_(std::move(failed_ids)) {}
    const std::vector<std::string>& failed_ids() const { return failed_ids_; }

private:
    std::vector<std::string> failed_ids_;
};

}  // namespace grade
