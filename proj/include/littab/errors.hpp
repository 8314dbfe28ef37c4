#pragma once

#include <stdexcept>
#include <string>

namespace littab {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Corpus loading / validation failures.
class CorpusError : public Error {
public:
    using Error::Error;
};

// Embedding math and provider failures.
class EmbeddingError : public Error {
public:
    using Error::Error;
};

// Provider / transport failures carry a kind so callers can react
// (retry transient ones, surface auth immediately, truncate on overflow).
enum class FailKind {
    transient,         // worth retrying (429, 5xx, connection reset)
    auth,              // credentials rejected
    context_overflow,  // request exceeds the provider's context window
    protocol,          // malformed response, unmatched mock rule
    cache,             // cache corruption
    config,            // invalid request or configuration
};

inline const char* to_string(FailKind k) {
    switch (k) {
        case FailKind::transient: return "transient";
        case FailKind::auth: return "auth";
        case FailKind::context_overflow: return "context_overflow";
        case FailKind::protocol: return "protocol";
        case FailKind::cache: return "cache";
        case FailKind::config: return "config";
    }
    return "unknown";
}

class GatewayError : public Error {
public:
    GatewayError(FailKind kind, const std::string& what)
        : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    FailKind kind() const { return kind_; }

private:
    FailKind kind_;
};

// Generation-stage failures (context overflow after truncation, parse
// failures that survived the repair round, propagated provider errors).
class GenerationError : public Error {
public:
    GenerationError(FailKind kind, const std::string& what)
        : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    FailKind kind() const { return kind_; }

private:
    FailKind kind_;
};

class EvaluationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace littab
