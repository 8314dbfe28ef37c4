#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace littab {

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Trim plus collapse of internal whitespace runs to a single space.
// Column names are compared under this normalization.
inline std::string normalize_ws(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = true;  // leading whitespace dropped
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_ws = true;
        } else {
            if (in_ws && !out.empty()) out.push_back(' ');
            out.push_back(c);
            in_ws = false;
        }
    }
    return out;
}

// ~125 common English function words, used when reproducing prompt/content
// token-overlap statistics. Tokens are lowercased before lookup.
inline const std::unordered_set<std::string>& stop_words() {
    static const std::unordered_set<std::string> words = {
        "a", "about", "above", "after", "again", "against", "all", "also", "am", "an",
        "and", "any", "are", "as", "at", "be", "because", "been", "before", "being",
        "below", "between", "both", "but", "by", "can", "cannot", "could", "did", "do",
        "does", "doing", "down", "during", "each", "few", "for", "from", "further",
        "had", "has", "have", "having", "he", "her", "here", "hers", "him", "his",
        "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just", "may",
        "me", "might", "more", "most", "must", "my", "no", "nor", "not", "of", "off",
        "on", "once", "only", "or", "other", "our", "ours", "out", "over", "own",
        "s", "same", "shall", "she", "should", "so", "some", "such", "t", "than",
        "that", "the", "their", "theirs", "them", "then", "there", "these", "they",
        "this", "those", "through", "to", "too", "under", "until", "up", "upon",
        "us", "very", "was", "we", "were", "what", "when", "where", "which", "while",
        "who", "whom", "why", "will", "with", "would", "you", "your", "yours",
    };
    return words;
}

// Lowercased alphanumeric tokens with stop words removed; duplicates dropped.
inline std::set<std::string> content_tokens(std::string_view text) {
    std::set<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            if (!stop_words().count(cur)) tokens.insert(cur);
            cur.clear();
        }
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

// Token budget approximation when the provider exposes no tokenizer.
inline std::size_t approx_tokens(std::string_view text) {
    return (text.size() + 3) / 4;
}

// Shortens text to at most max_chars by dropping from the middle, keeping
// head and tail. Returns the input unchanged when it already fits.
inline std::string truncate_middle(std::string_view text, std::size_t max_chars) {
    static const std::string marker = "\n[...truncated...]\n";
    if (text.size() <= max_chars) return std::string(text);
    if (max_chars <= marker.size()) return std::string(text.substr(0, max_chars));
    const std::size_t keep = max_chars - marker.size();
    const std::size_t head = keep / 2;
    const std::size_t tail = keep - head;
    std::string out;
    out.reserve(max_chars);
    out.append(text.substr(0, head));
    out.append(marker);
    out.append(text.substr(text.size() - tail));
    return out;
}

// Caps text at max_words whitespace-separated words.
inline std::string cap_words(std::string_view text, std::size_t max_words) {
    std::size_t count = 0;
    bool in_word = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const bool ws = std::isspace(static_cast<unsigned char>(text[i])) != 0;
        if (!ws && !in_word) {
            ++count;
            if (count > max_words) {
                return trim(text.substr(0, i));
            }
        }
        in_word = !ws;
    }
    return std::string(text);
}

inline bool starts_with_yes(std::string_view reply) {
    std::string s = to_lower(trim(reply));
    if (s.rfind("yes", 0) != 0) return false;
    return s.size() == 3 || !std::isalnum(static_cast<unsigned char>(s[3]));
}

// FNV-1a, for stable per-entry seeds that do not depend on execution order.
inline std::uint64_t stable_hash(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// splitmix64 finalizer: derives independent sub-seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Unbiased draw from [0, n) by rejection sampling. Unlike
// std::uniform_int_distribution, the consumed engine stream is pinned by the
// standard, so replay does not depend on the standard library build.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_below: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return x % n;
}

// Inclusive bounds.
inline std::uint64_t uniform_in(std::mt19937_64& rng, std::uint64_t lo, std::uint64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_in: empty interval");
    return lo + uniform_below(rng, hi - lo + 1);
}

template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[uniform_below(rng, i)]);
}

}  // namespace littab
