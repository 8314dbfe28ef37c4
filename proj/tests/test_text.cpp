#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "littab/text.hpp"

using namespace littab;

TEST_CASE("trim and whitespace normalization") {
    CHECK(trim("  a b  ") == "a b");
    CHECK(trim("\t\n") == "");
    CHECK(trim("") == "");
    CHECK(normalize_ws("  Data   set \tname ") == "Data set name");
    CHECK(normalize_ws("Dataset") == "Dataset");
    CHECK(normalize_ws("") == "");
}

TEST_CASE("content tokens drop stop words and punctuation") {
    const auto toks = content_tokens("The Quick, quick brown-fox jumps over a lazy dog!");
    CHECK(toks == std::set<std::string>{"brown", "dog", "fox", "jumps", "lazy", "quick"});
    CHECK(content_tokens("of the and").empty());
    CHECK(content_tokens("GPT-4o scores 88.7").count("4o") == 1);
}

TEST_CASE("approximate token count is ceil(chars/4)") {
    CHECK(approx_tokens("") == 0);
    CHECK(approx_tokens("abc") == 1);
    CHECK(approx_tokens("abcd") == 1);
    CHECK(approx_tokens("abcde") == 2);
    CHECK(approx_tokens(std::string(4000, 'x')) == 1000);
}

TEST_CASE("truncate_middle keeps head and tail") {
    const std::string text(100, 'a');
    CHECK(truncate_middle(text, 200) == text);
    const std::string cut = truncate_middle(text + std::string(100, 'b'), 80);
    CHECK(cut.size() <= 80);
    CHECK(cut.front() == 'a');
    CHECK(cut.back() == 'b');
    CHECK(cut.find("truncated") != std::string::npos);
}

TEST_CASE("cap_words stops at the word budget") {
    CHECK(cap_words("one two three four", 2) == "one two");
    CHECK(cap_words("one two", 5) == "one two");
    CHECK(cap_words("", 3) == "");
    // 300-word cap used for key information extraction
    std::string text;
    for (int i = 0; i < 400; ++i) text += "w" + std::to_string(i) + " ";
    std::istringstream counted(cap_words(text, 300));
    std::string w;
    std::size_t n = 0;
    while (counted >> w) ++n;
    CHECK(n == 300);
}

TEST_CASE("starts_with_yes accepts yes prefixes only as whole words") {
    CHECK(starts_with_yes("yes"));
    CHECK(starts_with_yes("Yes, it is."));
    CHECK(starts_with_yes("  YES."));
    CHECK_FALSE(starts_with_yes("yesterday it was"));
    CHECK_FALSE(starts_with_yes("no"));
    CHECK_FALSE(starts_with_yes(""));
    CHECK_FALSE(starts_with_yes("the answer is yes"));
}

TEST_CASE("stable_hash and mix_seed are stable across runs") {
    CHECK(stable_hash("") == 14695981039346656037ull);  // FNV-1a offset basis
    CHECK(stable_hash("a") == stable_hash("a"));
    CHECK(stable_hash("a") != stable_hash("b"));
    CHECK(mix_seed(1, 2) == mix_seed(1, 2));
    CHECK(mix_seed(1, 2) != mix_seed(1, 3));
    CHECK(mix_seed(1, 2) != mix_seed(2, 2));
}

TEST_CASE("uniform_below is unbiased over small ranges") {
    std::mt19937_64 rng(7);
    std::map<std::uint64_t, std::size_t> counts;
    const std::size_t draws = 80000;
    for (std::size_t i = 0; i < draws; ++i) ++counts[uniform_below(rng, 8)];
    REQUIRE(counts.size() == 8);
    // chi-square, 7 dof, 0.001 critical value 24.32
    const double expected = draws / 8.0;
    double chi2 = 0.0;
    for (const auto& [v, c] : counts) {
        CHECK(v < 8);
        chi2 += (c - expected) * (c - expected) / expected;
    }
    CHECK(chi2 < 24.32);
    CHECK_THROWS_AS(uniform_below(rng, 0), std::invalid_argument);
}

TEST_CASE("uniform_in covers inclusive bounds") {
    std::mt19937_64 rng(3);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 200; ++i) seen.insert(uniform_in(rng, 3, 5));
    CHECK(seen == std::set<std::uint64_t>{3, 4, 5});
    CHECK(uniform_in(rng, 9, 9) == 9);
    CHECK_THROWS_AS(uniform_in(rng, 5, 4), std::invalid_argument);
}

TEST_CASE("deterministic_shuffle permutes and replays identically") {
    std::vector<int> a{1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<int> b = a;
    std::mt19937_64 r1(11), r2(11);
    deterministic_shuffle(a, r1);
    deterministic_shuffle(b, r2);
    CHECK(a == b);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9});
}
