#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <map>

#include "littab/embedding.hpp"

using namespace littab;
using Catch::Matchers::WithinAbs;

namespace {

const std::filesystem::path kFixtures = LITTAB_FIXTURE_DIR;

// Embeddings scripted per text, with a deterministic pseudo-random unit
// vector as fallback. Lets tests pin exact similarity structure.
class ScriptedEmbeddingProvider : public EmbeddingProvider {
public:
    explicit ScriptedEmbeddingProvider(std::size_t dim = 16) : dim_(dim) {}

    void set(const std::string& text, std::vector<double> v) { table_[text] = std::move(v); }

    std::string id() const override { return "scripted"; }
    std::string model() const override { return "scripted-" + std::to_string(dim_); }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        ++calls;
        std::vector<std::vector<double>> out;
        for (const auto& t : texts) {
            auto it = table_.find(t);
            out.push_back(it != table_.end() ? it->second : fallback(t));
        }
        return out;
    }

    std::vector<double> fallback(const std::string& text) const {
        std::mt19937_64 rng(stable_hash(text));
        std::vector<double> v(dim_);
        double norm2 = 0.0;
        for (auto& x : v) {
            // map to (-1, 1); exact distribution is irrelevant
            x = static_cast<double>(rng()) / static_cast<double>(UINT64_MAX) * 2.0 - 1.0;
            norm2 += x * x;
        }
        for (auto& x : v) x /= std::sqrt(norm2);
        return v;
    }

    int calls = 0;

private:
    std::size_t dim_;
    std::map<std::string, std::vector<double>> table_;
};

// Unit 2-vector whose cosine against (1,0) equals c.
std::vector<double> with_cos(double c) { return {c, std::sqrt(1.0 - c * c)}; }

GatewayConfig no_cache_cfg() {
    GatewayConfig cfg;
    cfg.cache_dir.clear();
    cfg.sleep = [](std::chrono::milliseconds) {};
    return cfg;
}

}  // namespace

TEST_CASE("hash embeddings are deterministic unit vectors") {
    HashEmbeddingProvider p(64);
    CHECK(p.id() == "hash-local");
    CHECK(p.model() == "hash-64");
    const auto v = p.embed({"Neural machine translation systems", "Neural machine translation systems"});
    REQUIRE(v.size() == 2);
    REQUIRE(v[0].size() == 64);
    CHECK(v[0] == v[1]);
    double norm2 = 0.0;
    for (double x : v[0]) norm2 += x * x;
    CHECK_THAT(norm2, WithinAbs(1.0, 1e-12));
    // shared vocabulary raises similarity above an unrelated text
    HashEmbeddingProvider big(4096);
    const auto w = big.embed({"neural machine translation quality",
                              "machine translation for low resource languages",
                              "cardiac magnetic resonance segmentation"});
    CHECK(cosine(w[0], w[1]) > cosine(w[0], w[2]));
}

TEST_CASE("cosine similarity matches the textbook value") {
    const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
    CHECK_THAT(cosine(a, b), WithinAbs(32.0 / (std::sqrt(14.0) * std::sqrt(77.0)), 1e-12));
    CHECK_THAT(cosine(a, a), WithinAbs(1.0, 1e-12));
    CHECK_THAT(cosine({1, 0}, {0, 1}), WithinAbs(0.0, 1e-12));
    CHECK_THAT(cosine({1, 0}, {-2, 0}), WithinAbs(-1.0, 1e-12));
    // scale invariance
    CHECK_THAT(cosine({2, 4, 6}, {12, 15, 18}) - cosine(a, b), WithinAbs(0.0, 1e-12));
    CHECK_THROWS_AS(cosine(a, {1, 2}), EmbeddingError);
    CHECK_THROWS_AS(cosine({}, {}), EmbeddingError);
    CHECK_THROWS_AS(cosine({0, 0}, {1, 1}), EmbeddingError);  // zero norm is a hard error
    CHECK_THROWS_AS(cosine({1, 1}, {0, 0}), EmbeddingError);
}

TEST_CASE("distractor score adds demand and mean relevant similarity") {
    const std::vector<double> cand{1, 0};
    const double s = distractor_score(cand, with_cos(0.5),
                                      {with_cos(0.2), with_cos(0.4), with_cos(0.6)});
    CHECK_THAT(s, WithinAbs(0.5 + (0.2 + 0.4 + 0.6) / 3.0, 1e-12));
    CHECK_THROWS_AS(distractor_score(cand, with_cos(0.5), {}), EmbeddingError);
}

TEST_CASE("embedding gateway caches per text and pins dimensions") {
    const auto dir = std::filesystem::temp_directory_path() / "littab_embed_cache";
    std::filesystem::remove_all(dir);
    auto provider = std::make_shared<ScriptedEmbeddingProvider>(8);
    GatewayConfig cfg = no_cache_cfg();
    cfg.cache_dir = dir;
    EmbeddingGateway gw(provider, cfg);

    const auto first = gw.embed({"alpha", "beta"});
    CHECK(provider->calls == 1);
    const auto second = gw.embed({"beta", "gamma", "alpha"});
    // only gamma misses; alpha and beta come from cache
    CHECK(provider->calls == 2);
    CHECK(second[0] == first[1]);
    CHECK(second[2] == first[0]);
    CHECK(gw.trace().cache_hits.load() == 2);
    CHECK(gw.trace().requests.load() == 5);

    CHECK_THROWS_AS(gw.embed({""}), EmbeddingError);

    // a second gateway over the same directory sees the cached vectors
    EmbeddingGateway gw2(provider, cfg);
    gw2.embed({"alpha", "gamma"});
    CHECK(provider->calls == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("embedding gateway rejects dimension drift and non-finite entries") {
    class DriftingProvider : public EmbeddingProvider {
    public:
        std::string id() const override { return "drift"; }
        std::string model() const override { return "drift"; }
        std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
            std::vector<std::vector<double>> out;
            for (const auto& t : texts) {
                if (t == "short") out.push_back({1.0});
                else if (t == "nan") out.push_back({std::nan(""), 0.0});
                else out.push_back({1.0, 0.0});
            }
            return out;
        }
    };
    EmbeddingGateway gw(std::make_shared<DriftingProvider>(), no_cache_cfg());
    CHECK(gw.embed_one("ok").size() == 2);
    CHECK_THROWS_AS(gw.embed({"ok", "short"}), EmbeddingError);
    CHECK_THROWS_AS(gw.embed({"nan"}), EmbeddingError);
}

TEST_CASE("distractor ranking matches a brute-force oracle") {
    // synthetic corpus: 20 papers, demand, scripted fallback embeddings
    Corpus corpus;
    for (int i = 0; i < 20; ++i) {
        Paper p;
        p.id = "p" + std::to_string(i + 10);
        p.title = "title " + std::to_string(i);
        p.abstract_text = "abstract " + std::to_string(i);
        corpus.papers.push_back(p);
    }
    corpus.rebuild_index();
    BenchmarkInstance inst;
    inst.table.table_id = "S";
    inst.table.user_demand = "the demand text";
    inst.relevant_ids = {"p10", "p15", "p23"};
    for (const auto& id : inst.relevant_ids)
        inst.table.rows[id]["A"] = "x";

    auto provider = std::make_shared<ScriptedEmbeddingProvider>(16);
    EmbeddingGateway gw(provider, no_cache_cfg());
    const auto ranked = rank_distractors(corpus, inst, gw, 10);
    REQUIRE(ranked.size() == 10);

    // independent scorer straight from the formula
    const auto demand_v = provider->fallback(inst.table.user_demand);
    std::vector<std::vector<double>> rel;
    for (const auto& id : inst.relevant_ids)
        rel.push_back(provider->fallback(corpus.paper(id).title_abstract()));
    std::vector<std::pair<double, std::string>> expected;
    for (const auto& p : corpus.papers) {
        if (std::find(inst.relevant_ids.begin(), inst.relevant_ids.end(), p.id) !=
            inst.relevant_ids.end())
            continue;
        const auto v = provider->fallback(p.title_abstract());
        double s = cosine(v, demand_v);
        double sum = 0.0;
        for (const auto& r : rel) sum += cosine(v, r);
        expected.emplace_back(s + sum / 3.0, p.id);
    }
    std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        CHECK(ranked[i].paper_id == expected[i].second);
        CHECK_THAT(ranked[i].score, WithinAbs(expected[i].first, 1e-12));
        CHECK(ranked[i].rank == i + 1);
    }
}

TEST_CASE("equal distractor scores break ties by ascending paper id") {
    Corpus corpus;
    for (const std::string& id : {"z9", "a1", "m5", "rel"}) {
        Paper p;
        p.id = id;
        p.title = id == "rel" ? "relevant topic" : "identical candidate text";
        p.abstract_text = "same";
        corpus.papers.push_back(p);
    }
    corpus.rebuild_index();
    BenchmarkInstance inst;
    inst.table.user_demand = "a demand";
    inst.relevant_ids = {"rel"};
    inst.table.rows["rel"]["A"] = "x";

    auto provider = std::make_shared<ScriptedEmbeddingProvider>(8);
    EmbeddingGateway gw(provider, no_cache_cfg());
    const auto ranked = rank_distractors(corpus, inst, gw, 10);
    REQUIRE(ranked.size() == 3);  // pool smaller than top_k comes back whole
    CHECK(ranked[0].paper_id == "a1");
    CHECK(ranked[1].paper_id == "m5");
    CHECK(ranked[2].paper_id == "z9");
    CHECK_THAT(ranked[0].score, WithinAbs(ranked[2].score, 1e-15));
}

TEST_CASE("distractor count simulation is uniform over its bounds") {
    std::vector<RankedCandidate> ranked;
    for (int i = 0; i < 10; ++i) ranked.push_back({"d" + std::to_string(i), 1.0 - i * 0.01, 0u});

    std::map<std::size_t, std::size_t> counts;
    const std::size_t draws = 10000;
    for (std::uint64_t seed = 0; seed < draws; ++seed) {
        std::mt19937_64 rng(seed);
        const auto sel = simulate_distractor_selection(ranked, 3, rng);
        REQUIRE(sel.size() >= 3);
        REQUIRE(sel.size() <= 10);
        // the selection is always a prefix of the ranking
        for (std::size_t i = 0; i < sel.size(); ++i) CHECK(sel[i] == ranked[i].paper_id);
        ++counts[sel.size()];
    }
    REQUIRE(counts.size() == 8);  // {3..10}
    const double expected = draws / 8.0;
    double chi2 = 0.0;
    for (const auto& [_, c] : counts)
        chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 24.32);  // 7 dof at 0.001

    // m larger than the ranked pool cannot be satisfied
    std::mt19937_64 rng(1);
    std::vector<RankedCandidate> two(ranked.begin(), ranked.begin() + 2);
    CHECK_THROWS_AS(simulate_distractor_selection(two, 5, rng), CorpusError);
    // m > 10 clamps to the verified bound instead of failing
    const auto sel = simulate_distractor_selection(ranked, 25, rng);
    CHECK(sel.size() == 10);
}

TEST_CASE("retrieval curve is monotone and validated") {
    const Corpus c = load_corpus(kFixtures / "corpus3");
    EmbeddingGateway gw(std::make_shared<HashEmbeddingProvider>(512), no_cache_cfg());

    const std::vector<std::size_t> ks{2, 3, 5, 10};
    const auto curve = retrieval_curve(c, c.instances[0], gw, ks);
    REQUIRE(curve.size() == ks.size());
    for (std::size_t i = 0; i + 1 < curve.size(); ++i)
        CHECK(curve[i].recall <= curve[i + 1].recall);
    CHECK_THAT(curve.back().recall, WithinAbs(1.0, 1e-12));  // k = corpus size finds all

    CHECK_THROWS_AS(retrieval_curve(c, c.instances[0], gw, {}), ConfigError);
    CHECK_THROWS_AS(retrieval_curve(c, c.instances[0], gw, {0, 2}), ConfigError);
    CHECK_THROWS_AS(retrieval_curve(c, c.instances[0], gw, {5, 2}), ConfigError);
    CHECK_THROWS_AS(retrieval_curve(c, c.instances[0], gw, {11}), ConfigError);

    const auto avg = averaged_retrieval_curve(c, gw, ks);
    REQUIRE(avg.size() == ks.size());
    double sum = 0.0;
    for (const auto& inst : c.instances)
        sum += retrieval_curve(c, inst, gw, ks)[1].recall;
    CHECK_THAT(avg[1].recall, WithinAbs(sum / 3.0, 1e-12));
}

TEST_CASE("adversarial embeddings give precision one up to m") {
    Corpus corpus;
    auto provider = std::make_shared<ScriptedEmbeddingProvider>(4);
    for (int i = 0; i < 12; ++i) {
        Paper p;
        p.id = (i < 3 ? "r" : "d") + std::to_string(i);
        p.title = "t" + std::to_string(i);
        p.abstract_text = "a" + std::to_string(i);
        corpus.papers.push_back(p);
        // relevant papers share the demand direction exactly
        provider->set(p.title_abstract(),
                      i < 3 ? std::vector<double>{1, 0, 0, 0} : provider->fallback(p.id));
    }
    corpus.rebuild_index();
    BenchmarkInstance inst;
    inst.table.user_demand = "the exact demand";
    provider->set(inst.table.user_demand, {1, 0, 0, 0});
    inst.relevant_ids = {"r0", "r1", "r2"};
    for (const auto& id : inst.relevant_ids) inst.table.rows[id]["A"] = "x";

    EmbeddingGateway gw(provider, no_cache_cfg());
    const auto curve = retrieval_curve(corpus, inst, gw, {1, 2, 3, 6});
    CHECK_THAT(curve[0].precision, WithinAbs(1.0, 1e-12));
    CHECK_THAT(curve[1].precision, WithinAbs(1.0, 1e-12));
    CHECK_THAT(curve[2].precision, WithinAbs(1.0, 1e-12));
    CHECK_THAT(curve[2].recall, WithinAbs(1.0, 1e-12));
    CHECK_THAT(curve[3].precision, WithinAbs(0.5, 1e-12));
}
