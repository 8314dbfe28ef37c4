#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "littab/corpus.hpp"
#include "littab/errors.hpp"
#include "littab/llm_gateway.hpp"
#include "littab/text.hpp"
#include "littab/transport.hpp"

namespace littab {

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string id() const = 0;
    virtual std::string model() const = 0;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

// Deterministic local embedding: hashed bag of content tokens, L2-normalized.
// Shared vocabulary drives similarity, which is all that retrieval and
// distractor ranking need in offline runs.
class HashEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HashEmbeddingProvider(std::size_t dim = 256) : dim_(dim) {}

    std::string id() const override { return "hash-local"; }
    std::string model() const override { return "hash-" + std::to_string(dim_); }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed_one(t));
        return out;
    }

private:
    std::vector<double> embed_one(const std::string& text) const {
        std::vector<double> v(dim_, 0.0);
        std::string token;
        auto flush = [&] {
            if (token.empty()) return;
            const std::uint64_t h = stable_hash(token);
            v[h % dim_] += (h >> 32) % 2 == 0 ? 1.0 : -1.0;
            token.clear();
        };
        for (char c : text) {
            if (std::isalnum(static_cast<unsigned char>(c)))
                token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            else
                flush();
        }
        flush();
        const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (norm > 0.0)
            for (auto& x : v) x /= norm;
        return v;
    }

    std::size_t dim_;
};

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || a.size() != b.size())
        throw EmbeddingError("cosine: dimension mismatch " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw EmbeddingError("cosine: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// s(d) = cos(F(d), F(demand)) + (1/m) * sum_j cos(F(d), F(u_j)).
inline double distractor_score(const std::vector<double>& candidate,
                               const std::vector<double>& demand,
                               const std::vector<std::vector<double>>& referenced) {
    if (referenced.empty()) throw EmbeddingError("distractor_score: no referenced papers");
    double s = cosine(candidate, demand);
    double rel_sum = 0.0;
    for (const auto& r : referenced) rel_sum += cosine(candidate, r);
    return s + rel_sum / static_cast<double>(referenced.size());
}

// Caching front for an embedding provider. Same disk format as the chat
// cache: checksummed JSON, one file per key.
class EmbeddingGateway {
public:
    EmbeddingGateway(std::shared_ptr<EmbeddingProvider> provider, GatewayConfig cfg)
        : provider_(std::move(provider)), cfg_(std::move(cfg)) {
        if (!cfg_.cache_dir.empty()) cache_.emplace(cfg_.cache_dir);
    }

    std::string key_for(const std::string& text) const {
        const nlohmann::json payload = {{"provider", provider_->id()},
                                        {"model", provider_->model()},
                                        {"kind", "embedding"},
                                        {"input", text}};
        return sha256_hex(payload.dump());
    }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) {
        std::vector<std::vector<double>> out(texts.size());
        std::vector<std::size_t> missing;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            if (texts[i].empty()) throw EmbeddingError("cannot embed empty text");
            trace_.requests.fetch_add(1);
            if (!cache_) {
                missing.push_back(i);
                continue;
            }
            if (auto hit = cache_->get(key_for(texts[i]))) {
                trace_.cache_hits.fetch_add(1);
                out[i] = nlohmann::json::parse(*hit).get<std::vector<double>>();
            } else {
                missing.push_back(i);
            }
        }
        if (!missing.empty()) {
            std::vector<std::string> batch;
            batch.reserve(missing.size());
            for (auto i : missing) batch.push_back(texts[i]);
            std::mt19937_64 rng(cfg_.seed);
            const auto vecs = with_retry(
                [&] {
                    trace_.provider_calls.fetch_add(1);
                    return provider_->embed(batch);
                },
                cfg_.retry, rng, cfg_.sleep);
            if (vecs.size() != batch.size())
                throw EmbeddingError("embedding batch size mismatch");
            for (std::size_t k = 0; k < missing.size(); ++k) {
                out[missing[k]] = vecs[k];
                if (cache_) cache_->put(key_for(batch[k]), nlohmann::json(vecs[k]).dump());
            }
        }
        // Dimension is discovered on the first vector and pinned for the run.
        for (const auto& v : out) {
            if (dim_ == 0) dim_ = v.size();
            if (v.empty() || v.size() != dim_)
                throw EmbeddingError("embedding dimension drift: expected " +
                                     std::to_string(dim_) + ", got " + std::to_string(v.size()));
            for (double x : v)
                if (!std::isfinite(x)) throw EmbeddingError("non-finite embedding entry");
        }
        return out;
    }

    std::vector<double> embed_one(const std::string& text) { return embed({text})[0]; }

    const GatewayTrace& trace() const { return trace_; }

private:
    std::shared_ptr<EmbeddingProvider> provider_;
    GatewayConfig cfg_;
    std::optional<ResponseCache> cache_;
    GatewayTrace trace_;
    std::size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// Distractor ranking

struct RankedCandidate {
    std::string paper_id;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based
};

// Scores every non-relevant paper in the corpus against one instance with
// distractor_score, where F embeds a paper's title + " " + abstract and the
// referenced papers are the instance's relevant set. Returns the top_k
// highest scores; equal scores order by ascending paper id. Pools smaller
// than top_k come back whole.
inline std::vector<RankedCandidate> rank_distractors(const Corpus& corpus,
                                                     const BenchmarkInstance& inst,
                                                     EmbeddingGateway& gw,
                                                     std::size_t top_k = 10) {
    std::vector<std::string> pool;
    for (const auto& p : corpus.papers)
        if (!inst.is_relevant(p.id)) pool.push_back(p.id);
    if (pool.empty()) return {};

    std::vector<std::string> texts;
    texts.reserve(1 + inst.relevant_ids.size() + pool.size());
    texts.push_back(inst.table.user_demand);
    for (const auto& id : inst.relevant_ids) texts.push_back(corpus.paper(id).title_abstract());
    for (const auto& id : pool) texts.push_back(corpus.paper(id).title_abstract());
    const auto vecs = gw.embed(texts);

    const std::size_t m = inst.relevant_ids.size();
    const std::vector<std::vector<double>> referenced(vecs.begin() + 1, vecs.begin() + 1 + m);
    std::vector<RankedCandidate> scored;
    scored.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
        scored.push_back({pool[i], distractor_score(vecs[1 + m + i], vecs[0], referenced), 0});
    std::sort(scored.begin(), scored.end(), [](const RankedCandidate& a,
                                               const RankedCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.paper_id < b.paper_id;
    });
    if (scored.size() > top_k) scored.resize(top_k);
    for (std::size_t i = 0; i < scored.size(); ++i) scored[i].rank = i + 1;
    return scored;
}

// Draws how many of the ranked distractors join the candidate set: count
// uniform on [min(m,10), min(10, |ranked|)], then takes that prefix.
// Tables with more than 10 rows cap the lower bound at 10, matching the
// verified corpus bound.
inline std::vector<std::string> simulate_distractor_selection(
    const std::vector<RankedCandidate>& ranked, std::size_t m, std::mt19937_64& rng) {
    const std::size_t lo = std::min<std::size_t>(m, 10);
    const std::size_t hi = std::min<std::size_t>(ranked.size(), 10);
    if (lo > hi)
        throw CorpusError("cannot draw " + std::to_string(lo) + " distractors from " +
                          std::to_string(ranked.size()) + " ranked candidates");
    const std::size_t c = static_cast<std::size_t>(uniform_in(rng, lo, hi));
    std::vector<std::string> out;
    out.reserve(c);
    for (std::size_t i = 0; i < c; ++i) out.push_back(ranked[i].paper_id);
    return out;
}

// ---------------------------------------------------------------------------
// Retrieval simulation curve

struct CurvePoint {
    std::size_t k = 0;
    double precision = 0.0;
    double recall = 0.0;
};

// Ranks the whole paper set against one instance's demand by embedding
// similarity (ties by ascending id) and reads precision/recall off each
// requested cutoff.
inline std::vector<CurvePoint> retrieval_curve(const Corpus& corpus,
                                               const BenchmarkInstance& inst,
                                               EmbeddingGateway& gw,
                                               const std::vector<std::size_t>& ks) {
    if (ks.empty() || ks.front() < 1 || !std::is_sorted(ks.begin(), ks.end()))
        throw ConfigError("retrieval cutoffs must be sorted and >= 1");
    if (ks.back() > corpus.papers.size())
        throw ConfigError("retrieval cutoff " + std::to_string(ks.back()) +
                          " exceeds corpus size " + std::to_string(corpus.papers.size()));

    std::vector<std::string> texts;
    texts.reserve(corpus.papers.size() + 1);
    texts.push_back(inst.table.user_demand);
    for (const auto& p : corpus.papers) texts.push_back(p.title_abstract());
    const auto vecs = gw.embed(texts);

    std::vector<std::pair<double, std::string>> ranked;
    ranked.reserve(corpus.papers.size());
    for (std::size_t i = 0; i < corpus.papers.size(); ++i)
        ranked.emplace_back(cosine(vecs[1 + i], vecs[0]), corpus.papers[i].id);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    std::vector<CurvePoint> out;
    out.reserve(ks.size());
    std::size_t hits = 0, scanned = 0;
    for (std::size_t k : ks) {
        for (; scanned < k; ++scanned)
            if (inst.is_relevant(ranked[scanned].second)) ++hits;
        out.push_back({k, static_cast<double>(hits) / static_cast<double>(k),
                       static_cast<double>(hits) / static_cast<double>(inst.m())});
    }
    return out;
}

// Macro-average of the per-instance curves over the whole corpus.
inline std::vector<CurvePoint> averaged_retrieval_curve(const Corpus& corpus,
                                                        EmbeddingGateway& gw,
                                                        const std::vector<std::size_t>& ks) {
    if (corpus.instances.empty()) throw CorpusError("empty corpus");
    std::vector<CurvePoint> avg(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) avg[i].k = ks[i];
    for (const auto& inst : corpus.instances) {
        const auto curve = retrieval_curve(corpus, inst, gw, ks);
        for (std::size_t i = 0; i < ks.size(); ++i) {
            avg[i].precision += curve[i].precision;
            avg[i].recall += curve[i].recall;
        }
    }
    const double n = static_cast<double>(corpus.instances.size());
    for (auto& pt : avg) {
        pt.precision /= n;
        pt.recall /= n;
    }
    return avg;
}

}  // namespace littab
