#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "littab/errors.hpp"
#include "littab/sha256.hpp"
#include "littab/text.hpp"
#include "littab/transport.hpp"

namespace littab {

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.5;
    std::size_t max_output = 0;  // output token budget; 0 = provider default
    // Routing label for mocks and per-stage accounting; not part of the wire
    // payload or the cache key.
    std::string tag;

    std::size_t prompt_chars() const {
        std::size_t n = 0;
        for (const auto& m : messages) n += m.content.size();
        return n;
    }
};

enum class FinishReason { complete, truncated, error };

inline const char* to_string(FinishReason r) {
    switch (r) {
        case FinishReason::complete: return "complete";
        case FinishReason::truncated: return "truncated";
        default: return "error";
    }
}

inline FinishReason finish_reason_from_string(const std::string& s) {
    if (s == "complete") return FinishReason::complete;
    if (s == "truncated") return FinishReason::truncated;
    return FinishReason::error;
}

struct ChatResponse {
    std::string content;
    FinishReason finish_reason = FinishReason::complete;
    std::uint64_t usage_in = 0;
    std::uint64_t usage_out = 0;

    nlohmann::json to_json() const {
        return {{"content", content},
                {"finish_reason", to_string(finish_reason)},
                {"usage_in", usage_in},
                {"usage_out", usage_out}};
    }

    static ChatResponse from_json(const nlohmann::json& j) {
        ChatResponse r;
        r.content = j.at("content").get<std::string>();
        r.finish_reason = finish_reason_from_string(j.at("finish_reason").get<std::string>());
        r.usage_in = j.value("usage_in", std::uint64_t{0});
        r.usage_out = j.value("usage_out", std::uint64_t{0});
        return r;
    }
};

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string id() const = 0;
    // Throws GatewayError; transient kinds are retried by the gateway.
    virtual ChatResponse complete(const ChatRequest& req) = 0;
};

// ---------------------------------------------------------------------------
// Scripted in-process provider

struct MockRule {
    std::string tag;              // "" matches any tag
    std::string content_pattern;  // ECMAScript regex over the joined prompt; "" matches all
    std::function<std::string(const ChatRequest&)> respond;
    int failures_before_success = 0;
    FailKind fail_kind = FailKind::transient;
};

class MockChatProvider : public ChatProvider {
public:
    explicit MockChatProvider(std::string id = "mock") : id_(std::move(id)) {}

    std::string id() const override { return id_; }

    void add_rule(MockRule rule) {
        std::lock_guard<std::mutex> lock(mu_);
        rules_.push_back(std::move(rule));
    }

    // 0 = unlimited. Measured in prompt characters, matching the gateway's
    // chars/4 token approximation.
    void set_context_window_chars(std::size_t n) { context_window_chars_ = n; }
    void set_latency(std::chrono::milliseconds d) { latency_ = d; }

    ChatResponse complete(const ChatRequest& req) override {
        calls_.fetch_add(1);
        const int now = in_flight_.fetch_add(1) + 1;
        int seen = max_in_flight_.load();
        while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
        }
        struct Guard {
            std::atomic<int>& c;
            ~Guard() { c.fetch_sub(1); }
        } guard{in_flight_};

        if (latency_.count() > 0) std::this_thread::sleep_for(latency_);

        if (context_window_chars_ > 0 && req.prompt_chars() > context_window_chars_)
            throw GatewayError(FailKind::context_overflow,
                               "prompt exceeds context window (" +
                                   std::to_string(req.prompt_chars()) + " > " +
                                   std::to_string(context_window_chars_) + " chars)");

        std::string joined;
        for (const auto& m : req.messages) {
            joined += m.content;
            joined += '\n';
        }

        std::lock_guard<std::mutex> lock(mu_);
        ++tag_calls_[req.tag];
        for (auto& rule : rules_) {
            if (!rule.tag.empty() && rule.tag != req.tag) continue;
            if (!rule.content_pattern.empty() &&
                !std::regex_search(joined, std::regex(rule.content_pattern)))
                continue;
            if (rule.failures_before_success > 0) {
                --rule.failures_before_success;
                throw GatewayError(rule.fail_kind, "scripted failure for tag '" + req.tag + "'");
            }
            ChatResponse resp;
            resp.content = rule.respond(req);
            resp.usage_in = approx_tokens(joined);
            resp.usage_out = approx_tokens(resp.content);
            return resp;
        }
        throw GatewayError(FailKind::protocol, "no mock rule matches tag '" + req.tag + "'");
    }

    int calls() const { return calls_.load(); }
    int max_in_flight() const { return max_in_flight_.load(); }
    int calls_for_tag(const std::string& tag) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = tag_calls_.find(tag);
        return it == tag_calls_.end() ? 0 : it->second;
    }

private:
    std::string id_;
    mutable std::mutex mu_;
    std::vector<MockRule> rules_;
    std::map<std::string, int> tag_calls_;
    std::size_t context_window_chars_ = 0;
    std::chrono::milliseconds latency_{0};
    std::atomic<int> calls_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
};

// ---------------------------------------------------------------------------
// On-disk response cache

// One file per key under dir/<first2>/<sha256>.json. Each file carries a
// checksum of its payload; a mismatch or unparsable file counts as a miss
// and is deleted so the slot can be refilled.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    static std::string key_for(const std::string& provider_id, const ChatRequest& req,
                               const std::string& salt) {
        nlohmann::json messages = nlohmann::json::array();
        for (const auto& m : req.messages)
            messages.push_back({{"role", m.role}, {"content", m.content}});
        const nlohmann::json payload = {{"provider", provider_id},
                                        {"model", req.model},
                                        {"temperature", req.temperature},
                                        {"salt", salt},
                                        {"messages", messages}};
        return sha256_hex(payload.dump());
    }

    std::optional<std::string> get(const std::string& key) const {
        const auto path = path_for(key);
        std::ifstream in(path, std::ios::binary);
        if (!in) return std::nullopt;
        std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        try {
            const auto j = nlohmann::json::parse(raw);
            const std::string content = j.at("content").get<std::string>();
            if (j.at("checksum").get<std::string>() != sha256_hex(content))
                throw CacheCorrupt{};
            return content;
        } catch (...) {
            std::error_code ec;
            std::filesystem::remove(path, ec);
            return std::nullopt;
        }
    }

    void put(const std::string& key, const std::string& content) const {
        const auto path = path_for(key);
        std::filesystem::create_directories(path.parent_path());
        const nlohmann::json j = {{"key", key},
                                  {"content", content},
                                  {"checksum", sha256_hex(content)}};
        // Atomic publish: write beside the target, then rename over it.
        const auto tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out << j.dump();
            if (!out) throw GatewayError(FailKind::cache, "cache write failed: " + tmp);
        }
        std::filesystem::rename(tmp, path);
    }

    std::filesystem::path path_for(const std::string& key) const {
        return dir_ / key.substr(0, 2) / (key + ".json");
    }

private:
    struct CacheCorrupt {};
    std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Gateway: cache + retry + bounded concurrency, input-order results

struct GatewayConfig {
    RetryPolicy retry;
    std::size_t max_in_flight = 4;
    std::filesystem::path cache_dir;  // empty = no cache
    std::string cache_salt;           // distinguishes repetitions of one run
    std::uint64_t seed = 0;           // jitter rng
    SleepFn sleep = default_sleep;
};

struct GatewayTrace {
    std::atomic<std::uint64_t> requests{0};  // logical requests, cache hits included
    std::atomic<std::uint64_t> cache_hits{0};
    std::atomic<std::uint64_t> provider_calls{0};

    nlohmann::json to_json() const {
        return {{"requests", requests.load()},
                {"cache_hits", cache_hits.load()},
                {"provider_calls", provider_calls.load()}};
    }
};

class LlmGateway {
public:
    // (request, cache key, response); invoked once per logical request,
    // cache hits included. Must be thread-safe.
    using Recorder =
        std::function<void(const ChatRequest&, const std::string&, const ChatResponse&)>;

    LlmGateway(std::shared_ptr<ChatProvider> provider, GatewayConfig cfg)
        : provider_(std::move(provider)), cfg_(std::move(cfg)) {
        if (!cfg_.cache_dir.empty()) cache_.emplace(cfg_.cache_dir);
    }

    const GatewayTrace& trace() const { return trace_; }
    ChatProvider& provider() { return *provider_; }
    void set_recorder(Recorder r) { recorder_ = std::move(r); }

    ChatResponse chat(const ChatRequest& req) {
        trace_.requests.fetch_add(1);
        const std::string key = ResponseCache::key_for(provider_->id(), req, cfg_.cache_salt);
        if (cache_) {
            if (auto hit = cache_->get(key)) {
                trace_.cache_hits.fetch_add(1);
                ChatResponse resp = ChatResponse::from_json(nlohmann::json::parse(*hit));
                if (recorder_) recorder_(req, key, resp);
                return resp;
            }
        }
        std::mt19937_64 rng(mix_seed(cfg_.seed, jitter_counter_.fetch_add(1)));
        const ChatResponse resp = with_retry(
            [&] {
                trace_.provider_calls.fetch_add(1);
                return provider_->complete(req);
            },
            cfg_.retry, rng, cfg_.sleep);
        if (cache_) cache_->put(key, resp.to_json().dump());
        if (recorder_) recorder_(req, key, resp);
        return resp;
    }

    // Issues the whole batch with bounded in-flight concurrency; the result
    // vector lines up with the request vector.
    std::vector<ChatResponse> chat_batch(const std::vector<ChatRequest>& reqs) {
        return parallel_map<ChatResponse>(reqs.size(), cfg_.max_in_flight,
                                          [&](std::size_t i) { return chat(reqs[i]); });
    }

private:
    std::shared_ptr<ChatProvider> provider_;
    GatewayConfig cfg_;
    std::optional<ResponseCache> cache_;
    GatewayTrace trace_;
    Recorder recorder_;
    std::atomic<std::uint64_t> jitter_counter_{0};
};

}  // namespace littab
