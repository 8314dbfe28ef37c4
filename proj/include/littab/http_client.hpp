#pragma once

// OpenAI-compatible chat and embedding providers over HTTP. The consuming
// target decides whether TLS is available by defining
// CPPHTTPLIB_OPENSSL_SUPPORT before this header is included.

#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "littab/embedding.hpp"
#include "littab/errors.hpp"
#include "littab/llm_gateway.hpp"

namespace littab {

struct HttpEndpoint {
    std::string origin;       // scheme://host[:port]
    std::string path_prefix;  // e.g. /v1
};

inline HttpEndpoint split_base_url(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("base_url must include a scheme: " + base_url);
    const auto path_start = base_url.find('/', scheme_end + 3);
    HttpEndpoint ep;
    if (path_start == std::string::npos) {
        ep.origin = base_url;
    } else {
        ep.origin = base_url.substr(0, path_start);
        ep.path_prefix = base_url.substr(path_start);
        while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/')
            ep.path_prefix.pop_back();
    }
    return ep;
}

inline std::string api_key_from_env(const std::string& env_name) {
    if (env_name.empty()) return "";
    const char* v = std::getenv(env_name.c_str());
    return v ? v : "";
}

namespace detail {

inline bool contains_ci(const std::string& haystack, const std::string& needle) {
    return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

[[noreturn]] inline void throw_http_error(const std::string& what, int status,
                                          const std::string& body) {
    const std::string msg =
        what + ": HTTP " + std::to_string(status) + " " + truncate_middle(body, 500);
    if (status == 429 || status >= 500) throw GatewayError(FailKind::transient, msg);
    if (status == 401 || status == 403) throw GatewayError(FailKind::auth, msg);
    if (status == 400 && (contains_ci(body, "context_length") ||
                          contains_ci(body, "context length") ||
                          contains_ci(body, "maximum context")))
        throw GatewayError(FailKind::context_overflow, msg);
    throw GatewayError(FailKind::protocol, msg);
}

}  // namespace detail

class HttpChatProvider : public ChatProvider {
public:
    HttpChatProvider(std::string base_url, std::string api_key,
                     int timeout_seconds = 120)
        : endpoint_(split_base_url(base_url)), api_key_(std::move(api_key)),
          timeout_seconds_(timeout_seconds) {}

    std::string id() const override { return "openai-compat:" + endpoint_.origin; }

    ChatResponse complete(const ChatRequest& request) override {
        nlohmann::json messages = nlohmann::json::array();
        for (const auto& m : request.messages)
            messages.push_back({{"role", m.role}, {"content", m.content}});
        nlohmann::json body = {{"model", request.model},
                               {"messages", messages},
                               {"temperature", request.temperature}};
        if (request.max_output > 0) body["max_tokens"] = request.max_output;

        const nlohmann::json reply =
            post_json(endpoint_.path_prefix + "/chat/completions", body, "chat");

        const auto& choices = reply.at("choices");
        if (!choices.is_array() || choices.empty())
            throw GatewayError(FailKind::protocol, "chat: no choices in response");
        const auto& choice = choices.at(0);

        ChatResponse out;
        const auto& msg = choice.at("message");
        if (msg.contains("content") && msg["content"].is_string())
            out.content = msg["content"].get<std::string>();
        const std::string finish = choice.value("finish_reason", "");
        if (finish == "stop")
            out.finish_reason = FinishReason::complete;
        else if (finish == "length")
            out.finish_reason = FinishReason::truncated;
        else
            out.finish_reason = FinishReason::error;
        if (reply.contains("usage")) {
            out.usage_in = reply["usage"].value("prompt_tokens", 0);
            out.usage_out = reply["usage"].value("completion_tokens", 0);
        }
        if (out.finish_reason == FinishReason::complete && trim(out.content).empty())
            throw GatewayError(FailKind::protocol, "chat: provider returned empty content");
        return out;
    }

private:
    nlohmann::json post_json(const std::string& path, const nlohmann::json& body,
                             const std::string& what) {
        httplib::Client client(endpoint_.origin);
        client.set_connection_timeout(timeout_seconds_, 0);
        client.set_read_timeout(timeout_seconds_, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        const auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res)
            throw GatewayError(FailKind::transient,
                               what + ": transport failure (" + httplib::to_string(res.error()) + ")");
        if (res->status != 200) detail::throw_http_error(what, res->status, res->body);
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw GatewayError(FailKind::protocol, what + ": malformed JSON response: " + e.what());
        }
    }

    HttpEndpoint endpoint_;
    std::string api_key_;
    int timeout_seconds_;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(std::string base_url, std::string model, std::string api_key,
                          int timeout_seconds = 120)
        : endpoint_(split_base_url(base_url)), model_(std::move(model)),
          api_key_(std::move(api_key)), timeout_seconds_(timeout_seconds) {}

    std::string id() const override { return "openai-compat:" + endpoint_.origin; }
    std::string model() const override { return model_; }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        if (texts.empty()) return {};
        httplib::Client client(endpoint_.origin);
        client.set_connection_timeout(timeout_seconds_, 0);
        client.set_read_timeout(timeout_seconds_, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        const nlohmann::json body = {{"model", model_}, {"input", texts}};
        const auto res = client.Post(endpoint_.path_prefix + "/embeddings", headers,
                                     body.dump(), "application/json");
        if (!res)
            throw GatewayError(FailKind::transient,
                               "embed: transport failure (" + httplib::to_string(res.error()) + ")");
        if (res->status != 200) detail::throw_http_error("embed", res->status, res->body);
        nlohmann::json reply;
        try {
            reply = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw GatewayError(FailKind::protocol,
                               std::string("embed: malformed JSON response: ") + e.what());
        }
        const auto& data = reply.at("data");
        if (!data.is_array() || data.size() != texts.size())
            throw GatewayError(FailKind::protocol, "embed: response row count mismatch");
        std::vector<std::vector<double>> out(texts.size());
        for (const auto& item : data) {
            const std::size_t idx = item.at("index").get<std::size_t>();
            if (idx >= out.size())
                throw GatewayError(FailKind::protocol, "embed: response index out of range");
            out[idx] = item.at("embedding").get<std::vector<double>>();
        }
        return out;
    }

private:
    HttpEndpoint endpoint_;
    std::string model_;
    std::string api_key_;
    int timeout_seconds_;
};

}  // namespace littab
