#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#ifdef COEV_TLS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

#include "coev/gateway.hpp"

namespace coev {

struct HttpProviderConfig {
    // Full chat-completion URL, e.g. "https://api.example.com/v1/chat/completions".
    std::string endpoint;
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    std::string system_prompt; // optional leading system message
    int connect_timeout_s = 10;
    int read_timeout_s = 300;
};

// OpenAI-compatible chat-completion backend.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
        const auto scheme_end = config_.endpoint.find("://");
        if (scheme_end == std::string::npos)
            throw ConfigError("endpoint must include a scheme: " + config_.endpoint);
        const auto path_start = config_.endpoint.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            base_ = config_.endpoint;
            path_ = "/v1/chat/completions";
        } else {
            base_ = config_.endpoint.substr(0, path_start);
            path_ = config_.endpoint.substr(path_start);
        }
    }

    Completion complete(const ChatRequest& request, const std::string& prompt) override {
        nlohmann::json body;
        if (!config_.model.empty()) body["model"] = config_.model;
        auto messages = nlohmann::json::array();
        if (!config_.system_prompt.empty())
            messages.push_back({{"role", "system"}, {"content", config_.system_prompt}});
        messages.push_back({{"role", "user"}, {"content", prompt}});
        body["messages"] = std::move(messages);
        body["n"] = request.sample_count;
        body["temperature"] = request.sampling.temperature;
        body["top_p"] = request.sampling.top_p;
        if (request.sampling.top_k > 0) body["top_k"] = request.sampling.top_k;
        if (request.sampling.max_tokens > 0) body["max_tokens"] = request.sampling.max_tokens;
        if (request.sampling.seed) body["seed"] = *request.sampling.seed;

        httplib::Client client(base_);
        client.set_connection_timeout(config_.connect_timeout_s, 0);
        client.set_read_timeout(config_.read_timeout_s, 0);
        httplib::Headers headers;
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);

        auto res = client.Post(path_, headers, body.dump(), "application/json");
        if (!res)
            throw TransientProviderError("transport failure contacting " + base_ + ": " +
                                         httplib::to_string(res.error()));
        if (res->status == 429 || res->status >= 500)
            throw TransientProviderError("provider returned HTTP " + std::to_string(res->status));
        if (res->status != 200)
            throw ProviderError("provider returned HTTP " + std::to_string(res->status) + ": " +
                                res->body);

        nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") || !reply["choices"].is_array())
            throw ProviderError("malformed provider response");

        Completion completion;
        for (const auto& choice : reply["choices"]) {
            if (choice.contains("message") && choice["message"].contains("content"))
                completion.texts.push_back(choice["message"]["content"].get<std::string>());
        }
        if (reply.contains("usage") && reply["usage"].is_object()) {
            const auto& u = reply["usage"];
            completion.usage.prompt_tokens = u.value("prompt_tokens", 0ull);
            completion.usage.completion_tokens = u.value("completion_tokens", 0ull);
        } else {
            completion.usage.prompt_tokens = approx_token_count(prompt);
            for (const auto& t : completion.texts)
                completion.usage.completion_tokens += approx_token_count(t);
        }
        completion.usage.call_count = 1;
        return completion;
    }

private:
    HttpProviderConfig config_;
    std::string base_;
    std::string path_;
};

} // namespace coev
