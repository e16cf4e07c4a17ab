#pragma once

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <cstdlib>
#include <string>
#include <string_view>

#include "distill_forge/backend.hpp"
#include "distill_forge/jsonl.hpp"

namespace distill {

inline constexpr const char* kApiKeyEnv = "DISTILL_API_KEY";

struct LiveBackendConfig {
    std::string base_url = "https://api.openai.com";  // scheme://host[:port]
    std::string path = "/v1/completions";
    std::string model = "text-davinci-002";
    double temperature = 0.7;
    int max_output_tokens = 512;
    std::size_t max_input_words = 3072;
    int timeout_seconds = 60;
    std::string api_key;  // empty: read from DISTILL_API_KEY
};

/// Completion client for an OpenAI-style /v1/completions endpoint.
/// Throttling, 5xx and transport errors are transient; content-filter
/// refusals become FinishReason::ContentFilter.
class LiveBackend : public Backend {
public:
    explicit LiveBackend(LiveBackendConfig config) : config_(std::move(config)) {
        if (config_.api_key.empty()) {
            if (const char* key = std::getenv(kApiKeyEnv); key != nullptr) config_.api_key = key;
        }
        if (config_.api_key.empty()) {
            throw ConfigurationError(std::string("live backend requires the ") + kApiKeyEnv + " environment variable");
        }
    }

    std::string name() const override { return "live:" + config_.model; }
    std::size_t max_input_words() const override { return config_.max_input_words; }

    Completion complete(std::string_view prompt) override {
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(config_.timeout_seconds);
        client.set_read_timeout(config_.timeout_seconds);
        client.set_bearer_token_auth(config_.api_key);

        const json body{{"model", config_.model},
                        {"prompt", prompt},
                        {"temperature", config_.temperature},
                        {"max_tokens", config_.max_output_tokens}};
        auto res = client.Post(config_.path, body.dump(), "application/json");
        if (!res) throw TransientBackendError("transport error: " + httplib::to_string(res.error()));

        if (res->status == 429 || res->status >= 500) {
            throw TransientBackendError("HTTP " + std::to_string(res->status));
        }
        json payload;
        try {
            payload = json::parse(res->body);
        } catch (const json::parse_error&) {
            throw BackendFailure("HTTP " + std::to_string(res->status) + ": unparseable response body");
        }
        if (res->status != 200) {
            if (is_content_filter_error(payload)) return {"", FinishReason::ContentFilter};
            throw BackendFailure("HTTP " + std::to_string(res->status) + ": " + payload.dump());
        }
        const auto& choice = payload.at("choices").at(0);
        Completion out;
        out.text = choice.value("text", "");
        const std::string reason = choice.contains("finish_reason") && choice.at("finish_reason").is_string()
                                       ? choice.at("finish_reason").get<std::string>()
                                       : "stop";
        if (reason == "stop") {
            out.finish_reason = FinishReason::Stop;
        } else if (reason == "length") {
            out.finish_reason = FinishReason::Length;
        } else if (reason == "content_filter") {
            out.finish_reason = FinishReason::ContentFilter;
        } else {
            out.finish_reason = FinishReason::Error;
        }
        return out;
    }

private:
    static bool is_content_filter_error(const json& payload) {
        if (!payload.contains("error") || !payload.at("error").is_object()) return false;
        const auto& err = payload.at("error");
        return err.value("code", "") == "content_filter" || err.value("type", "") == "content_filter";
    }

    LiveBackendConfig config_;
};

}  // namespace distill
