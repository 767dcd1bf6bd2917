#include "fot/http_backend.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "fot/types.hpp"
#include "httplib.h"
#include "json.hpp"

namespace fot {

void HttpBackendConfig::validate() const {
    if (base_url.empty()) throw ConfigError("http backend needs a base_url");
    if (model.empty()) throw ConfigError("http backend needs a model name");
    if (max_retries < 0) throw ConfigError("http max_retries must be >= 0");
    if (backoff_ms < 0) throw ConfigError("http backoff_ms must be >= 0");
}

HttpBackend::HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (!cfg_.api_key_env.empty()) {
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
            bearer_ = key;
        }
    }
}

namespace {

std::optional<Completion> parse_chat_response(const std::string& body, std::string& why) {
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) {
        why = "response is not JSON";
        return std::nullopt;
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
        why = "response has no choices";
        return std::nullopt;
    }
    const auto& choice = j["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content") ||
        !choice["message"]["content"].is_string()) {
        why = "choice has no message content";
        return std::nullopt;
    }
    Completion c;
    c.text = choice["message"]["content"].get<std::string>();
    std::string finish = choice.value("finish_reason", "stop");
    c.finish = finish == "length" ? FinishReason::Length : FinishReason::Stop;
    if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
        choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
        std::vector<double> scores;
        for (const auto& tok : choice["logprobs"]["content"]) {
            if (tok.contains("logprob") && tok["logprob"].is_number()) {
                scores.push_back(tok["logprob"].get<double>());
            }
        }
        if (!scores.empty()) c.token_scores = std::move(scores);
    }
    return c;
}

}  // namespace

Completion HttpBackend::do_complete(const CompletionRequest& request) {
    nlohmann::json payload{
        {"model", cfg_.model},
        {"messages", nlohmann::json::array({nlohmann::json{{"role", "user"},
                                                           {"content", request.prompt}}})},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
        {"logprobs", request.want_token_scores},
    };
    if (request.seed) payload["seed"] = *request.seed;
    const std::string body = payload.dump();

    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(cfg_.backoff_ms * (1 << (attempt - 1))));
        }
        httplib::Client client(cfg_.base_url);
        client.set_connection_timeout(std::chrono::milliseconds(cfg_.connect_timeout_ms));
        client.set_read_timeout(std::chrono::milliseconds(cfg_.read_timeout_ms));
        httplib::Headers headers;
        if (!bearer_.empty()) headers.emplace("Authorization", "Bearer " + bearer_);
        auto res = client.Post("/v1/chat/completions", headers, body, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "upstream status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw BackendError("upstream rejected request with status " +
                                   std::to_string(res->status) + ": " + res->body.substr(0, 200),
                               false);
        }
        std::string why;
        auto completion = parse_chat_response(res->body, why);
        if (!completion) {
            last_error = "malformed upstream payload: " + why;
            continue;
        }
        return *completion;
    }
    throw BackendError("http backend gave up after " + std::to_string(cfg_.max_retries + 1) +
                       " attempts: " + last_error);
}

}  // namespace fot
