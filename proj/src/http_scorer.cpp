#include "nbcloze/scorer.hpp"

#include "nbcloze/errors.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace nbcloze {

using ordered_json = nlohmann::ordered_json;

HttpScorer::HttpScorer(HttpScorerConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty())
        throw ScorerError("scorer endpoint URL is empty");
    if (config_.max_attempts < 1) config_.max_attempts = 1;
}

std::unique_ptr<HttpScorer> HttpScorer::from_env() {
    const char* url = std::getenv(kScorerUrlEnv);
    if (!url || !*url)
        throw ScorerError(std::string("environment variable ") + kScorerUrlEnv + " is not set");
    HttpScorerConfig config;
    config.base_url = url;
    return std::make_unique<HttpScorer>(std::move(config));
}

std::string HttpScorer::post_json(const std::string& path, const std::string& body) {
    std::string last_error;
    for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
        if (attempt > 0) {
            auto delay = std::chrono::milliseconds(config_.backoff_base_ms << (attempt - 1));
            std::this_thread::sleep_for(delay);
        }
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(std::chrono::milliseconds(config_.timeout_ms));
        client.set_read_timeout(std::chrono::milliseconds(config_.timeout_ms));
        client.set_write_timeout(std::chrono::milliseconds(config_.timeout_ms));

        auto res = client.Post(path, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        return res->body;
    }
    throw ScorerError("scorer endpoint " + config_.base_url + path + " failed after " +
                      std::to_string(config_.max_attempts) + " attempts (" + last_error + ")");
}

OptionLogits HttpScorer::score_options(const ScoreRequest& request) {
    validate_request(request);
    ordered_json payload;
    payload["prompt"] = request.prompt;
    payload["prefix"] = request.answer_prefix;
    payload["candidates"] = request.candidates;

    std::string body = post_json("/v1/score", payload.dump());

    ordered_json reply;
    try {
        reply = ordered_json::parse(body);
    } catch (const ordered_json::parse_error& e) {
        throw ScorerProtocolError(std::string("score reply is not JSON: ") + e.what());
    }
    std::vector<double> logprobs;
    try {
        logprobs = reply.at("logprobs").get<std::vector<double>>();
    } catch (const ordered_json::exception& e) {
        throw ScorerProtocolError(std::string("score reply missing logprobs: ") + e.what());
    }
    if (logprobs.size() != request.candidates.size())
        throw ScorerProtocolError("score reply carries " + std::to_string(logprobs.size()) +
                                  " logprobs for " + std::to_string(request.candidates.size()) +
                                  " candidates");
    for (double x : logprobs)
        if (!std::isfinite(x))
            throw ScorerProtocolError("score reply carries a non-finite logprob");
    return OptionLogits{std::move(logprobs)};
}

std::string HttpScorer::generate(const std::string& prompt, const GenerateParams& params) {
    if (params.max_tokens <= 0)
        throw EmptyGenerationError("max_tokens is zero");

    ordered_json payload;
    payload["prompt"] = prompt;
    payload["params"] = {{"max_tokens", params.max_tokens},
                         {"temperature", params.temperature},
                         {"top_k", params.top_k},
                         {"top_p", params.top_p},
                         {"beams", params.beams}};

    std::string body = post_json("/v1/generate", payload.dump());

    ordered_json reply;
    try {
        reply = ordered_json::parse(body);
    } catch (const ordered_json::parse_error& e) {
        throw ScorerProtocolError(std::string("generate reply is not JSON: ") + e.what());
    }
    std::string text;
    try {
        text = reply.at("text").get<std::string>();
    } catch (const ordered_json::exception& e) {
        throw ScorerProtocolError(std::string("generate reply missing text: ") + e.what());
    }
    if (text.empty())
        throw EmptyGenerationError("scorer returned an empty generation");
    return text;
}

} // namespace nbcloze
