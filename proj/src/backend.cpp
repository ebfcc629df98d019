#include "uq/backend.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include "httplib.h"
#include "uq/errors.hpp"
#include "uq/jsonl.hpp"

namespace uq {

void validate(const DecodingPreset& p) {
    if (!(p.temperature > 0.0)) throw ConfigError("preset: temperature must be > 0");
    if (!(p.top_p > 0.0 && p.top_p <= 1.0)) throw ConfigError("preset: top_p must be in (0, 1]");
    if (p.top_k < 1) throw ConfigError("preset: top_k must be >= 1");
    if (p.max_tokens < 1) throw ConfigError("preset: max_tokens must be >= 1");
}

std::map<std::string, DecodingPreset> load_presets(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open presets file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("presets file " + path + ": " + e.what());
    }
    std::map<std::string, DecodingPreset> out;
    for (auto& [name, v] : j.items()) {
        DecodingPreset p;
        p.name = name;
        p.temperature = v.at("temperature").get<double>();
        p.top_p = v.at("top_p").get<double>();
        p.top_k = v.at("top_k").get<int>();
        p.presence_penalty = v.at("presence_penalty").get<double>();
        p.max_tokens = v.at("max_tokens").get<int>();
        validate(p);
        out[name] = std::move(p);
    }
    return out;
}

DecodingPreset preset_or_throw(const std::map<std::string, DecodingPreset>& presets,
                               const std::string& name) {
    auto it = presets.find(name);
    if (it == presets.end()) throw ConfigError("unknown decoding preset '" + name + "'");
    return it->second;
}

void validate(const BackendConfig& c) {
    if (!(c.timeout_s > 0.0)) throw ConfigError("backend: timeout must be > 0");
    if (c.max_in_flight < 1) throw ConfigError("backend: max in-flight must be >= 1");
    if (c.retries < 0) throw ConfigError("backend: retry budget must be >= 0");
}

nlohmann::json build_generate_payload(const GenerateRequest& req, const std::string& model) {
    nlohmann::json messages = nlohmann::json::array();
    for (std::size_t i = 0; i < req.messages.size(); ++i) {
        const ChatTurn& turn = req.messages[i];
        nlohmann::json content = nlohmann::json::array();
        content.push_back({{"type", "text"}, {"text", turn.text}});
        // the image rides on the first user turn
        if (i == 0 && req.image_ref)
            content.push_back({{"type", "image_ref"}, {"image_ref", *req.image_ref}});
        messages.push_back({{"role", turn.role}, {"content", std::move(content)}});
    }
    nlohmann::json payload = nlohmann::json::object();
    payload["model"] = model;
    payload["messages"] = std::move(messages);
    payload["n"] = req.n;
    payload["seed"] = req.seed;
    payload["temperature"] = req.preset.temperature;
    payload["top_p"] = req.preset.top_p;
    payload["top_k"] = req.preset.top_k;
    payload["presence_penalty"] = req.preset.presence_penalty;
    payload["max_tokens"] = req.preset.max_tokens;
    payload["logprobs"] = req.want_logprobs;
    if (req.want_logprobs) payload["top_logprobs"] = req.top_logprobs;
    return payload;
}

nlohmann::json build_score_payload(const ForcedScoreRequest& req, const std::string& model) {
    nlohmann::json payload = nlohmann::json::object();
    payload["model"] = model;
    payload["context"] = req.context;
    payload["continuation"] = req.continuation;
    if (req.image_ref) payload["image_ref"] = *req.image_ref;
    return payload;
}

namespace {

TokenScore wire_token(const nlohmann::json& v) {
    TokenScore t;
    t.text = v.at("token").get<std::string>();
    t.logprob = logprob_from_json(v.at("logprob"), "logprob");
    if (auto it = v.find("entropy"); it != v.end()) t.entropy = it->get<double>();
    if (auto it = v.find("top_logprobs"); it != v.end() && it->is_array() && !it->empty()) {
        std::vector<std::pair<std::string, double>> alts;
        for (const auto& a : *it)
            alts.emplace_back(a.at("token").get<std::string>(),
                              logprob_from_json(a.at("logprob"), "top_logprobs.logprob"));
        t.alternatives = std::move(alts);
    }
    return t;
}

} // namespace

std::vector<GeneratedSample> parse_generate_response(const nlohmann::json& body) {
    std::vector<GeneratedSample> out;
    if (!body.contains("choices") || !body["choices"].is_array())
        throw BackendError("malformed generate response: no choices array");
    for (const auto& choice : body["choices"]) {
        GeneratedSample sample;
        sample.text = choice.at("message").at("content").get<std::string>();
        if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object()) {
            for (const auto& tok : lp->at("content")) sample.tokens.push_back(wire_token(tok));
        }
        out.push_back(std::move(sample));
    }
    return out;
}

std::vector<TokenScore> parse_score_response(const nlohmann::json& body) {
    if (!body.contains("tokens") || !body["tokens"].is_array())
        throw BackendError("malformed score response: no tokens array");
    std::vector<TokenScore> out;
    for (const auto& tok : body["tokens"]) out.push_back(wire_token(tok));
    return out;
}

struct HttpBackend::Impl {
    explicit Impl(const BackendConfig& config) : client(config.base_url) {
        const auto timeout =
            std::chrono::milliseconds(static_cast<long>(config.timeout_s * 1000.0));
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        if (const char* token = std::getenv(config.auth_env.c_str()); token && *token)
            client.set_default_headers({{"Authorization", std::string("Bearer ") + token}});
    }
    httplib::Client client;
};

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
    validate(config_);
    if (config_.base_url.empty()) throw ConfigError("backend: base URL required");
    impl_ = std::make_unique<Impl>(config_);
}

HttpBackend::~HttpBackend() = default;

nlohmann::json HttpBackend::post_json(const std::string& route, const nlohmann::json& payload) {
    const std::string body = payload.dump();
    std::mt19937_64 jitter_rng(std::random_device{}());
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        if (attempt > 0) {
            last_retries_ = attempt;
            const double base_ms = 100.0 * static_cast<double>(1 << (attempt - 1));
            std::uniform_real_distribution<double> jitter(0.0, 50.0);
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<long>(base_ms + jitter(jitter_rng))));
        }
        auto res = impl_->client.Post(route, body, "application/json");
        if (!res) {
            last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue; // transient; retry
        }
        if (res->status != 200)
            throw BackendError(route + ": HTTP " + std::to_string(res->status) + " " + res->body);
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
            throw BackendError(route + ": invalid JSON response: " + e.what());
        }
    }
    throw BackendError(route + ": " + last_error + " after " +
                       std::to_string(config_.retries + 1) + " attempts");
}

Capabilities HttpBackend::capabilities() {
    if (caps_) return *caps_;
    Capabilities caps;
    auto res = impl_->client.Get("/v1/capabilities");
    if (res && res->status == 200) {
        try {
            const auto j = nlohmann::json::parse(res->body);
            caps.generate = j.value("generate", true);
            caps.score = j.value("score", false);
        } catch (const nlohmann::json::parse_error&) {
            // endpoint exists but is not ours; assume generation only
        }
    } else if (!res) {
        throw BackendError("capability probe failed: backend unreachable at " + config_.base_url);
    }
    caps_ = caps;
    return caps;
}

std::vector<GeneratedSample> HttpBackend::generate(const GenerateRequest& req) {
    return parse_generate_response(
        post_json("/v1/chat/completions", build_generate_payload(req, config_.model)));
}

std::vector<TokenScore> HttpBackend::score(const ForcedScoreRequest& req) {
    return parse_score_response(post_json("/v1/score", build_score_payload(req, config_.model)));
}

} // namespace uq
