#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uq/records.hpp"

namespace uq {

struct DecodingPreset {
    std::string name = "stub-small";
    double temperature = 1.0; // > 0
    double top_p = 1.0;       // in (0, 1]
    int top_k = 40;           // >= 1
    double presence_penalty = 0.0;
    int max_tokens = 20000; // large enough that responses are never truncated
};

void validate(const DecodingPreset& p);

/// Named presets from the presets.json asset.
std::map<std::string, DecodingPreset> load_presets(const std::string& path);
DecodingPreset preset_or_throw(const std::map<std::string, DecodingPreset>& presets,
                               const std::string& name);

struct BackendConfig {
    std::string base_url;               // e.g. http://127.0.0.1:8080
    std::string auth_env = "UQ_AUTH_TOKEN"; // env var holding the bearer token, if any
    double timeout_s = 30.0;            // > 0
    int max_in_flight = 4;              // >= 1
    int retries = 2;                    // extra attempts after the first
    std::string model = "stub-small";
};

void validate(const BackendConfig& c);

struct Capabilities {
    bool generate = true;
    bool score = false; // teacher-forced continuation scoring
};

struct ChatTurn {
    std::string role; // "user" | "assistant"
    std::string text;
};

struct GenerateRequest {
    std::vector<ChatTurn> messages;
    std::optional<std::string> image_ref;
    DecodingPreset preset;
    int n = 1;
    std::uint64_t seed = 0;
    bool want_logprobs = true;
    int top_logprobs = 4;
};

struct GeneratedSample {
    std::string text;
    std::vector<TokenScore> tokens;
};

struct ForcedScoreRequest {
    std::string context;
    std::string continuation;
    std::optional<std::string> image_ref;
};

// Request construction is a pure function of its inputs; payloads are
// golden-tested byte for byte.
nlohmann::json build_generate_payload(const GenerateRequest& req, const std::string& model);
nlohmann::json build_score_payload(const ForcedScoreRequest& req, const std::string& model);

std::vector<GeneratedSample> parse_generate_response(const nlohmann::json& body);
std::vector<TokenScore> parse_score_response(const nlohmann::json& body);

class Backend {
public:
    virtual ~Backend() = default;
    virtual Capabilities capabilities() = 0;
    virtual std::vector<GeneratedSample> generate(const GenerateRequest& req) = 0;
    virtual std::vector<TokenScore> score(const ForcedScoreRequest& req) = 0;
};

/// Chat-completions-style JSON endpoint with logprob support plus a
/// /v1/score continuation-scoring route. Retries transient failures with
/// exponential backoff.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendConfig config);
    ~HttpBackend() override;

    Capabilities capabilities() override;
    std::vector<GeneratedSample> generate(const GenerateRequest& req) override;
    std::vector<TokenScore> score(const ForcedScoreRequest& req) override;

    int last_retry_count() const { return last_retries_; }

private:
    nlohmann::json post_json(const std::string& route, const nlohmann::json& payload);

    BackendConfig config_;
    std::optional<Capabilities> caps_;
    int last_retries_ = 0;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace uq
