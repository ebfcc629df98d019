#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "uq/backend.hpp"

namespace uq {

struct StubItem {
    std::string question; // unique lookup key
    std::string gold;
    std::string foil;
    double difficulty = 0.5; // in (0, 1); P(correct) ~ 1 - difficulty
    int mentions = 0;        // times the chosen answer is written into the trace
};

/// Parameters of the scripted model. Under reasoning, answer-token
/// confidence is inflated proportionally to answer mentions in the trace,
/// independent of correctness; without reasoning it tracks difficulty.
struct StubWorld {
    std::uint64_t seed = 1;
    double inflation = 0.18;  // confidence added per answer mention in context
    double signal = 0.12;     // confidence weight on (1 - difficulty) under reasoning
    double base_signal = 0.7; // confidence weight on (1 - difficulty) without reasoning
    double cot_boost = 0.05;  // accuracy gain from reasoning
    double noise = 0.01;      // per-answer jitter under reasoning
    std::vector<StubItem> items;
};

nlohmann::json to_json(const StubWorld& w);
StubWorld world_from_json(const nlohmann::json& j);
StubWorld load_world(const std::string& path);
void save_world(const StubWorld& w, const std::string& path);

/// Seeded synthetic world over a small answer vocabulary; mentions and
/// difficulty are drawn independently of each other.
StubWorld make_synthetic_world(std::size_t n, std::uint64_t seed);

/// Tag-aware whitespace tokenizer used by the stub; token texts concatenate
/// back to the input string exactly.
std::vector<std::string> stub_tokenize(const std::string& text);

/// Deterministic in-process model: same inputs, same bytes out.
class StubBackend : public Backend {
public:
    explicit StubBackend(StubWorld world);

    Capabilities capabilities() override { return {true, true}; }
    std::vector<GeneratedSample> generate(const GenerateRequest& req) override;
    std::vector<TokenScore> score(const ForcedScoreRequest& req) override;

    const StubWorld& world() const { return world_; }

private:
    const StubItem& find_item(const std::string& text) const;
    GeneratedSample synthesize(const StubItem& item, std::size_t item_idx, bool reasoning,
                               std::uint64_t request_seed, int sample_idx,
                               const std::string& forced_answer, int context_rounds) const;

    StubWorld world_;
    std::map<std::string, std::size_t> by_question_;
};

/// Local HTTP process speaking the backend wire protocol. Serves either a
/// live StubBackend or a replay fixture mapping request hashes to responses.
class StubServer {
public:
    explicit StubServer(StubWorld world);
    /// Replay mode: fixture maps fnv1a64 hex of the request body to the
    /// response object.
    explicit StubServer(const std::string& replay_fixture_path);
    ~StubServer();

    int start(int port = 0); // 0 picks an ephemeral port; returns the bound port
    void stop();
    int port() const { return port_; }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    /// Makes the next n POST requests fail with HTTP 500 (retry testing).
    void fail_next(int n) { fail_budget_ = n; }

    /// Captures served request/response pairs for later replay.
    void enable_recording();
    void save_recording(const std::string& path) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
    std::atomic<int> fail_budget_{0};
};

std::string fnv1a64_hex(std::string_view bytes);

} // namespace uq
