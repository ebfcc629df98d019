#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace uq {

enum class Mode { no_cot, cot, thinking };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& s);

/// One generated token with its log-probability (nats) and optional
/// next-token distribution information as logged by the producer.
struct TokenScore {
    std::string text;
    double logprob = 0.0;                 // <= 0, nats
    std::optional<double> entropy;        // >= 0, nats; full-vocabulary Shannon entropy
    std::optional<std::vector<std::pair<std::string, double>>> alternatives;
    // top-k candidates at this position, sorted by descending logprob, each <= 0
};

// Half-open token index range.
struct TokenRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool empty() const { return begin == end; }
    bool operator==(const TokenRange&) const = default;
};

struct SpanPair {
    TokenRange reasoning; // may be empty (no reasoning trace)
    TokenRange answer;    // non-empty whenever parse_ok
    bool operator==(const SpanPair&) const = default;
};

/// One model response: prompt metadata, token-level scores, span split,
/// parsed answer and correctness label.
struct GenerationRecord {
    std::string id;
    std::string dataset;
    std::string model;
    Mode mode = Mode::no_cot;
    std::string question;
    std::optional<std::vector<std::string>> options;
    std::vector<std::string> gold_answers;
    std::optional<std::string> image_ref;    // opaque payload reference, never interpreted
    std::string raw_text;
    std::vector<TokenScore> tokens;
    SpanPair spans;
    std::optional<std::string> parsed_answer; // normalized; absent when !parse_ok
    bool parse_ok = false;
    std::optional<double> correct;            // judge score in [0,1]; bool on the wire when 0/1
    std::optional<std::string> variant;       // "masked" | "random_masked" for intervention outputs
    std::optional<std::string> logprob_kind;  // producer-declared (e.g. "pre_sampling"); passthrough
    bool tag_violation = false;
    bool retokenized = false;
    std::optional<std::pair<std::size_t, std::size_t>> retokenized_lengths; // original, rescored
    nlohmann::json extra = nlohmann::json::object(); // unknown fields, preserved on round-trip

    std::vector<double> answer_logprobs() const;
    std::string answer_span_text() const;
    std::string reasoning_span_text() const;
};

struct SampleDraw {
    std::optional<std::string> parsed_answer; // normalized; absent when !parse_ok
    double seq_logprob = 0.0;                 // <= 0, nats
    std::size_t answer_len = 1;               // positive token count
    bool parse_ok = false;
};

/// K stochastic generations for one input.
struct SampleSet {
    std::string record_id;
    std::vector<SampleDraw> samples;
    std::uint64_t seed = 0;
};

struct SrcProbe {
    std::string record_id;
    double logp_yes = 0.0; // <= 0
    double logp_no = 0.0;  // <= 0; not both -inf
};

void validate(const GenerationRecord& r);
void validate(const SampleSet& s);
void validate(const SrcProbe& p);

nlohmann::json to_json(const GenerationRecord& r);
nlohmann::json to_json(const SampleSet& s);
nlohmann::json to_json(const SrcProbe& p);
GenerationRecord record_from_json(const nlohmann::json& j);
SampleSet sample_set_from_json(const nlohmann::json& j);
SrcProbe probe_from_json(const nlohmann::json& j);

std::vector<GenerationRecord> read_records(const std::string& path);
void write_records(const std::vector<GenerationRecord>& records, const std::string& path);
std::vector<SampleSet> read_sample_sets(const std::string& path);
void write_sample_sets(const std::vector<SampleSet>& sets, const std::string& path);
std::vector<SrcProbe> read_probes(const std::string& path);
void write_probes(const std::vector<SrcProbe>& probes, const std::string& path);

} // namespace uq
