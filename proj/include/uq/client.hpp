#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uq/backend.hpp"
#include "uq/parsing.hpp"
#include "uq/prompts.hpp"
#include "uq/records.hpp"

namespace uq {

/// One pipeline input: a question with its labels and an opaque image ref.
struct TaskInput {
    std::string id;
    std::string dataset;
    std::string question;
    std::optional<std::vector<std::string>> options;
    std::vector<std::string> gold_answers;
    std::optional<std::string> image_ref;
};

std::vector<TaskInput> read_tasks(const std::string& path);
void write_tasks(const std::vector<TaskInput>& tasks, const std::string& path);

struct GenerateOptions {
    Mode mode = Mode::no_cot;
    std::string model = "stub-small";
    DecodingPreset preset;
    JudgeConfig judge;
    int k_samples = 10;       // stochastic samples per input
    std::uint64_t seed = 7;
    int max_in_flight = 4;    // bounded request concurrency
    bool want_probes = true;  // emit SRC probes when the backend can score
};

struct RecordFailure {
    std::string id;
    std::string error;
};

struct GenerateOutcome {
    std::vector<GenerationRecord> records; // ordered by record id
    std::vector<SampleSet> samples;
    std::vector<SrcProbe> probes;
    std::vector<RecordFailure> failures;
};

/// One primary generation plus K sampled generations per input, parsed and
/// judged; per-record failures never abort the run.
GenerateOutcome run_generate(Backend& backend, const std::vector<TaskInput>& tasks,
                             const GenerateOptions& options, const PromptLibrary& prompts);

/// Builds a GenerationRecord from one generated sample (parse, span
/// alignment, normalization, judging).
GenerationRecord build_record(const TaskInput& task, const GeneratedSample& sample,
                              const GenerateOptions& options);

/// Scores the self-report yes/no continuations for a parsed record.
SrcProbe probe_src(Backend& backend, const GenerationRecord& record,
                   const PromptLibrary& prompts);

/// Sums the logprobs of the content tokens between the answer tags of a
/// scored continuation.
double sum_content_logprobs(const std::vector<TokenScore>& scored_tokens);

struct SequentialPoint {
    int round = 1;
    double answer_logprob_sum = 0.0;
};

/// Multi-turn repeated reasoning; every earlier trace and answer stays in
/// context. Round 1 is the record's own answer logprob sum. Stops early on
/// context overflow or parse failure, reporting completed rounds.
std::vector<SequentialPoint> run_sequential_rounds(Backend& backend,
                                                   const GenerationRecord& record, int rounds,
                                                   const DecodingPreset& preset,
                                                   const PromptLibrary& prompts);

} // namespace uq
