#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uq/textmatch.hpp"

namespace uq {

/// Result of extracting the wrapped <think>/<answer> output format.
/// Char ranges address the tag CONTENT within the raw text.
struct ParsedOutput {
    std::optional<std::string> think_text;
    std::string answer_text;
    std::optional<CharRange> think_char_range;
    CharRange answer_char_range;
    bool tag_violation = false; // tags not present exactly once, or stray tags
};

/// Extracts the last well-formed answer pair (and think pair, if any).
/// Returns nullopt when no well-formed, non-empty answer tag exists.
std::optional<ParsedOutput> extract_tagged(std::string_view raw_text);

enum class JudgeKind { exact_mc, open_ended_exact, vqa_soft };

std::string to_string(JudgeKind k);
JudgeKind judge_kind_from_string(const std::string& s);

struct JudgeConfig {
    JudgeKind kind = JudgeKind::open_ended_exact;
    bool case_fold = true;
    bool strip_articles = true;
    bool strip_punct = true;
};

/// Deterministic, idempotent answer normalization: whitespace collapse plus
/// the configured folding steps.
std::string normalize_answer(std::string_view text, const JudgeConfig& judge);

/// Correctness score in [0, 1]. `pred` must already be normalized.
/// exact_mc requires options and scores 1 iff pred equals exactly one
/// normalized option that is also gold; vqa_soft scores min(matches/3, 1).
double judge_correct(const std::string& pred,
                     const std::vector<std::string>& gold_answers,
                     const std::optional<std::vector<std::string>>& options,
                     const JudgeConfig& judge);

struct VoteResult {
    std::string answer;
    std::size_t count = 0;
};

/// Most frequent parseable answer; ties broken by the highest sequence
/// logprob among the tied answers' best samples, then by lowest sample index.
/// Throws VoteFailure when no sample parsed.
VoteResult majority_vote(const std::vector<std::optional<std::string>>& answers,
                         const std::vector<double>& seq_logprobs);

} // namespace uq
