#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "uq/prompts.hpp"
#include "uq/records.hpp"
#include "uq/textmatch.hpp"

namespace uq {

inline constexpr const char* kMaskToken = "[MASK]";

struct MaskResult {
    std::string masked_trace;
    std::size_t mask_count = 0;
    std::vector<CharRange> masked_char_ranges; // in original-trace coordinates
};

/// Replaces every boundary-respecting, case-insensitive occurrence of the
/// predicted answer in the trace with [MASK]. Zero matches is valid.
MaskResult mask_answer_mentions(std::string_view trace, std::string_view predicted_answer);

/// Replaces `count` uniformly-chosen whitespace-delimited tokens with [MASK]
/// (seeded, without replacement). Throws when count exceeds the token count.
MaskResult mask_random_tokens(std::string_view trace, std::size_t count, std::uint64_t seed);

/// Inverse of masking given the recorded ranges: restores the original trace
/// from the masked one. Byte-exact.
std::string unmask(const MaskResult& mask, std::string_view original_trace);

/// Forced-continuation re-scoring exchange; the continuation is exactly the
/// record's answer span text.
struct ScoringRequest {
    std::string record_id;
    std::string variant; // "masked" | "random_masked"
    std::string context_text;
    std::string forced_continuation;
    std::optional<std::string> image_ref;
};

/// Context = task prompt + the record's own output with the reasoning trace
/// swapped for the masked one, cut right before the answer tokens.
ScoringRequest build_rescore_request(const GenerationRecord& record, const MaskResult& mask,
                                     std::string_view variant, const PromptLibrary& prompts);

/// New record tagged with the variant, answer-span token scores replaced by
/// the backend's forced-continuation scores. Correctness is copied unchanged.
GenerationRecord apply_rescore(const GenerationRecord& record,
                               const std::vector<TokenScore>& scored_answer_tokens,
                               std::string_view variant);

nlohmann::json to_json(const ScoringRequest& r);
ScoringRequest scoring_request_from_json(const nlohmann::json& j);
std::vector<ScoringRequest> read_scoring_requests(const std::string& path);
void write_scoring_requests(const std::vector<ScoringRequest>& reqs, const std::string& path);

struct ScoringResult {
    std::string record_id;
    std::string variant;
    std::vector<TokenScore> tokens;
};

nlohmann::json to_json(const ScoringResult& r);
ScoringResult scoring_result_from_json(const nlohmann::json& j);
std::vector<ScoringResult> read_scoring_results(const std::string& path);
void write_scoring_results(const std::vector<ScoringResult>& results, const std::string& path);

} // namespace uq
