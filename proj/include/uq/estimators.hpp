#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace uq {

// Canonical estimator names, in report order.
inline constexpr const char* kEstimatorNames[] = {
    "msp", "ppl", "mte", "mc_se", "mc_nse", "src", "consistency",
};
inline constexpr std::size_t kEstimatorCount = 7;

bool is_estimator_name(std::string_view name);

namespace est {

/// Joint log-probability of the answer tokens (sum of nats).
double log_msp(std::span<const double> answer_logprobs);

/// exp(log_msp); in (0, 1]. Long answers can underflow in this presentation
/// form, so ranking paths use log_msp instead.
double msp(std::span<const double> answer_logprobs);

/// exp(-mean logprob); >= 1.
double perplexity(std::span<const double> answer_logprobs);

/// Arithmetic mean of per-position entropies (nats).
double mean_token_entropy(std::span<const double> answer_entropies);

/// Shannon entropy of the top-k alternatives renormalized to sum to one.
double truncated_entropy(std::span<const std::pair<std::string, double>> alternatives);

/// -mean of sampled sequence logprobs.
double mc_sequence_entropy(std::span<const double> sample_seq_logprobs);

/// -mean of per-token-normalized sampled sequence logprobs.
double mc_normalized_sequence_entropy(std::span<const double> sample_seq_logprobs,
                                      std::span<const std::size_t> answer_lens);

/// exp(logp_yes) / (exp(logp_yes) + exp(logp_no)), max-subtracted for stability.
double src_confidence(double logp_yes, double logp_no);

struct ConsistencyResult {
    double value = 0.0;        // in (0, 1]
    std::string majority;      // winning answer
    std::size_t majority_count = 0;
};

/// Fraction of ALL samples (parse failures included in the denominator)
/// agreeing with the majority answer.
ConsistencyResult consistency(const std::vector<std::optional<std::string>>& sample_answers,
                              const std::vector<double>& seq_logprobs);

/// Maps a raw estimator value to the unified higher-is-more-confident
/// orientation: identity for msp/src/consistency, negation for the rest.
double to_confidence(std::string_view estimator, double raw_value);

} // namespace est
} // namespace uq
