#include "uq/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "uq/errors.hpp"
#include "uq/parsing.hpp"

namespace uq {

bool is_estimator_name(std::string_view name) {
    for (const char* n : kEstimatorNames)
        if (name == n) return true;
    return false;
}

namespace est {

double log_msp(std::span<const double> answer_logprobs) {
    if (answer_logprobs.empty()) throw ValidationError("msp: empty answer logprobs");
    double sum = 0.0;
    for (double lp : answer_logprobs) sum += lp;
    return sum;
}

double msp(std::span<const double> answer_logprobs) {
    return std::exp(log_msp(answer_logprobs));
}

double perplexity(std::span<const double> answer_logprobs) {
    if (answer_logprobs.empty()) throw ValidationError("perplexity: empty answer logprobs");
    double sum = 0.0;
    for (double lp : answer_logprobs) sum += lp;
    return std::exp(-sum / static_cast<double>(answer_logprobs.size()));
}

double mean_token_entropy(std::span<const double> answer_entropies) {
    if (answer_entropies.empty()) throw ValidationError("mte: empty answer entropies");
    double sum = 0.0;
    for (double h : answer_entropies) sum += h;
    return sum / static_cast<double>(answer_entropies.size());
}

double truncated_entropy(std::span<const std::pair<std::string, double>> alternatives) {
    if (alternatives.empty()) throw ValidationError("truncated_entropy: empty alternatives");
    double max_lp = -std::numeric_limits<double>::infinity();
    for (const auto& [text, lp] : alternatives) {
        (void)text;
        max_lp = std::max(max_lp, lp);
    }
    double z = 0.0;
    for (const auto& [text, lp] : alternatives) {
        (void)text;
        z += std::exp(lp - max_lp);
    }
    double h = 0.0;
    for (const auto& [text, lp] : alternatives) {
        (void)text;
        const double p = std::exp(lp - max_lp) / z;
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

double mc_sequence_entropy(std::span<const double> sample_seq_logprobs) {
    if (sample_seq_logprobs.empty()) throw ValidationError("mc_se: empty sample list");
    double sum = 0.0;
    for (double lp : sample_seq_logprobs) sum += lp;
    return -sum / static_cast<double>(sample_seq_logprobs.size());
}

double mc_normalized_sequence_entropy(std::span<const double> sample_seq_logprobs,
                                      std::span<const std::size_t> answer_lens) {
    if (sample_seq_logprobs.empty()) throw ValidationError("mc_nse: empty sample list");
    if (sample_seq_logprobs.size() != answer_lens.size())
        throw ValidationError("mc_nse: logprob/length lists must align");
    double sum = 0.0;
    for (std::size_t i = 0; i < sample_seq_logprobs.size(); ++i) {
        if (answer_lens[i] == 0) throw ValidationError("mc_nse: zero answer length");
        sum += sample_seq_logprobs[i] / static_cast<double>(answer_lens[i]);
    }
    return -sum / static_cast<double>(sample_seq_logprobs.size());
}

double src_confidence(double logp_yes, double logp_no) {
    if (std::isinf(logp_yes) && std::isinf(logp_no))
        throw ValidationError("src: logp_yes and logp_no are both -inf");
    const double m = std::max(logp_yes, logp_no);
    const double ey = std::exp(logp_yes - m);
    const double en = std::exp(logp_no - m);
    return ey / (ey + en);
}

ConsistencyResult consistency(const std::vector<std::optional<std::string>>& sample_answers,
                              const std::vector<double>& seq_logprobs) {
    const VoteResult vote = majority_vote(sample_answers, seq_logprobs);
    ConsistencyResult out;
    out.majority = vote.answer;
    out.majority_count = vote.count;
    out.value = static_cast<double>(vote.count) / static_cast<double>(sample_answers.size());
    return out;
}

double to_confidence(std::string_view estimator, double raw_value) {
    if (estimator == "msp" || estimator == "src" || estimator == "consistency")
        return raw_value;
    if (estimator == "ppl" || estimator == "mte" || estimator == "mc_se" ||
        estimator == "mc_nse")
        return -raw_value;
    throw ConfigError("unknown estimator '" + std::string(estimator) + "'");
}

} // namespace est
} // namespace uq
