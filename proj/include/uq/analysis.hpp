#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uq/metrics.hpp"
#include "uq/parsing.hpp"
#include "uq/records.hpp"
#include "uq/scoring.hpp"

namespace uq {

/// One correctness-transition group of the confidence-shift partition.
struct ShiftCell {
    std::string group; // becomes_correct | remains_correct | becomes_incorrect | remains_incorrect
    double increased = 0.0;
    double decreased = 0.0;
    double unchanged = 0.0; // bit-exact equality of stored confidences
    std::size_t n = 0;
};

struct ShiftPartition {
    std::vector<ShiftCell> cells; // fixed order, 4 entries
    std::size_t excluded = 0;     // records lacking a confidence in either condition
};

/// Groups matched records by (correct_base -> correct_variant), thresholding
/// fractional correctness at `correct_threshold`, and classifies confidence
/// deltas with an equality tolerance of zero.
ShiftPartition partition_shift(const std::vector<GenerationRecord>& base_records,
                               const std::vector<UqScoreSet>& base_scores,
                               const std::vector<GenerationRecord>& variant_records,
                               const std::vector<UqScoreSet>& variant_scores,
                               const std::string& estimator,
                               double correct_threshold = 0.5);

/// Boundary-respecting, case-insensitive occurrence count; shares the exact
/// matcher used by mask_answer_mentions.
std::size_t answer_frequency(std::string_view trace, std::string_view final_answer);

enum class FrequencyFilter { all, incorrect_only };

struct CorrelationResult {
    double r = 0.0;
    std::size_t n = 0;
    std::size_t k_controls = 0;
};

/// Spearman between answer-mention frequency in the reasoning trace and the
/// estimator's confidence.
CorrelationResult frequency_confidence_correlation(const std::vector<GenerationRecord>& records,
                                                   const std::vector<UqScoreSet>& scores,
                                                   FrequencyFilter filter,
                                                   const std::string& estimator,
                                                   double correct_threshold = 0.5);

/// Partial Spearman between reasoning-span token count and confidence,
/// controlling for correctness.
CorrelationResult reasoning_length_correlation(const std::vector<GenerationRecord>& records,
                                               const std::vector<UqScoreSet>& scores,
                                               const std::string& estimator);

/// Uniform without-replacement subsample via a seeded permutation prefix, so
/// the k-subset nests inside the (k+1)-subset for the same seed.
SampleSet subsample_k(const SampleSet& sample_set, std::size_t k, std::uint64_t seed);

struct KAblationRow {
    std::size_t k = 0;
    std::string estimator; // consistency | mc_se | mc_nse
    std::optional<double> augrc;
    std::optional<double> prr;
};

/// Sample-count ablation: for each k, subsamples every record's draws
/// (seeded, nested), takes the majority answer of the subset as the
/// prediction, re-judges it, recomputes the sample-based estimators and
/// reports AUGRC/PRR. Records whose subset has no parseable draw count as
/// incorrect at the minimum confidence.
std::vector<KAblationRow> k_ablation(const std::vector<GenerationRecord>& records,
                                     const std::vector<SampleSet>& sample_sets,
                                     const std::vector<std::size_t>& k_values,
                                     std::uint64_t seed, const JudgeConfig& judge);

struct LengthRow {
    std::string model;
    std::string dataset;
    std::string mode;
    double answer_mean = 0.0;
    double answer_std = 0.0; // population std
    double reasoning_mean = 0.0;
    double reasoning_std = 0.0;
    std::size_t n = 0;
};

/// Mean +/- population std of answer and reasoning token counts per
/// model x dataset x mode group; empty groups are omitted.
std::vector<LengthRow> length_summary(const std::vector<GenerationRecord>& records);

} // namespace uq
