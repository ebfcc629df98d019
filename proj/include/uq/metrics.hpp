#pragma once

#include <span>
#include <string>
#include <vector>

namespace uq {

/// One evaluated sample: an oriented confidence (larger = accept first) and
/// a correctness score in [0, 1]. The error function is l = 1 - correct.
struct LabeledScore {
    std::string record_id;
    double confidence = 0.0; // finite
    double correct = 0.0;    // in [0, 1]
};

struct CurvePoint {
    double x = 0.0;     // rejected fraction or coverage, in [0, 1]
    double value = 0.0; // error rate / risk / generalized risk
};

/// Error rate among kept samples at rejected fraction i/n, i = 0..n,
/// rejecting ascending confidence first. Ties are rejected as a block with
/// the block mean interpolated (equivalently: the average over all
/// tie-consistent orders). The empty set at i = n has error 0.
std::vector<CurvePoint> rejection_curve(std::span<const LabeledScore> scores);

/// AR_unc / AR_orc: trapezoidal areas between the rejection curve and the
/// constant-confidence baseline curve (both built by rejection_curve, so
/// constant input yields exactly 0 and the oracle exactly 1).
/// Throws PrrUndefined when the oracle area is zero.
double prr(std::span<const LabeledScore> scores);

/// Generalized risk (expected accepted-and-incorrect mass / N) at coverage
/// i/n, accepting descending confidence first, tie-averaged.
std::vector<CurvePoint> generalized_risk_curve(std::span<const LabeledScore> scores);

/// Trapezoidal integral of the generalized risk curve over coverage.
double augrc(std::span<const LabeledScore> scores);

/// Selective risk (error among accepted) at coverage i/n for i = 1..n; the
/// coverage-0 point repeats the first accepted sample's risk.
std::vector<CurvePoint> selective_risk_curve(std::span<const LabeledScore> scores);

/// Mean selective risk over the n coverage levels (the step integral of the
/// risk-coverage curve with the stated coverage-0 convention).
double aurc(std::span<const LabeledScore> scores);

/// Average ranks (1-based, ties share the mean rank).
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation with the standard tie correction (Pearson on
/// average ranks). Throws CorrelationUndefined on a constant vector.
double spearman(std::span<const double> a, std::span<const double> b);

/// Rank-transforms x, y and every control, residualizes the ranked x and y
/// against [intercept, control ranks] by least squares, and correlates the
/// residuals. Collinear control columns are dropped; with no effective
/// controls this is exactly spearman(x, y).
double partial_spearman(std::span<const double> x, std::span<const double> y,
                        const std::vector<std::vector<double>>& controls);

struct FisherInput {
    double r = 0.0;
    std::size_t n = 0;
    std::size_t k_controls = 0;
};

struct FisherAggregate {
    double mean_r = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

/// Inverse-variance pooling of Fisher z-transformed correlations with a 95%
/// normal interval; weights are n - 3 - k.
FisherAggregate fisher_aggregate(std::span<const FisherInput> inputs);

} // namespace uq
