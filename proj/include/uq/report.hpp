#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uq/records.hpp"
#include "uq/scoring.hpp"

namespace uq {

enum class ParseFailurePolicy {
    score_min, // failures count as incorrect at the estimator's minimum confidence
    exclude,   // failures are dropped from the ranking
};

ParseFailurePolicy parse_failure_policy_from_string(const std::string& s);

struct EstimatorMetrics {
    std::optional<double> augrc;
    std::optional<double> prr;
    std::optional<double> aurc;
    std::optional<double> spearman;
    std::string prr_note;      // reason when prr undefined
    std::string spearman_note; // reason when spearman undefined
    std::size_t n_scored = 0;  // samples entering this estimator's ranking
    std::size_t ties = 0;      // n_scored - distinct confidence values
};

/// Metrics for one dataset x mode group, mirroring the selective-generation
/// table layout (AUGRC down, PRR up, Spearman up) plus AURC.
struct EvalReport {
    std::string dataset;
    std::string mode;
    double accuracy = 0.0;
    std::size_t n = 0;
    std::size_t parse_failures = 0;
    std::vector<std::string> estimators; // report order
    std::map<std::string, EstimatorMetrics> per_estimator;
};

/// Joins records with scores by record id and computes per-estimator ranking
/// metrics for every dataset x mode group found in the records.
std::vector<EvalReport> evaluate_runs(const std::vector<GenerationRecord>& records,
                                      const std::vector<UqScoreSet>& scores,
                                      const std::vector<std::string>& estimators,
                                      ParseFailurePolicy policy);

/// CSV: dataset,mode,estimator,augrc,prr,aurc,spearman,accuracy,n
std::string render_csv(const std::vector<EvalReport>& reports);

/// CSV comparing two runs per estimator with delta columns (b - a).
std::string render_compare_csv(const std::vector<EvalReport>& a,
                               const std::vector<EvalReport>& b,
                               const std::string& label_a, const std::string& label_b);

/// Aligned text table; with a second run, adds the paired columns and the
/// delta block.
std::string render_table(const std::vector<EvalReport>& a,
                         const std::vector<EvalReport>* b,
                         const std::string& label_a, const std::string& label_b);

nlohmann::json report_to_json(const std::vector<EvalReport>& reports);

} // namespace uq
