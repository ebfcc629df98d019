#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "uq/records.hpp"

namespace uq {

/// Per-record estimator values. MSP is carried in log space (score files
/// store "log_msp"); exp() is applied only at presentation, so long answers
/// never underflow on the ranking path.
struct UqScoreSet {
    std::string record_id;
    std::optional<double> log_msp;
    std::optional<double> ppl;
    std::optional<double> mte;
    std::optional<double> mc_se;
    std::optional<double> mc_nse;
    std::optional<double> src;
    std::optional<double> consistency;
    bool mte_approx = false; // entropy reconstructed from top-k alternatives
    std::map<std::string, std::string> unavailable; // estimator -> reason

    /// Raw estimator value per its documented range (msp -> exp(log_msp)).
    std::optional<double> raw(std::string_view estimator) const;

    /// Oriented confidence, larger = accept first. msp maps to log_msp (a
    /// strictly increasing transform, so every ranking metric is unchanged);
    /// ppl/mte/mc_se/mc_nse are negated; src/consistency pass through.
    std::optional<double> confidence(std::string_view estimator) const;
};

/// Computes every requested estimator that has its inputs available;
/// missing inputs are recorded per record in `unavailable`, never thrown.
UqScoreSet compute_scores(const GenerationRecord& record,
                          const SampleSet* samples,
                          const SrcProbe* probe,
                          const std::vector<std::string>& estimators);

nlohmann::json to_json(const UqScoreSet& s);
UqScoreSet score_set_from_json(const nlohmann::json& j);
std::vector<UqScoreSet> read_score_sets(const std::string& path);
void write_score_sets(const std::vector<UqScoreSet>& sets, const std::string& path);

} // namespace uq
