#include "uq/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "uq/errors.hpp"
#include "uq/estimators.hpp"
#include "uq/jsonl.hpp"

namespace uq {

namespace {

std::optional<double> slot(const UqScoreSet& s, std::string_view name) {
    if (name == "msp") return s.log_msp; // log space
    if (name == "ppl") return s.ppl;
    if (name == "mte") return s.mte;
    if (name == "mc_se") return s.mc_se;
    if (name == "mc_nse") return s.mc_nse;
    if (name == "src") return s.src;
    if (name == "consistency") return s.consistency;
    throw ConfigError("unknown estimator '" + std::string(name) + "'");
}

bool wanted(const std::vector<std::string>& estimators, std::string_view name) {
    return std::find(estimators.begin(), estimators.end(), name) != estimators.end();
}

} // namespace

std::optional<double> UqScoreSet::raw(std::string_view estimator) const {
    auto v = slot(*this, estimator);
    if (!v) return std::nullopt;
    if (estimator == "msp") return std::exp(*v);
    return v;
}

std::optional<double> UqScoreSet::confidence(std::string_view estimator) const {
    auto v = slot(*this, estimator);
    if (!v) return std::nullopt;
    if (estimator == "msp") return *v; // log_msp orders identically to msp
    return est::to_confidence(estimator, *v);
}

UqScoreSet compute_scores(const GenerationRecord& record,
                          const SampleSet* samples,
                          const SrcProbe* probe,
                          const std::vector<std::string>& estimators) {
    for (const auto& e : estimators)
        if (!is_estimator_name(e)) throw ConfigError("unknown estimator '" + e + "'");

    UqScoreSet out;
    out.record_id = record.id;

    const std::vector<double> answer_lps = record.answer_logprobs();
    const bool have_answer = record.parse_ok && !answer_lps.empty();
    const char* no_answer = "no answer span (parse failure)";

    if (wanted(estimators, "msp")) {
        if (have_answer) out.log_msp = est::log_msp(answer_lps);
        else out.unavailable["msp"] = no_answer;
    }
    if (wanted(estimators, "ppl")) {
        if (have_answer) out.ppl = est::perplexity(answer_lps);
        else out.unavailable["ppl"] = no_answer;
    }
    if (wanted(estimators, "mte")) {
        if (!have_answer) {
            out.unavailable["mte"] = no_answer;
        } else {
            std::vector<double> entropies;
            entropies.reserve(record.spans.answer.size());
            bool approx = false;
            std::string missing;
            for (std::size_t i = record.spans.answer.begin; i < record.spans.answer.end; ++i) {
                const TokenScore& t = record.tokens[i];
                if (t.entropy) {
                    entropies.push_back(*t.entropy);
                } else if (t.alternatives && !t.alternatives->empty()) {
                    entropies.push_back(est::truncated_entropy(*t.alternatives));
                    approx = true;
                } else {
                    missing = "missing entropy at answer position " + std::to_string(i);
                    break;
                }
            }
            if (!missing.empty()) {
                out.unavailable["mte"] = missing;
            } else {
                out.mte = est::mean_token_entropy(entropies);
                out.mte_approx = approx;
            }
        }
    }

    const char* no_samples = "no sample set";
    if (wanted(estimators, "mc_se")) {
        if (!samples) {
            out.unavailable["mc_se"] = no_samples;
        } else {
            std::vector<double> lps;
            for (const auto& d : samples->samples) lps.push_back(d.seq_logprob);
            out.mc_se = est::mc_sequence_entropy(lps);
        }
    }
    if (wanted(estimators, "mc_nse")) {
        if (!samples) {
            out.unavailable["mc_nse"] = no_samples;
        } else {
            std::vector<double> lps;
            std::vector<std::size_t> lens;
            for (const auto& d : samples->samples) {
                lps.push_back(d.seq_logprob);
                lens.push_back(d.answer_len);
            }
            out.mc_nse = est::mc_normalized_sequence_entropy(lps, lens);
        }
    }
    if (wanted(estimators, "consistency")) {
        if (!samples) {
            out.unavailable["consistency"] = no_samples;
        } else {
            std::vector<std::optional<std::string>> answers;
            std::vector<double> lps;
            for (const auto& d : samples->samples) {
                answers.push_back(d.parsed_answer);
                lps.push_back(d.seq_logprob);
            }
            try {
                out.consistency = est::consistency(answers, lps).value;
            } catch (const VoteFailure&) {
                out.unavailable["consistency"] = "no parseable sample";
            }
        }
    }
    if (wanted(estimators, "src")) {
        if (!probe) out.unavailable["src"] = "no self-report probe";
        else out.src = est::src_confidence(probe->logp_yes, probe->logp_no);
    }
    return out;
}

nlohmann::json to_json(const UqScoreSet& s) {
    nlohmann::json scores = nlohmann::json::object();
    if (s.log_msp) scores["log_msp"] = logprob_to_json(*s.log_msp);
    if (s.ppl) scores["ppl"] = *s.ppl;
    if (s.mte) scores["mte"] = *s.mte;
    if (s.mc_se) scores["mc_se"] = *s.mc_se;
    if (s.mc_nse) scores["mc_nse"] = *s.mc_nse;
    if (s.src) scores["src"] = *s.src;
    if (s.consistency) scores["consistency"] = *s.consistency;

    nlohmann::json j = nlohmann::json::object();
    j["record_id"] = s.record_id;
    j["scores"] = std::move(scores);
    if (s.mte_approx) j["flags"] = nlohmann::json{{"mte_approx", true}};
    if (!s.unavailable.empty()) j["unavailable"] = s.unavailable;
    return j;
}

UqScoreSet score_set_from_json(const nlohmann::json& j) {
    UqScoreSet s;
    if (!j.contains("record_id") || !j["record_id"].is_string())
        throw ValidationError("record_id: required string field missing");
    s.record_id = j["record_id"].get<std::string>();
    if (auto it = j.find("scores"); it != j.end()) {
        if (!it->is_object()) throw ValidationError("scores: expected an object");
        auto get = [&](const char* key) -> std::optional<double> {
            auto f = it->find(key);
            if (f == it->end()) return std::nullopt;
            return logprob_from_json(*f, std::string("scores.") + key);
        };
        s.log_msp = get("log_msp");
        s.ppl = get("ppl");
        s.mte = get("mte");
        s.mc_se = get("mc_se");
        s.mc_nse = get("mc_nse");
        s.src = get("src");
        s.consistency = get("consistency");
    }
    if (auto it = j.find("flags"); it != j.end() && it->is_object())
        s.mte_approx = it->value("mte_approx", false);
    if (auto it = j.find("unavailable"); it != j.end()) {
        if (!it->is_object()) throw ValidationError("unavailable: expected an object");
        for (auto& [k, v] : it->items()) {
            if (!v.is_string()) throw ValidationError("unavailable: values must be strings");
            s.unavailable[k] = v.get<std::string>();
        }
    }
    if (s.ppl && *s.ppl < 1.0) throw ValidationError("scores.ppl: must be >= 1");
    if (s.mte && *s.mte < 0.0) throw ValidationError("scores.mte: must be >= 0");
    if (s.src && (*s.src < 0.0 || *s.src > 1.0)) throw ValidationError("scores.src: must be in [0, 1]");
    if (s.consistency && (*s.consistency <= 0.0 || *s.consistency > 1.0))
        throw ValidationError("scores.consistency: must be in (0, 1]");
    if (s.log_msp && *s.log_msp > 0.0) throw ValidationError("scores.log_msp: must be <= 0");
    return s;
}

std::vector<UqScoreSet> read_score_sets(const std::string& path) {
    std::vector<UqScoreSet> out;
    std::unordered_set<std::string> seen;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
        UqScoreSet s;
        try {
            s = score_set_from_json(j);
        } catch (const ValidationError& e) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen.insert(s.record_id).second)
            throw ValidationError(path + ":" + std::to_string(line_no) + ": duplicate record_id '" +
                                  s.record_id + "'");
        out.push_back(std::move(s));
    });
    return out;
}

void write_score_sets(const std::vector<UqScoreSet>& sets, const std::string& path) {
    std::vector<nlohmann::json> lines;
    lines.reserve(sets.size());
    for (const auto& s : sets) lines.push_back(to_json(s));
    write_jsonl_lines(path, lines);
}

} // namespace uq
