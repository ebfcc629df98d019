#include "uq/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <unordered_map>

#include "uq/errors.hpp"
#include "uq/estimators.hpp"
#include "uq/parsing.hpp"
#include "uq/textmatch.hpp"

namespace uq {

namespace {

struct Joined {
    const GenerationRecord* record;
    const UqScoreSet* scores;
};

std::unordered_map<std::string, Joined> join_by_id(const std::vector<GenerationRecord>& records,
                                                   const std::vector<UqScoreSet>& scores) {
    std::unordered_map<std::string, const UqScoreSet*> score_by_id;
    for (const auto& s : scores) score_by_id[s.record_id] = &s;
    std::unordered_map<std::string, Joined> out;
    for (const auto& r : records) {
        auto it = score_by_id.find(r.id);
        out[r.id] = {&r, it == score_by_id.end() ? nullptr : it->second};
    }
    return out;
}

std::string reasoning_trace(const GenerationRecord& r) {
    const auto parsed = extract_tagged(r.raw_text);
    if (parsed && parsed->think_text) return *parsed->think_text;
    return "";
}

} // namespace

ShiftPartition partition_shift(const std::vector<GenerationRecord>& base_records,
                               const std::vector<UqScoreSet>& base_scores,
                               const std::vector<GenerationRecord>& variant_records,
                               const std::vector<UqScoreSet>& variant_scores,
                               const std::string& estimator,
                               double correct_threshold) {
    auto base = join_by_id(base_records, base_scores);
    auto variant = join_by_id(variant_records, variant_scores);
    if (base.size() != variant.size())
        throw ValidationError("partition_shift: record id sets differ in size");
    for (const auto& [id, j] : base)
        if (!variant.count(id))
            throw ValidationError("partition_shift: record '" + id + "' missing in variant run");

    struct Counts {
        std::size_t inc = 0, dec = 0, same = 0;
    };
    Counts counts[4];
    ShiftPartition out;

    for (const auto& [id, jb] : base) {
        const Joined& jv = variant.at(id);
        if (!jb.scores || !jv.scores) {
            ++out.excluded;
            continue;
        }
        const auto cb = jb.scores->confidence(estimator);
        const auto cv = jv.scores->confidence(estimator);
        if (!cb || !cv) {
            ++out.excluded;
            continue;
        }
        const bool correct_b = jb.record->correct.value_or(0.0) >= correct_threshold;
        const bool correct_v = jv.record->correct.value_or(0.0) >= correct_threshold;
        // order: becomes_correct, remains_correct, becomes_incorrect, remains_incorrect
        const std::size_t cellno = !correct_b && correct_v   ? 0
                                   : correct_b && correct_v  ? 1
                                   : correct_b && !correct_v ? 2
                                                             : 3;
        if (*cv > *cb) ++counts[cellno].inc;
        else if (*cv < *cb) ++counts[cellno].dec;
        else ++counts[cellno].same;
    }

    static const char* kGroups[4] = {"becomes_correct", "remains_correct", "becomes_incorrect",
                                     "remains_incorrect"};
    for (std::size_t g = 0; g < 4; ++g) {
        ShiftCell cell;
        cell.group = kGroups[g];
        cell.n = counts[g].inc + counts[g].dec + counts[g].same;
        if (cell.n > 0) {
            const double n = static_cast<double>(cell.n);
            cell.increased = static_cast<double>(counts[g].inc) / n;
            cell.decreased = static_cast<double>(counts[g].dec) / n;
            cell.unchanged = static_cast<double>(counts[g].same) / n;
        }
        out.cells.push_back(std::move(cell));
    }
    return out;
}

std::size_t answer_frequency(std::string_view trace, std::string_view final_answer) {
    if (final_answer.empty())
        throw ValidationError("answer_frequency: final answer must be non-empty");
    return count_mentions(trace, final_answer);
}

CorrelationResult frequency_confidence_correlation(const std::vector<GenerationRecord>& records,
                                                   const std::vector<UqScoreSet>& scores,
                                                   FrequencyFilter filter,
                                                   const std::string& estimator,
                                                   double correct_threshold) {
    std::unordered_map<std::string, const UqScoreSet*> score_by_id;
    for (const auto& s : scores) score_by_id[s.record_id] = &s;

    std::vector<double> freq, conf;
    for (const auto& r : records) {
        if (!r.parse_ok || !r.parsed_answer) continue;
        if (filter == FrequencyFilter::incorrect_only &&
            r.correct.value_or(0.0) >= correct_threshold)
            continue;
        auto it = score_by_id.find(r.id);
        if (it == score_by_id.end()) continue;
        const auto c = it->second->confidence(estimator);
        if (!c) continue;
        freq.push_back(static_cast<double>(answer_frequency(reasoning_trace(r), *r.parsed_answer)));
        conf.push_back(*c);
    }
    if (freq.size() < 2)
        throw CorrelationUndefined("fewer than 2 usable records after filtering");
    return {spearman(freq, conf), freq.size(), 0};
}

CorrelationResult reasoning_length_correlation(const std::vector<GenerationRecord>& records,
                                               const std::vector<UqScoreSet>& scores,
                                               const std::string& estimator) {
    std::unordered_map<std::string, const UqScoreSet*> score_by_id;
    for (const auto& s : scores) score_by_id[s.record_id] = &s;

    std::vector<double> length, conf, correct;
    for (const auto& r : records) {
        if (r.spans.reasoning.empty()) continue; // no reasoning trace logged
        auto it = score_by_id.find(r.id);
        if (it == score_by_id.end()) continue;
        const auto c = it->second->confidence(estimator);
        if (!c || !r.correct) continue;
        length.push_back(static_cast<double>(r.spans.reasoning.size()));
        conf.push_back(*c);
        correct.push_back(*r.correct);
    }
    if (length.empty())
        throw ValidationError("reasoning_length_correlation: no records with reasoning spans");
    return {partial_spearman(length, conf, {correct}), length.size(), 1};
}

SampleSet subsample_k(const SampleSet& sample_set, std::size_t k, std::uint64_t seed) {
    const std::size_t K = sample_set.samples.size();
    if (k < 1 || k > K)
        throw ValidationError("subsample_k: k must be in [1, " + std::to_string(K) + "]");
    std::vector<std::size_t> perm(K);
    for (std::size_t i = 0; i < K; ++i) perm[i] = i;
    // Full seeded permutation; taking prefixes makes subsets nested across k.
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i + 1 < K; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, K - 1);
        std::swap(perm[i], perm[pick(rng)]);
    }
    perm.resize(k);
    std::sort(perm.begin(), perm.end()); // keep original sample order
    SampleSet out;
    out.record_id = sample_set.record_id;
    out.seed = seed;
    for (std::size_t idx : perm) out.samples.push_back(sample_set.samples[idx]);
    return out;
}

std::vector<KAblationRow> k_ablation(const std::vector<GenerationRecord>& records,
                                     const std::vector<SampleSet>& sample_sets,
                                     const std::vector<std::size_t>& k_values,
                                     std::uint64_t seed, const JudgeConfig& judge) {
    std::unordered_map<std::string, const SampleSet*> sets_by_id;
    for (const auto& s : sample_sets) sets_by_id[s.record_id] = &s;

    static const char* kSampleEstimators[] = {"consistency", "mc_se", "mc_nse"};
    std::vector<KAblationRow> rows;

    for (std::size_t k : k_values) {
        struct Entry {
            std::string id;
            double correct;
            std::optional<double> consistency, mc_se, mc_nse;
        };
        std::vector<Entry> entries;
        for (const auto& r : records) {
            auto it = sets_by_id.find(r.id);
            if (it == sets_by_id.end()) continue;
            if (k > it->second->samples.size()) continue;
            const SampleSet sub = subsample_k(*it->second, k, seed);

            Entry e;
            e.id = r.id;
            std::vector<std::optional<std::string>> answers;
            std::vector<double> lps;
            std::vector<double> all_lps;
            std::vector<std::size_t> lens;
            for (const auto& d : sub.samples) {
                answers.push_back(d.parsed_answer);
                lps.push_back(d.seq_logprob);
                all_lps.push_back(d.seq_logprob);
                lens.push_back(d.answer_len);
            }
            e.mc_se = est::mc_sequence_entropy(all_lps);
            e.mc_nse = est::mc_normalized_sequence_entropy(all_lps, lens);
            try {
                // prediction = majority vote of the subset, so accuracy moves with k
                const VoteResult vote = majority_vote(answers, lps);
                e.correct = r.gold_answers.empty()
                                ? 0.0
                                : judge_correct(vote.answer, r.gold_answers, r.options, judge);
                e.consistency =
                    static_cast<double>(vote.count) / static_cast<double>(sub.samples.size());
            } catch (const VoteFailure&) {
                e.correct = 0.0; // no parseable draw: counts as incorrect
            }
            entries.push_back(std::move(e));
        }

        for (const char* est_name : kSampleEstimators) {
            std::vector<LabeledScore> labeled;
            std::vector<const Entry*> missing;
            for (const auto& e : entries) {
                std::optional<double> raw;
                if (std::string_view(est_name) == "consistency") raw = e.consistency;
                else if (std::string_view(est_name) == "mc_se") raw = e.mc_se;
                else raw = e.mc_nse;
                if (raw) labeled.push_back({e.id, est::to_confidence(est_name, *raw), e.correct});
                else missing.push_back(&e);
            }
            if (!labeled.empty()) {
                double min_conf = labeled.front().confidence;
                for (const auto& s : labeled) min_conf = std::min(min_conf, s.confidence);
                for (const Entry* e : missing) labeled.push_back({e->id, min_conf, e->correct});
            }
            KAblationRow row;
            row.k = k;
            row.estimator = est_name;
            if (labeled.size() >= 2) {
                row.augrc = augrc(labeled);
                try {
                    row.prr = prr(labeled);
                } catch (const PrrUndefined&) {
                }
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::vector<LengthRow> length_summary(const std::vector<GenerationRecord>& records) {
    struct Acc {
        std::vector<double> ans, reas;
    };
    std::map<std::tuple<std::string, std::string, std::string>, Acc> groups;
    for (const auto& r : records) {
        Acc& acc = groups[{r.model, r.dataset, to_string(r.mode)}];
        acc.ans.push_back(static_cast<double>(r.spans.answer.size()));
        acc.reas.push_back(static_cast<double>(r.spans.reasoning.size()));
    }
    auto mean_std = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        var /= static_cast<double>(v.size()); // population variance
        return std::make_pair(mean, std::sqrt(var));
    };
    std::vector<LengthRow> rows;
    for (const auto& [key, acc] : groups) {
        if (acc.ans.empty()) continue;
        LengthRow row;
        row.model = std::get<0>(key);
        row.dataset = std::get<1>(key);
        row.mode = std::get<2>(key);
        row.n = acc.ans.size();
        std::tie(row.answer_mean, row.answer_std) = mean_std(acc.ans);
        std::tie(row.reasoning_mean, row.reasoning_std) = mean_std(acc.reas);
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace uq
