#include "uq/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

#include "uq/errors.hpp"
#include "uq/format.hpp"
#include "uq/metrics.hpp"

namespace uq {

namespace {

std::string cell(const std::optional<double>& v) {
    return v ? format_number(*v) : std::string(kUndefinedCell);
}

std::string fixed3(const std::optional<double>& v) {
    if (!v) return kUndefinedCell;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", *v);
    return buf;
}

EstimatorMetrics metrics_for(std::vector<LabeledScore> labeled) {
    EstimatorMetrics m;
    m.n_scored = labeled.size();
    if (labeled.size() < 2) {
        m.prr_note = m.spearman_note = "fewer than 2 scored samples";
        return m;
    }
    std::set<double> distinct;
    for (const auto& s : labeled) distinct.insert(s.confidence);
    m.ties = labeled.size() - distinct.size();

    m.augrc = augrc(labeled);
    m.aurc = aurc(labeled);
    try {
        m.prr = prr(labeled);
    } catch (const PrrUndefined& e) {
        m.prr_note = e.what();
    }
    try {
        std::vector<double> conf, corr;
        conf.reserve(labeled.size());
        corr.reserve(labeled.size());
        for (const auto& s : labeled) {
            conf.push_back(s.confidence);
            corr.push_back(s.correct);
        }
        m.spearman = spearman(conf, corr);
    } catch (const CorrelationUndefined& e) {
        m.spearman_note = e.what();
    }
    return m;
}

} // namespace

ParseFailurePolicy parse_failure_policy_from_string(const std::string& s) {
    if (s == "score_min" || s == "min") return ParseFailurePolicy::score_min;
    if (s == "exclude") return ParseFailurePolicy::exclude;
    throw ConfigError("parse-failure policy: expected score_min|exclude, got '" + s + "'");
}

std::vector<EvalReport> evaluate_runs(const std::vector<GenerationRecord>& records,
                                      const std::vector<UqScoreSet>& scores,
                                      const std::vector<std::string>& estimators,
                                      ParseFailurePolicy policy) {
    std::unordered_map<std::string, const UqScoreSet*> by_id;
    for (const auto& s : scores) by_id[s.record_id] = &s;

    std::map<std::pair<std::string, std::string>, std::vector<const GenerationRecord*>> groups;
    for (const auto& r : records)
        groups[{r.dataset, to_string(r.mode)}].push_back(&r);

    std::vector<EvalReport> reports;
    for (const auto& [key, recs] : groups) {
        EvalReport rep;
        rep.dataset = key.first;
        rep.mode = key.second;
        rep.n = recs.size();
        rep.estimators = estimators;

        double acc_sum = 0.0;
        for (const GenerationRecord* r : recs) {
            if (!r->parse_ok) {
                ++rep.parse_failures;
                continue;
            }
            if (!r->correct)
                throw ValidationError("record '" + r->id + "' has no correctness label");
            acc_sum += *r->correct;
        }
        rep.accuracy = recs.empty() ? 0.0 : acc_sum / static_cast<double>(recs.size());

        for (const auto& est : estimators) {
            std::vector<LabeledScore> labeled;
            std::vector<const GenerationRecord*> failed;
            for (const GenerationRecord* r : recs) {
                if (!r->parse_ok) {
                    failed.push_back(r);
                    continue;
                }
                auto it = by_id.find(r->id);
                if (it == by_id.end()) continue; // unscored record: skip for this estimator
                const auto conf = it->second->confidence(est);
                if (!conf || !std::isfinite(*conf)) continue;
                labeled.push_back({r->id, *conf, *r->correct});
            }
            if (policy == ParseFailurePolicy::score_min && !labeled.empty()) {
                double min_conf = labeled.front().confidence;
                for (const auto& s : labeled) min_conf = std::min(min_conf, s.confidence);
                for (const GenerationRecord* r : failed)
                    labeled.push_back({r->id, min_conf, r->correct.value_or(0.0)});
            }
            rep.per_estimator[est] = metrics_for(std::move(labeled));
        }
        reports.push_back(std::move(rep));
    }
    return reports;
}

std::string render_csv(const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    out << "dataset,mode,estimator,augrc,prr,aurc,spearman,accuracy,n\n";
    for (const auto& rep : reports) {
        for (const auto& est : rep.estimators) {
            const auto& m = rep.per_estimator.at(est);
            out << rep.dataset << ',' << rep.mode << ',' << est << ',' << cell(m.augrc) << ','
                << cell(m.prr) << ',' << cell(m.aurc) << ',' << cell(m.spearman) << ','
                << format_number(rep.accuracy) << ',' << rep.n << '\n';
        }
    }
    return out.str();
}

namespace {

const EvalReport* find_report(const std::vector<EvalReport>& reports, const std::string& dataset) {
    for (const auto& r : reports)
        if (r.dataset == dataset) return &r;
    return nullptr;
}

std::optional<double> delta(const std::optional<double>& a, const std::optional<double>& b) {
    if (a && b) return *b - *a;
    return std::nullopt;
}

} // namespace

std::string render_compare_csv(const std::vector<EvalReport>& a, const std::vector<EvalReport>& b,
                               const std::string& label_a, const std::string& label_b) {
    std::ostringstream out;
    out << "dataset,estimator"
        << ",augrc_" << label_a << ",prr_" << label_a << ",spearman_" << label_a
        << ",augrc_" << label_b << ",prr_" << label_b << ",spearman_" << label_b
        << ",d_augrc,d_prr,d_spearman\n";
    for (const auto& ra : a) {
        const EvalReport* rb = find_report(b, ra.dataset);
        if (!rb) continue;
        for (const auto& est : ra.estimators) {
            const auto& ma = ra.per_estimator.at(est);
            const auto& mb = rb->per_estimator.at(est);
            out << ra.dataset << ',' << est << ',' << cell(ma.augrc) << ',' << cell(ma.prr) << ','
                << cell(ma.spearman) << ',' << cell(mb.augrc) << ',' << cell(mb.prr) << ','
                << cell(mb.spearman) << ',' << cell(delta(ma.augrc, mb.augrc)) << ','
                << cell(delta(ma.prr, mb.prr)) << ',' << cell(delta(ma.spearman, mb.spearman))
                << '\n';
        }
    }
    return out.str();
}

std::string render_table(const std::vector<EvalReport>& a, const std::vector<EvalReport>* b,
                         const std::string& label_a, const std::string& label_b) {
    std::ostringstream out;
    auto pad = [](const std::string& s, std::size_t w) {
        std::string p = s;
        // the em-dash cell is 3 bytes but 1 column
        std::size_t visual = s == kUndefinedCell ? 1 : s.size();
        while (visual++ < w) p += ' ';
        return p;
    };

    for (const auto& ra : a) {
        const EvalReport* rb = b ? find_report(*b, ra.dataset) : nullptr;
        out << "== " << ra.dataset << " ==\n";
        out << pad("estimator", 14);
        out << "| " << pad(label_a + " AUGRC", 14) << pad("PRR", 8) << pad("Spear.", 8);
        if (rb) {
            out << "| " << pad(label_b + " AUGRC", 14) << pad("PRR", 8) << pad("Spear.", 8);
            out << "| " << pad("dAUGRC", 8) << pad("dPRR", 8) << pad("dSpear.", 8);
        }
        out << '\n';
        for (const auto& est : ra.estimators) {
            const auto& ma = ra.per_estimator.at(est);
            out << pad(est, 14) << "| " << pad(fixed3(ma.augrc), 14) << pad(fixed3(ma.prr), 8)
                << pad(fixed3(ma.spearman), 8);
            if (rb) {
                const auto& mb = rb->per_estimator.at(est);
                out << "| " << pad(fixed3(mb.augrc), 14) << pad(fixed3(mb.prr), 8)
                    << pad(fixed3(mb.spearman), 8);
                out << "| " << pad(fixed3(delta(ma.augrc, mb.augrc)), 8)
                    << pad(fixed3(delta(ma.prr, mb.prr)), 8)
                    << pad(fixed3(delta(ma.spearman, mb.spearman)), 8);
            }
            out << '\n';
        }
        out << "accuracy " << format_number(ra.accuracy);
        if (rb) out << " / " << format_number(rb->accuracy);
        out << "  n " << ra.n << "  parse_failures " << ra.parse_failures;
        if (rb) out << " / " << rb->parse_failures;
        out << "\n\n";
    }
    return out.str();
}

nlohmann::json report_to_json(const std::vector<EvalReport>& reports) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& rep : reports) {
        nlohmann::json j;
        j["dataset"] = rep.dataset;
        j["mode"] = rep.mode;
        j["accuracy"] = rep.accuracy;
        j["n"] = rep.n;
        j["parse_failures"] = rep.parse_failures;
        nlohmann::json per = nlohmann::json::object();
        for (const auto& est : rep.estimators) {
            const auto& m = rep.per_estimator.at(est);
            nlohmann::json e = nlohmann::json::object();
            if (m.augrc) e["augrc"] = *m.augrc;
            if (m.prr) e["prr"] = *m.prr;
            else e["prr_note"] = m.prr_note;
            if (m.aurc) e["aurc"] = *m.aurc;
            if (m.spearman) e["spearman"] = *m.spearman;
            else e["spearman_note"] = m.spearman_note;
            e["n_scored"] = m.n_scored;
            e["ties"] = m.ties;
            per[est] = std::move(e);
        }
        j["estimators"] = std::move(per);
        arr.push_back(std::move(j));
    }
    return arr;
}

} // namespace uq
