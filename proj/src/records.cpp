#include "uq/records.hpp"

#include <cmath>
#include <unordered_set>

#include "uq/errors.hpp"
#include "uq/jsonl.hpp"

namespace uq {

namespace {

using nlohmann::json;

const json& need(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError(std::string(key) + ": required field missing");
    return *it;
}

std::string need_string(const json& j, const char* key) {
    const json& v = need(j, key);
    if (!v.is_string()) throw ValidationError(std::string(key) + ": expected a string");
    return v.get<std::string>();
}

bool need_bool(const json& j, const char* key) {
    const json& v = need(j, key);
    if (!v.is_boolean()) throw ValidationError(std::string(key) + ": expected a boolean");
    return v.get<bool>();
}

std::optional<std::string> opt_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) return std::nullopt;
    if (!it->is_string()) throw ValidationError(std::string(key) + ": expected a string");
    return it->get<std::string>();
}

std::vector<std::string> string_list(const json& v, const char* key) {
    if (!v.is_array()) throw ValidationError(std::string(key) + ": expected an array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
        if (!e.is_string()) throw ValidationError(std::string(key) + ": expected an array of strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

TokenRange range_from_json(const json& v, const char* key) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_unsigned() || !v[1].is_number_unsigned())
        throw ValidationError(std::string(key) + ": expected [begin, end] with non-negative integers");
    TokenRange r{v[0].get<std::size_t>(), v[1].get<std::size_t>()};
    if (r.end < r.begin) throw ValidationError(std::string(key) + ": end < begin");
    return r;
}

json range_to_json(const TokenRange& r) { return json::array({r.begin, r.end}); }

TokenScore token_from_json(const json& v, const std::string& where) {
    if (!v.is_object()) throw ValidationError(where + ": expected an object");
    TokenScore t;
    t.text = need_string(v, "text");
    t.logprob = logprob_from_json(need(v, "logprob"), where + ".logprob");
    if (auto it = v.find("entropy"); it != v.end()) {
        if (!it->is_number()) throw ValidationError(where + ".entropy: expected a number");
        t.entropy = it->get<double>();
    }
    if (auto it = v.find("alternatives"); it != v.end()) {
        if (!it->is_array()) throw ValidationError(where + ".alternatives: expected an array");
        std::vector<std::pair<std::string, double>> alts;
        for (const auto& a : *it) {
            if (!a.is_array() || a.size() != 2 || !a[0].is_string())
                throw ValidationError(where + ".alternatives: expected [text, logprob] pairs");
            alts.emplace_back(a[0].get<std::string>(),
                              logprob_from_json(a[1], where + ".alternatives.logprob"));
        }
        t.alternatives = std::move(alts);
    }
    return t;
}

json token_to_json(const TokenScore& t) {
    json v = json::object();
    v["text"] = t.text;
    v["logprob"] = logprob_to_json(t.logprob);
    if (t.entropy) v["entropy"] = *t.entropy;
    if (t.alternatives) {
        json alts = json::array();
        for (const auto& [text, lp] : *t.alternatives)
            alts.push_back(json::array({text, logprob_to_json(lp)}));
        v["alternatives"] = std::move(alts);
    }
    return v;
}

const char* const kRecordKeys[] = {
    "id", "dataset", "model", "mode", "question", "options", "gold_answers", "image_ref",
    "raw_text", "tokens", "spans", "parsed_answer", "parse_ok", "correct", "variant",
    "logprob_kind", "tag_violation", "retokenized", "retokenized_lengths",
};

std::string span_text(const GenerationRecord& r, const TokenRange& range) {
    std::string out;
    for (std::size_t i = range.begin; i < range.end && i < r.tokens.size(); ++i)
        out += r.tokens[i].text;
    return out;
}

} // namespace

std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::no_cot: return "no_cot";
        case Mode::cot: return "cot";
        case Mode::thinking: return "thinking";
    }
    return "no_cot";
}

Mode mode_from_string(const std::string& s) {
    if (s == "no_cot") return Mode::no_cot;
    if (s == "cot") return Mode::cot;
    if (s == "thinking") return Mode::thinking;
    throw ValidationError("mode: expected one of no_cot|cot|thinking, got '" + s + "'");
}

std::vector<double> GenerationRecord::answer_logprobs() const {
    std::vector<double> out;
    out.reserve(spans.answer.size());
    for (std::size_t i = spans.answer.begin; i < spans.answer.end && i < tokens.size(); ++i)
        out.push_back(tokens[i].logprob);
    return out;
}

std::string GenerationRecord::answer_span_text() const { return span_text(*this, spans.answer); }
std::string GenerationRecord::reasoning_span_text() const { return span_text(*this, spans.reasoning); }

void validate(const GenerationRecord& r) {
    if (r.id.empty()) throw ValidationError("id: must be non-empty");
    for (std::size_t i = 0; i < r.tokens.size(); ++i) {
        const auto& t = r.tokens[i];
        const std::string where = "tokens[" + std::to_string(i) + "]";
        if (std::isnan(t.logprob) || t.logprob > 0.0)
            throw ValidationError(where + ".logprob: logprob <= 0 violated (got " +
                                  std::to_string(t.logprob) + ")");
        if (t.entropy) {
            if (!std::isfinite(*t.entropy) || *t.entropy < 0.0)
                throw ValidationError(where + ".entropy: entropy >= 0 violated");
        }
        if (t.alternatives) {
            double prev = 0.0;
            bool first = true;
            for (const auto& [text, lp] : *t.alternatives) {
                (void)text;
                if (std::isnan(lp) || lp > 0.0)
                    throw ValidationError(where + ".alternatives: logprob <= 0 violated");
                if (!first && lp > prev)
                    throw ValidationError(where + ".alternatives: not sorted by descending logprob");
                prev = lp;
                first = false;
            }
        }
    }
    const auto& sp = r.spans;
    if (sp.reasoning.end > sp.answer.begin)
        throw ValidationError("spans: reasoning must precede the answer span");
    if (sp.answer.end > r.tokens.size())
        throw ValidationError("spans.answer: out of range (end " + std::to_string(sp.answer.end) +
                              " > token count " + std::to_string(r.tokens.size()) + ")");
    if (r.parse_ok) {
        if (sp.answer.empty())
            throw ValidationError("spans.answer: must be non-empty when parse_ok");
        if (!r.parsed_answer)
            throw ValidationError("parsed_answer: required when parse_ok");
    } else if (r.parsed_answer) {
        throw ValidationError("parsed_answer: must be absent when parse_ok = false");
    }
    if (r.correct) {
        if (!std::isfinite(*r.correct) || *r.correct < 0.0 || *r.correct > 1.0)
            throw ValidationError("correct: must lie in [0, 1]");
    }
    if (r.variant && *r.variant != "masked" && *r.variant != "random_masked")
        throw ValidationError("variant: expected masked|random_masked, got '" + *r.variant + "'");
}

void validate(const SampleSet& s) {
    if (s.record_id.empty()) throw ValidationError("record_id: must be non-empty");
    if (s.samples.empty()) throw ValidationError("samples: must be non-empty");
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        const auto& d = s.samples[i];
        const std::string where = "samples[" + std::to_string(i) + "]";
        if (std::isnan(d.seq_logprob) || d.seq_logprob > 0.0)
            throw ValidationError(where + ".seq_logprob: logprob <= 0 violated");
        if (d.answer_len < 1) throw ValidationError(where + ".answer_len: must be >= 1");
        if (d.parse_ok && !d.parsed_answer)
            throw ValidationError(where + ".parsed_answer: required when parse_ok");
        if (!d.parse_ok && d.parsed_answer)
            throw ValidationError(where + ".parsed_answer: must be absent when parse_ok = false");
    }
}

void validate(const SrcProbe& p) {
    if (p.record_id.empty()) throw ValidationError("record_id: must be non-empty");
    if (std::isnan(p.logp_yes) || p.logp_yes > 0.0)
        throw ValidationError("logp_yes: logprob <= 0 violated");
    if (std::isnan(p.logp_no) || p.logp_no > 0.0)
        throw ValidationError("logp_no: logprob <= 0 violated");
    if (std::isinf(p.logp_yes) && std::isinf(p.logp_no))
        throw ValidationError("logp_yes/logp_no: must not both be -inf");
}

nlohmann::json to_json(const GenerationRecord& r) {
    json j = r.extra.is_object() ? r.extra : json::object();
    j["id"] = r.id;
    j["dataset"] = r.dataset;
    j["model"] = r.model;
    j["mode"] = to_string(r.mode);
    j["question"] = r.question;
    if (r.options) j["options"] = *r.options;
    j["gold_answers"] = r.gold_answers;
    if (r.image_ref) j["image_ref"] = *r.image_ref;
    j["raw_text"] = r.raw_text;
    json toks = json::array();
    for (const auto& t : r.tokens) toks.push_back(token_to_json(t));
    j["tokens"] = std::move(toks);
    j["spans"] = json{{"reasoning", range_to_json(r.spans.reasoning)},
                      {"answer", range_to_json(r.spans.answer)}};
    if (r.parsed_answer) j["parsed_answer"] = *r.parsed_answer;
    j["parse_ok"] = r.parse_ok;
    if (r.correct) {
        // Judge scores are booleans except for soft judges; keep the wire type tight.
        if (*r.correct == 0.0) j["correct"] = false;
        else if (*r.correct == 1.0) j["correct"] = true;
        else j["correct"] = *r.correct;
    }
    if (r.variant) j["variant"] = *r.variant;
    if (r.logprob_kind) j["logprob_kind"] = *r.logprob_kind;
    if (r.tag_violation) j["tag_violation"] = true;
    if (r.retokenized) j["retokenized"] = true;
    if (r.retokenized_lengths)
        j["retokenized_lengths"] = json::array({r.retokenized_lengths->first, r.retokenized_lengths->second});
    return j;
}

GenerationRecord record_from_json(const nlohmann::json& j) {
    GenerationRecord r;
    r.id = need_string(j, "id");
    r.dataset = need_string(j, "dataset");
    r.model = need_string(j, "model");
    r.mode = mode_from_string(need_string(j, "mode"));
    r.question = need_string(j, "question");
    if (auto it = j.find("options"); it != j.end()) r.options = string_list(*it, "options");
    r.gold_answers = string_list(need(j, "gold_answers"), "gold_answers");
    r.image_ref = opt_string(j, "image_ref");
    r.raw_text = need_string(j, "raw_text");
    {
        const json& toks = need(j, "tokens");
        if (!toks.is_array()) throw ValidationError("tokens: expected an array");
        std::size_t i = 0;
        for (const auto& t : toks)
            r.tokens.push_back(token_from_json(t, "tokens[" + std::to_string(i++) + "]"));
    }
    {
        const json& sp = need(j, "spans");
        if (!sp.is_object()) throw ValidationError("spans: expected an object");
        r.spans.reasoning = range_from_json(need(sp, "reasoning"), "spans.reasoning");
        r.spans.answer = range_from_json(need(sp, "answer"), "spans.answer");
    }
    r.parsed_answer = opt_string(j, "parsed_answer");
    r.parse_ok = need_bool(j, "parse_ok");
    if (auto it = j.find("correct"); it != j.end()) {
        if (it->is_boolean()) r.correct = it->get<bool>() ? 1.0 : 0.0;
        else if (it->is_number()) r.correct = it->get<double>();
        else throw ValidationError("correct: expected a boolean or a number");
    }
    r.variant = opt_string(j, "variant");
    r.logprob_kind = opt_string(j, "logprob_kind");
    if (auto it = j.find("tag_violation"); it != j.end()) {
        if (!it->is_boolean()) throw ValidationError("tag_violation: expected a boolean");
        r.tag_violation = it->get<bool>();
    }
    if (auto it = j.find("retokenized"); it != j.end()) {
        if (!it->is_boolean()) throw ValidationError("retokenized: expected a boolean");
        r.retokenized = it->get<bool>();
    }
    if (auto it = j.find("retokenized_lengths"); it != j.end()) {
        auto rr = range_from_json(*it, "retokenized_lengths");
        r.retokenized_lengths = std::make_pair(rr.begin, rr.end);
    }
    r.extra = j;
    for (const char* k : kRecordKeys) r.extra.erase(k);
    validate(r);
    return r;
}

nlohmann::json to_json(const SampleSet& s) {
    json j = json::object();
    j["record_id"] = s.record_id;
    j["seed"] = s.seed;
    json samples = json::array();
    for (const auto& d : s.samples) {
        json v = json::object();
        if (d.parsed_answer) v["parsed_answer"] = *d.parsed_answer;
        v["seq_logprob"] = logprob_to_json(d.seq_logprob);
        v["answer_len"] = d.answer_len;
        v["parse_ok"] = d.parse_ok;
        samples.push_back(std::move(v));
    }
    j["samples"] = std::move(samples);
    return j;
}

SampleSet sample_set_from_json(const nlohmann::json& j) {
    SampleSet s;
    s.record_id = need_string(j, "record_id");
    if (auto it = j.find("seed"); it != j.end()) {
        if (!it->is_number_unsigned() && !it->is_number_integer())
            throw ValidationError("seed: expected an integer");
        s.seed = it->get<std::uint64_t>();
    }
    const json& samples = need(j, "samples");
    if (!samples.is_array()) throw ValidationError("samples: expected an array");
    std::size_t i = 0;
    for (const auto& v : samples) {
        const std::string where = "samples[" + std::to_string(i++) + "]";
        if (!v.is_object()) throw ValidationError(where + ": expected an object");
        SampleDraw d;
        d.parsed_answer = opt_string(v, "parsed_answer");
        d.seq_logprob = logprob_from_json(need(v, "seq_logprob"), where + ".seq_logprob");
        const json& len = need(v, "answer_len");
        if (!len.is_number_unsigned()) throw ValidationError(where + ".answer_len: expected a positive integer");
        d.answer_len = len.get<std::size_t>();
        d.parse_ok = need_bool(v, "parse_ok");
        s.samples.push_back(std::move(d));
    }
    validate(s);
    return s;
}

nlohmann::json to_json(const SrcProbe& p) {
    return json{{"record_id", p.record_id},
                {"logp_yes", logprob_to_json(p.logp_yes)},
                {"logp_no", logprob_to_json(p.logp_no)}};
}

SrcProbe probe_from_json(const nlohmann::json& j) {
    SrcProbe p;
    p.record_id = need_string(j, "record_id");
    p.logp_yes = logprob_from_json(need(j, "logp_yes"), "logp_yes");
    p.logp_no = logprob_from_json(need(j, "logp_no"), "logp_no");
    validate(p);
    return p;
}

namespace {

template <class T, class FromJson>
std::vector<T> read_id_checked(const std::string& path, FromJson from_json,
                               const char* id_field_name) {
    std::vector<T> out;
    std::unordered_set<std::string> seen;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
        T item;
        try {
            item = from_json(j);
        } catch (const ValidationError& e) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        const std::string& id = [&]() -> const std::string& {
            if constexpr (std::is_same_v<T, GenerationRecord>) return item.id;
            else return item.record_id;
        }();
        if (!seen.insert(id).second)
            throw ValidationError(path + ":" + std::to_string(line_no) + ": duplicate " +
                                  id_field_name + " '" + id + "'");
        out.push_back(std::move(item));
    });
    return out;
}

} // namespace

std::vector<GenerationRecord> read_records(const std::string& path) {
    return read_id_checked<GenerationRecord>(path, record_from_json, "id");
}

void write_records(const std::vector<GenerationRecord>& records, const std::string& path) {
    std::vector<nlohmann::json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) {
        validate(r);
        lines.push_back(to_json(r));
    }
    write_jsonl_lines(path, lines);
}

std::vector<SampleSet> read_sample_sets(const std::string& path) {
    return read_id_checked<SampleSet>(path, sample_set_from_json, "record_id");
}

void write_sample_sets(const std::vector<SampleSet>& sets, const std::string& path) {
    std::vector<nlohmann::json> lines;
    lines.reserve(sets.size());
    for (const auto& s : sets) {
        validate(s);
        lines.push_back(to_json(s));
    }
    write_jsonl_lines(path, lines);
}

std::vector<SrcProbe> read_probes(const std::string& path) {
    return read_id_checked<SrcProbe>(path, probe_from_json, "record_id");
}

void write_probes(const std::vector<SrcProbe>& probes, const std::string& path) {
    std::vector<nlohmann::json> lines;
    lines.reserve(probes.size());
    for (const auto& p : probes) {
        validate(p);
        lines.push_back(to_json(p));
    }
    write_jsonl_lines(path, lines);
}

} // namespace uq
