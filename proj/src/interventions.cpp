#include "uq/interventions.hpp"

#include <algorithm>
#include <cctype>
#include <random>

#include "uq/errors.hpp"
#include "uq/jsonl.hpp"
#include "uq/parsing.hpp"

namespace uq {

namespace {

MaskResult apply_ranges(std::string_view trace, std::vector<CharRange> ranges) {
    std::sort(ranges.begin(), ranges.end(),
              [](const CharRange& a, const CharRange& b) { return a.begin < b.begin; });
    MaskResult out;
    out.masked_char_ranges = ranges;
    out.mask_count = ranges.size();
    std::size_t pos = 0;
    for (const auto& r : ranges) {
        out.masked_trace.append(trace.substr(pos, r.begin - pos));
        out.masked_trace.append(kMaskToken);
        pos = r.end;
    }
    out.masked_trace.append(trace.substr(pos));
    return out;
}

std::vector<CharRange> ws_token_ranges(std::string_view s) {
    std::vector<CharRange> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i >= s.size()) break;
        std::size_t b = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        out.push_back({b, i});
    }
    return out;
}

} // namespace

MaskResult mask_answer_mentions(std::string_view trace, std::string_view predicted_answer) {
    if (predicted_answer.empty())
        throw ValidationError("mask_answer_mentions: predicted answer must be non-empty");
    return apply_ranges(trace, find_mentions(trace, predicted_answer));
}

MaskResult mask_random_tokens(std::string_view trace, std::size_t count, std::uint64_t seed) {
    std::vector<CharRange> tokens = ws_token_ranges(trace);
    if (count > tokens.size())
        throw ValidationError("mask_random_tokens: count " + std::to_string(count) +
                              " exceeds token count " + std::to_string(tokens.size()));
    // Fisher-Yates prefix, fixed engine: identical output across runs.
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, tokens.size() - 1);
        std::swap(tokens[i], tokens[pick(rng)]);
    }
    tokens.resize(count);
    return apply_ranges(trace, std::move(tokens));
}

std::string unmask(const MaskResult& mask, std::string_view original_trace) {
    std::string out;
    std::size_t orig_pos = 0;   // position in the original trace
    std::size_t masked_pos = 0; // position in the masked trace
    const std::size_t mask_len = std::string_view(kMaskToken).size();
    for (const auto& r : mask.masked_char_ranges) {
        const std::size_t keep = r.begin - orig_pos;
        out.append(mask.masked_trace.substr(masked_pos, keep));
        masked_pos += keep;
        if (mask.masked_trace.compare(masked_pos, mask_len, kMaskToken) != 0)
            throw ValidationError("unmask: mask token not found at recorded position");
        masked_pos += mask_len;
        out.append(original_trace.substr(r.begin, r.size()));
        orig_pos = r.end;
    }
    out.append(mask.masked_trace.substr(masked_pos));
    return out;
}

ScoringRequest build_rescore_request(const GenerationRecord& record, const MaskResult& mask,
                                     std::string_view variant, const PromptLibrary& prompts) {
    if (!record.parse_ok)
        throw ValidationError("build_rescore_request: record '" + record.id + "' failed to parse");
    const auto parsed = extract_tagged(record.raw_text);
    if (!parsed || !parsed->think_char_range)
        throw ValidationError("build_rescore_request: record '" + record.id +
                              "' has no reasoning trace");

    const CharRange think = *parsed->think_char_range;
    const CharRange answer = parsed->answer_char_range;
    const std::string answer_text = record.answer_span_text();
    const std::string answer_content =
        record.raw_text.substr(answer.begin, answer.size());
    if (answer_text != answer_content)
        throw ValidationError("build_rescore_request: answer span text does not match the "
                              "tagged answer content for record '" + record.id + "'");

    ScoringRequest req;
    req.record_id = record.id;
    req.variant = std::string(variant);
    req.forced_continuation = answer_text;
    req.image_ref = record.image_ref;
    req.context_text = prompts.task_prompt(record.dataset, record.mode, record.question,
                                           record.options);
    req.context_text += "\n";
    req.context_text += record.raw_text.substr(0, think.begin);
    req.context_text += mask.masked_trace;
    req.context_text += record.raw_text.substr(think.end, answer.begin - think.end);
    return req;
}

GenerationRecord apply_rescore(const GenerationRecord& record,
                               const std::vector<TokenScore>& scored_answer_tokens,
                               std::string_view variant) {
    if (!record.parse_ok)
        throw ValidationError("apply_rescore: record '" + record.id + "' failed to parse");
    GenerationRecord out = record;
    out.variant = std::string(variant);

    const TokenRange ans = record.spans.answer;
    if (scored_answer_tokens.size() == ans.size()) {
        for (std::size_t i = 0; i < ans.size(); ++i)
            out.tokens[ans.begin + i] = scored_answer_tokens[i];
    } else {
        out.retokenized = true;
        out.retokenized_lengths = std::make_pair(ans.size(), scored_answer_tokens.size());
        std::vector<TokenScore> tokens(record.tokens.begin(),
                                       record.tokens.begin() + static_cast<std::ptrdiff_t>(ans.begin));
        tokens.insert(tokens.end(), scored_answer_tokens.begin(), scored_answer_tokens.end());
        tokens.insert(tokens.end(),
                      record.tokens.begin() + static_cast<std::ptrdiff_t>(ans.end),
                      record.tokens.end());
        out.tokens = std::move(tokens);
        out.spans.answer = {ans.begin, ans.begin + scored_answer_tokens.size()};
    }
    validate(out);
    return out;
}

nlohmann::json to_json(const ScoringRequest& r) {
    nlohmann::json j = nlohmann::json::object();
    j["record_id"] = r.record_id;
    j["variant"] = r.variant;
    j["context_text"] = r.context_text;
    j["forced_continuation"] = r.forced_continuation;
    if (r.image_ref) j["image_ref"] = *r.image_ref;
    return j;
}

ScoringRequest scoring_request_from_json(const nlohmann::json& j) {
    ScoringRequest r;
    for (const char* key : {"record_id", "variant", "context_text", "forced_continuation"})
        if (!j.contains(key) || !j[key].is_string())
            throw ValidationError(std::string(key) + ": required string field missing");
    r.record_id = j["record_id"].get<std::string>();
    r.variant = j["variant"].get<std::string>();
    r.context_text = j["context_text"].get<std::string>();
    r.forced_continuation = j["forced_continuation"].get<std::string>();
    if (auto it = j.find("image_ref"); it != j.end()) r.image_ref = it->get<std::string>();
    if (r.variant != "masked" && r.variant != "random_masked")
        throw ValidationError("variant: expected masked|random_masked");
    return r;
}

std::vector<ScoringRequest> read_scoring_requests(const std::string& path) {
    std::vector<ScoringRequest> out;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
        try {
            out.push_back(scoring_request_from_json(j));
        } catch (const ValidationError& e) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    });
    return out;
}

void write_scoring_requests(const std::vector<ScoringRequest>& reqs, const std::string& path) {
    std::vector<nlohmann::json> lines;
    lines.reserve(reqs.size());
    for (const auto& r : reqs) lines.push_back(to_json(r));
    write_jsonl_lines(path, lines);
}

namespace {

nlohmann::json tokens_to_json(const std::vector<TokenScore>& tokens) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : tokens) {
        nlohmann::json v = nlohmann::json::object();
        v["text"] = t.text;
        v["logprob"] = logprob_to_json(t.logprob);
        if (t.entropy) v["entropy"] = *t.entropy;
        arr.push_back(std::move(v));
    }
    return arr;
}

std::vector<TokenScore> tokens_from_json(const nlohmann::json& arr) {
    if (!arr.is_array()) throw ValidationError("tokens: expected an array");
    std::vector<TokenScore> out;
    for (const auto& v : arr) {
        TokenScore t;
        if (!v.contains("text") || !v["text"].is_string())
            throw ValidationError("tokens.text: required string field missing");
        t.text = v["text"].get<std::string>();
        t.logprob = logprob_from_json(v.at("logprob"), "tokens.logprob");
        if (auto it = v.find("entropy"); it != v.end()) t.entropy = it->get<double>();
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace

nlohmann::json to_json(const ScoringResult& r) {
    return nlohmann::json{{"record_id", r.record_id},
                          {"variant", r.variant},
                          {"tokens", tokens_to_json(r.tokens)}};
}

ScoringResult scoring_result_from_json(const nlohmann::json& j) {
    ScoringResult r;
    if (!j.contains("record_id") || !j["record_id"].is_string())
        throw ValidationError("record_id: required string field missing");
    r.record_id = j["record_id"].get<std::string>();
    if (!j.contains("variant") || !j["variant"].is_string())
        throw ValidationError("variant: required string field missing");
    r.variant = j["variant"].get<std::string>();
    r.tokens = tokens_from_json(j.at("tokens"));
    return r;
}

std::vector<ScoringResult> read_scoring_results(const std::string& path) {
    std::vector<ScoringResult> out;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
        try {
            out.push_back(scoring_result_from_json(j));
        } catch (const ValidationError& e) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    });
    return out;
}

void write_scoring_results(const std::vector<ScoringResult>& results, const std::string& path) {
    std::vector<nlohmann::json> lines;
    lines.reserve(results.size());
    for (const auto& r : results) lines.push_back(to_json(r));
    write_jsonl_lines(path, lines);
}

} // namespace uq
