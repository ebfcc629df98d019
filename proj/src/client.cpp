#include "uq/client.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <unordered_set>

#include "uq/errors.hpp"
#include "uq/jsonl.hpp"

namespace uq {

std::vector<TaskInput> read_tasks(const std::string& path) {
    std::vector<TaskInput> out;
    std::unordered_set<std::string> seen;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line_no) {
        auto fail = [&](const std::string& msg) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": " + msg);
        };
        TaskInput t;
        if (!j.contains("id") || !j["id"].is_string()) fail("id: required string field missing");
        t.id = j["id"].get<std::string>();
        if (!seen.insert(t.id).second) fail("duplicate id '" + t.id + "'");
        if (!j.contains("question") || !j["question"].is_string())
            fail("question: required string field missing");
        t.question = j["question"].get<std::string>();
        t.dataset = j.value("dataset", "default");
        if (auto it = j.find("options"); it != j.end()) {
            std::vector<std::string> opts;
            for (const auto& o : *it) opts.push_back(o.get<std::string>());
            t.options = std::move(opts);
        }
        if (auto it = j.find("gold_answers"); it != j.end())
            for (const auto& g : *it) t.gold_answers.push_back(g.get<std::string>());
        if (auto it = j.find("image_ref"); it != j.end())
            t.image_ref = it->get<std::string>();
        out.push_back(std::move(t));
    });
    return out;
}

void write_tasks(const std::vector<TaskInput>& tasks, const std::string& path) {
    std::vector<nlohmann::json> lines;
    for (const auto& t : tasks) {
        nlohmann::json j = nlohmann::json::object();
        j["id"] = t.id;
        j["dataset"] = t.dataset;
        j["question"] = t.question;
        if (t.options) j["options"] = *t.options;
        j["gold_answers"] = t.gold_answers;
        if (t.image_ref) j["image_ref"] = *t.image_ref;
        lines.push_back(std::move(j));
    }
    write_jsonl_lines(path, lines);
}

namespace {

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// per-record request seed: stable under input reordering
std::uint64_t record_seed(std::uint64_t run_seed, const std::string& id) {
    return fnv1a64(id) ^ (run_seed * 0x9e3779b97f4a7c15ULL);
}

struct SpanAlignment {
    TokenRange reasoning;
    TokenRange answer;
    bool answer_exact = false;
};

// Maps the tag-content char ranges onto token index ranges; exact when token
// boundaries tile the content.
SpanAlignment align_spans(const std::vector<TokenScore>& tokens, const ParsedOutput& parsed) {
    std::vector<std::size_t> offsets(tokens.size() + 1, 0);
    for (std::size_t i = 0; i < tokens.size(); ++i)
        offsets[i + 1] = offsets[i] + tokens[i].text.size();

    auto tokens_inside = [&](const CharRange& range) {
        TokenRange r{0, 0};
        bool found = false;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (offsets[i] >= range.begin && offsets[i + 1] <= range.end &&
                offsets[i] < offsets[i + 1]) {
                if (!found) r.begin = i;
                r.end = i + 1;
                found = true;
            }
        }
        if (!found) r = {0, 0};
        return r;
    };

    SpanAlignment out;
    out.answer = tokens_inside(parsed.answer_char_range);
    if (parsed.think_char_range) out.reasoning = tokens_inside(*parsed.think_char_range);
    if (!out.answer.empty()) {
        out.answer_exact = offsets[out.answer.begin] == parsed.answer_char_range.begin &&
                           offsets[out.answer.end] == parsed.answer_char_range.end;
    }
    if (out.reasoning.end > out.answer.begin) out.reasoning = {0, 0};
    return out;
}

struct SampleParse {
    bool ok = false;
    std::string normalized;
    TokenRange answer;
    TokenRange reasoning;
    bool tag_violation = false;
    std::optional<ParsedOutput> parsed;
};

SampleParse parse_sample(const GeneratedSample& sample, const JudgeConfig& judge) {
    SampleParse out;
    const auto parsed = extract_tagged(sample.text);
    if (!parsed) return out;
    out.parsed = parsed;
    out.tag_violation = parsed->tag_violation;
    const SpanAlignment spans = align_spans(sample.tokens, *parsed);
    if (spans.answer.empty()) return out; // token boundaries unusable
    out.answer = spans.answer;
    out.reasoning = spans.reasoning;
    out.normalized = normalize_answer(parsed->answer_text, judge);
    out.ok = !out.normalized.empty();
    return out;
}

} // namespace

GenerationRecord build_record(const TaskInput& task, const GeneratedSample& sample,
                              const GenerateOptions& options) {
    GenerationRecord rec;
    rec.id = task.id;
    rec.dataset = task.dataset;
    rec.model = options.model;
    rec.mode = options.mode;
    rec.question = task.question;
    rec.options = task.options;
    rec.gold_answers = task.gold_answers;
    rec.image_ref = task.image_ref;
    rec.tokens = sample.tokens;

    // tokens are the source of truth for the decoded text
    std::string joined;
    for (const auto& t : sample.tokens) joined += t.text;
    rec.raw_text = joined.empty() ? sample.text : joined;

    const SampleParse parsed = parse_sample(sample, options.judge);
    rec.tag_violation = parsed.tag_violation;
    if (parsed.ok) {
        rec.parse_ok = true;
        rec.parsed_answer = parsed.normalized;
        rec.spans.answer = parsed.answer;
        rec.spans.reasoning = parsed.reasoning;
        if (!task.gold_answers.empty())
            rec.correct = judge_correct(parsed.normalized, task.gold_answers, task.options,
                                        options.judge);
    } else {
        rec.parse_ok = false;
        rec.spans = {};
        if (!task.gold_answers.empty()) rec.correct = 0.0; // failures count as incorrect
    }
    validate(rec);
    return rec;
}

namespace {

SampleSet build_sample_set(const TaskInput& task, const std::vector<GeneratedSample>& samples,
                           const GenerateOptions& options, std::uint64_t seed) {
    SampleSet set;
    set.record_id = task.id;
    set.seed = seed;
    for (const auto& sample : samples) {
        SampleDraw draw;
        const SampleParse parsed = parse_sample(sample, options.judge);
        if (parsed.ok) {
            draw.parse_ok = true;
            draw.parsed_answer = parsed.normalized;
            draw.answer_len = parsed.answer.size();
            double lp = 0.0;
            for (std::size_t i = parsed.answer.begin; i < parsed.answer.end; ++i)
                lp += sample.tokens[i].logprob;
            draw.seq_logprob = lp;
        } else {
            // no answer span: log the whole sequence so the draw stays usable
            // for the MC estimators
            draw.parse_ok = false;
            draw.answer_len = std::max<std::size_t>(1, sample.tokens.size());
            double lp = 0.0;
            for (const auto& t : sample.tokens) lp += t.logprob;
            draw.seq_logprob = lp;
        }
        set.samples.push_back(std::move(draw));
    }
    validate(set);
    return set;
}

} // namespace

double sum_content_logprobs(const std::vector<TokenScore>& scored_tokens) {
    double sum = 0.0;
    bool inside = false;
    bool any = false;
    for (const auto& t : scored_tokens) {
        if (t.text == "<answer>") {
            inside = true;
            continue;
        }
        if (t.text == "</answer>") {
            inside = false;
            continue;
        }
        if (inside) {
            sum += t.logprob;
            any = true;
        }
    }
    if (!any) // untagged continuation: every token is content
        for (const auto& t : scored_tokens) sum += t.logprob;
    return sum;
}

SrcProbe probe_src(Backend& backend, const GenerationRecord& record,
                   const PromptLibrary& prompts) {
    if (!record.parse_ok || !record.parsed_answer)
        throw ValidationError("probe_src: record '" + record.id + "' has no parsed answer");
    ForcedScoreRequest req;
    req.context = prompts.src_prompt(record.question, *record.parsed_answer, record.options);
    req.image_ref = record.image_ref;

    SrcProbe probe;
    probe.record_id = record.id;
    req.continuation = "<answer>yes</answer>";
    probe.logp_yes = sum_content_logprobs(backend.score(req));
    req.continuation = "<answer>no</answer>";
    probe.logp_no = sum_content_logprobs(backend.score(req));
    validate(probe);
    return probe;
}

GenerateOutcome run_generate(Backend& backend, const std::vector<TaskInput>& tasks,
                             const GenerateOptions& options, const PromptLibrary& prompts) {
    if (options.k_samples < 1) throw ConfigError("k must be >= 1");
    const bool probes_enabled = options.want_probes && backend.capabilities().score;

    struct Slot {
        std::optional<GenerationRecord> record;
        std::optional<SampleSet> samples;
        std::optional<SrcProbe> probe;
        std::string error;
    };
    std::vector<Slot> slots(tasks.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const TaskInput& task = tasks[i];
            Slot& slot = slots[i];
            try {
                GenerateRequest req;
                req.messages = {{"user", prompts.task_prompt(task.dataset, options.mode,
                                                             task.question, task.options)}};
                req.image_ref = task.image_ref;
                req.preset = options.preset;
                req.want_logprobs = true;

                req.n = 1;
                req.seed = record_seed(options.seed, task.id);
                const auto primary = backend.generate(req);
                if (primary.empty()) throw BackendError("no completion returned");
                slot.record = build_record(task, primary.front(), options);

                req.n = options.k_samples;
                req.seed = record_seed(options.seed + 1, task.id);
                const auto sampled = backend.generate(req);
                if (static_cast<int>(sampled.size()) != options.k_samples)
                    throw BackendError("expected " + std::to_string(options.k_samples) +
                                       " samples, got " + std::to_string(sampled.size()));
                slot.samples = build_sample_set(task, sampled, options, req.seed);

                if (probes_enabled && slot.record->parse_ok)
                    slot.probe = probe_src(backend, *slot.record, prompts);
            } catch (const std::exception& e) {
                slot.record.reset();
                slot.samples.reset();
                slot.probe.reset();
                slot.error = e.what();
            }
        }
    };

    const std::size_t n_workers =
        std::min<std::size_t>(std::max(1, options.max_in_flight), std::max<std::size_t>(1, tasks.size()));
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    GenerateOutcome out;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        Slot& slot = slots[i];
        if (!slot.error.empty()) {
            out.failures.push_back({tasks[i].id, slot.error});
            continue;
        }
        out.records.push_back(std::move(*slot.record));
        out.samples.push_back(std::move(*slot.samples));
        if (slot.probe) out.probes.push_back(std::move(*slot.probe));
    }
    // deterministic output ordering regardless of worker scheduling
    auto by_id = [](const auto& a, const auto& b) {
        if constexpr (requires { a.id; }) return a.id < b.id;
        else return a.record_id < b.record_id;
    };
    std::sort(out.records.begin(), out.records.end(), by_id);
    std::sort(out.samples.begin(), out.samples.end(), by_id);
    std::sort(out.probes.begin(), out.probes.end(), by_id);
    std::sort(out.failures.begin(), out.failures.end(),
              [](const RecordFailure& a, const RecordFailure& b) { return a.id < b.id; });
    return out;
}

std::vector<SequentialPoint> run_sequential_rounds(Backend& backend,
                                                   const GenerationRecord& record, int rounds,
                                                   const DecodingPreset& preset,
                                                   const PromptLibrary& prompts) {
    if (rounds < 1) throw ConfigError("sequential: rounds must be >= 1");
    if (!record.parse_ok)
        throw ValidationError("sequential: record '" + record.id + "' failed to parse");

    std::vector<SequentialPoint> out;
    double first = 0.0;
    for (double lp : record.answer_logprobs()) first += lp;
    out.push_back({1, first});

    std::vector<ChatTurn> history;
    history.push_back({"user", prompts.task_prompt(record.dataset, record.mode, record.question,
                                                   record.options)});
    history.push_back({"assistant", record.raw_text});

    for (int round = 2; round <= rounds; ++round) {
        history.push_back({"user", prompts.sequential_followup()});
        GenerateRequest req;
        req.messages = history;
        req.image_ref = record.image_ref;
        req.preset = preset;
        req.n = 1;
        req.seed = record_seed(record.tokens.size() + static_cast<std::uint64_t>(round), record.id);
        std::vector<GeneratedSample> reply;
        try {
            reply = backend.generate(req);
        } catch (const BackendError&) {
            break; // context overflow or transport failure: report completed rounds
        }
        if (reply.empty()) break;
        const auto parsed = extract_tagged(reply.front().text);
        if (!parsed) break;
        const SpanAlignment spans = align_spans(reply.front().tokens, *parsed);
        if (spans.answer.empty()) break;
        double sum = 0.0;
        for (std::size_t i = spans.answer.begin; i < spans.answer.end; ++i)
            sum += reply.front().tokens[i].logprob;
        out.push_back({round, sum});
        history.push_back({"assistant", reply.front().text});
    }
    return out;
}

} // namespace uq
