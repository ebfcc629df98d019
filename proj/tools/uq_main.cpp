// uq: selective-generation uncertainty toolkit CLI.
//
// Pipeline stages communicate only via files. Exit codes: 0 success,
// 1 usage error, 2 backend failure, 3 validation failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "CLI11.hpp"
#include "uq/analysis.hpp"
#include "uq/backend.hpp"
#include "uq/client.hpp"
#include "uq/errors.hpp"
#include "uq/estimators.hpp"
#include "uq/format.hpp"
#include "uq/interventions.hpp"
#include "uq/metrics.hpp"
#include "uq/parsing.hpp"
#include "uq/prompts.hpp"
#include "uq/report.hpp"
#include "uq/scoring.hpp"
#include "uq/stub_backend.hpp"

namespace {

using namespace uq;

// ---------------------------------------------------------------------------
// shared option bundles

struct CommonOpts {
    std::string assets_dir;
    std::uint64_t seed = 7;
};

struct BackendOpts {
    std::string base_url;
    std::string model;
    std::string preset_name = "stub-small";
    std::string auth_env = "UQ_AUTH_TOKEN";
    double timeout_s = 30.0;
    int max_in_flight = 4;
    int retries = 2;
    bool offline = false;
};

struct JudgeOpts {
    std::string kind = "open_ended_exact";
    bool keep_case = false;
    bool keep_articles = false;
    bool keep_punct = false;

    JudgeConfig to_config() const {
        JudgeConfig j;
        j.kind = judge_kind_from_string(kind);
        j.case_fold = !keep_case;
        j.strip_articles = !keep_articles;
        j.strip_punct = !keep_punct;
        return j;
    }
};

void add_backend_flags(CLI::App* cmd, BackendOpts& opts) {
    cmd->add_option("--backend-url", opts.base_url, "Inference backend base URL");
    cmd->add_option("--model", opts.model, "Model name sent on the wire (default: preset name)");
    cmd->add_option("--preset", opts.preset_name, "Named decoding preset");
    cmd->add_option("--auth-env", opts.auth_env, "Env var holding the bearer token");
    cmd->add_option("--timeout", opts.timeout_s, "Request timeout in seconds");
    cmd->add_option("--max-in-flight", opts.max_in_flight, "Bounded request concurrency");
    cmd->add_option("--retries", opts.retries, "Retry budget per request");
    cmd->add_flag("--offline", opts.offline, "Forbid any network use");
}

void add_judge_flags(CLI::App* cmd, JudgeOpts& opts) {
    cmd->add_option("--judge", opts.kind, "exact_mc|open_ended_exact|vqa_soft");
    cmd->add_flag("--judge-keep-case", opts.keep_case, "Disable case folding");
    cmd->add_flag("--judge-keep-articles", opts.keep_articles, "Keep a/an/the");
    cmd->add_flag("--judge-keep-punct", opts.keep_punct, "Keep punctuation");
}

std::unique_ptr<HttpBackend> make_backend(const BackendOpts& opts) {
    if (opts.offline)
        throw UsageError("this command requires a backend and cannot run with --offline");
    if (opts.base_url.empty())
        throw UsageError("--backend-url is required (or use --offline where supported)");
    BackendConfig config;
    config.base_url = opts.base_url;
    config.auth_env = opts.auth_env;
    config.timeout_s = opts.timeout_s;
    config.max_in_flight = opts.max_in_flight;
    config.retries = opts.retries;
    config.model = opts.model.empty() ? opts.preset_name : opts.model;
    return std::make_unique<HttpBackend>(config);
}

DecodingPreset resolve_preset(const CommonOpts& common, const std::string& name) {
    const std::string dir = resolve_assets_dir(common.assets_dir);
    return preset_or_throw(load_presets(dir + "/presets.json"), name);
}

// ---------------------------------------------------------------------------
// stem-based file naming: generate --output RUN writes RUN.records.jsonl etc.

std::string stem_path(const std::string& stem, const char* suffix) {
    if (stem.size() > 6 && stem.compare(stem.size() - 6, 6, ".jsonl") == 0) return stem;
    return stem + "." + suffix + ".jsonl";
}

std::vector<GenerationRecord> load_records_arg(const std::string& stem) {
    return read_records(stem_path(stem, "records"));
}

std::vector<UqScoreSet> load_scores_arg(const std::string& stem) {
    return read_score_sets(stem_path(stem, "scores"));
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

std::string corr_csv_cell(const std::optional<double>& v) {
    return v ? format_number(*v) : std::string(kUndefinedCell);
}

// ---------------------------------------------------------------------------
// subcommand bodies

int cmd_generate(const CommonOpts& common, const BackendOpts& backend_opts,
                 const JudgeOpts& judge_opts, const std::string& input,
                 const std::string& output, const std::string& mode_name, int k,
                 bool no_probes) {
    const auto tasks = read_tasks(input);
    auto backend = make_backend(backend_opts);
    if (!backend->capabilities().generate)
        throw UnsupportedBackend("backend does not support generation");

    GenerateOptions options;
    options.mode = mode_from_string(mode_name);
    options.preset = resolve_preset(common, backend_opts.preset_name);
    options.model = backend_opts.model.empty() ? backend_opts.preset_name : backend_opts.model;
    options.judge = judge_opts.to_config();
    options.k_samples = k;
    options.seed = common.seed;
    options.max_in_flight = backend_opts.max_in_flight;
    options.want_probes = !no_probes;

    PromptLibrary prompts(common.assets_dir);
    const GenerateOutcome outcome = run_generate(*backend, tasks, options, prompts);

    for (const auto& f : outcome.failures)
        std::cerr << "record " << f.id << " failed: " << f.error << "\n";
    if (outcome.records.empty() && !tasks.empty())
        throw BackendError("all " + std::to_string(tasks.size()) + " records failed");

    write_records(outcome.records, stem_path(output, "records"));
    write_sample_sets(outcome.samples, stem_path(output, "samples"));
    if (!outcome.probes.empty()) write_probes(outcome.probes, stem_path(output, "probes"));
    std::cerr << "generated " << outcome.records.size() << " records, "
              << outcome.samples.size() << " sample sets, " << outcome.probes.size()
              << " probes (" << outcome.failures.size() << " failures)\n";
    return 0;
}

int cmd_src_probe(const CommonOpts& common, const BackendOpts& backend_opts,
                  const std::string& input, const std::string& output) {
    const auto records = load_records_arg(input);
    auto backend = make_backend(backend_opts);
    if (!backend->capabilities().score)
        throw UnsupportedBackend("backend does not support continuation scoring");
    PromptLibrary prompts(common.assets_dir);

    std::vector<SrcProbe> probes;
    std::size_t failures = 0;
    for (const auto& r : records) {
        if (!r.parse_ok) continue;
        try {
            probes.push_back(probe_src(*backend, r, prompts));
        } catch (const std::exception& e) {
            ++failures;
            std::cerr << "record " << r.id << " probe failed: " << e.what() << "\n";
        }
    }
    if (probes.empty() && !records.empty()) throw BackendError("all probes failed");
    write_probes(probes, output.empty() ? stem_path(input, "probes") : output);
    std::cerr << "probed " << probes.size() << " records (" << failures << " failures)\n";
    return 0;
}

int cmd_score(const std::string& input, const std::string& output,
              const std::string& records_override, const std::string& samples_override,
              const std::string& probes_override, std::vector<std::string> estimators) {
    const std::string records_path =
        records_override.empty() ? stem_path(input, "records") : records_override;
    const auto records = read_records(records_path);

    auto optional_file = [](const std::string& explicit_path, const std::string& derived) {
        if (!explicit_path.empty()) return explicit_path;
        return std::filesystem::exists(derived) ? derived : std::string();
    };
    const std::string samples_path = optional_file(samples_override, stem_path(input, "samples"));
    const std::string probes_path = optional_file(probes_override, stem_path(input, "probes"));

    std::unordered_map<std::string, const SampleSet*> samples_by_id;
    std::vector<SampleSet> sample_sets;
    if (!samples_path.empty()) {
        sample_sets = read_sample_sets(samples_path);
        for (const auto& s : sample_sets) samples_by_id[s.record_id] = &s;
    }
    std::unordered_map<std::string, const SrcProbe*> probes_by_id;
    std::vector<SrcProbe> probes;
    if (!probes_path.empty()) {
        probes = read_probes(probes_path);
        for (const auto& p : probes) probes_by_id[p.record_id] = &p;
    }

    if (estimators.empty())
        estimators.assign(std::begin(kEstimatorNames), std::end(kEstimatorNames));
    for (const auto& e : estimators)
        if (!is_estimator_name(e)) throw UsageError("unknown estimator '" + e + "'");

    std::vector<UqScoreSet> scores;
    std::map<std::string, std::size_t> unavailable_counts;
    for (const auto& r : records) {
        auto sit = samples_by_id.find(r.id);
        auto pit = probes_by_id.find(r.id);
        UqScoreSet s = compute_scores(r, sit == samples_by_id.end() ? nullptr : sit->second,
                                      pit == probes_by_id.end() ? nullptr : pit->second,
                                      estimators);
        for (const auto& [est, reason] : s.unavailable) ++unavailable_counts[est];
        scores.push_back(std::move(s));
    }

    const std::string out_path = output.empty() ? stem_path(input, "scores") : output;
    write_score_sets(scores, out_path);

    nlohmann::json meta;
    meta["estimators"] = estimators;
    meta["policies"] = {{"consistency_denominator", "all_samples_including_parse_failures"},
                        {"src_token_policy", "sum_content_tokens"},
                        {"mte_fallback", "topk_renormalized_flagged_approx"},
                        {"msp_storage", "log_space"}};
    meta["unavailable_counts"] = unavailable_counts;
    write_text(out_path + ".meta.json", meta.dump(2) + "\n");

    for (const auto& [est, count] : unavailable_counts)
        std::cerr << est << " unavailable for " << count << " records\n";
    std::cerr << "scored " << scores.size() << " records -> " << out_path << "\n";
    return 0;
}

int cmd_evaluate(const std::string& input_a, const std::string& input_b,
                 const std::string& label_a, const std::string& label_b,
                 const std::string& output, std::vector<std::string> estimators,
                 const std::string& failure_policy) {
    if (estimators.empty())
        estimators.assign(std::begin(kEstimatorNames), std::end(kEstimatorNames));
    const ParseFailurePolicy policy = parse_failure_policy_from_string(failure_policy);

    const auto reports_a =
        evaluate_runs(load_records_arg(input_a), load_scores_arg(input_a), estimators, policy);
    std::vector<EvalReport> reports_b;
    if (!input_b.empty())
        reports_b =
            evaluate_runs(load_records_arg(input_b), load_scores_arg(input_b), estimators, policy);

    std::vector<EvalReport> stacked = reports_a;
    stacked.insert(stacked.end(), reports_b.begin(), reports_b.end());
    write_text(output + ".csv", render_csv(stacked));
    if (!reports_b.empty())
        write_text(output + "_compare.csv",
                   render_compare_csv(reports_a, reports_b, label_a, label_b));
    write_text(output + ".txt",
               render_table(reports_a, reports_b.empty() ? nullptr : &reports_b, label_a, label_b));
    write_text(output + ".json", report_to_json(stacked).dump(2) + "\n");
    std::cerr << "evaluated " << stacked.size() << " dataset/mode groups -> " << output
              << ".csv\n";
    return 0;
}

struct InterveneRequests {
    std::vector<ScoringRequest> requests;
    std::vector<RecordFailure> failures;
};

InterveneRequests build_intervention_requests(const std::vector<GenerationRecord>& records,
                                              std::uint64_t seed, const PromptLibrary& prompts) {
    InterveneRequests out;
    for (const auto& r : records) {
        try {
            if (!r.parse_ok || !r.parsed_answer)
                throw ValidationError("parse failure");
            const auto parsed = extract_tagged(r.raw_text);
            if (!parsed || !parsed->think_text)
                throw ValidationError("no reasoning trace");
            const std::string& trace = *parsed->think_text;

            const MaskResult masked = mask_answer_mentions(trace, *r.parsed_answer);
            out.requests.push_back(build_rescore_request(r, masked, "masked", prompts));

            // equal mask multiplicity for the random control
            std::uint64_t rec_seed = seed;
            for (unsigned char c : r.id) rec_seed = rec_seed * 1099511628211ULL + c;
            const MaskResult random = mask_random_tokens(trace, masked.mask_count, rec_seed);
            out.requests.push_back(build_rescore_request(r, random, "random_masked", prompts));
        } catch (const std::exception& e) {
            out.failures.push_back({r.id, e.what()});
        }
    }
    return out;
}

void write_variant_records(const std::vector<GenerationRecord>& base,
                           const std::vector<ScoringResult>& results,
                           const std::string& output) {
    std::unordered_map<std::string, const GenerationRecord*> by_id;
    for (const auto& r : base) by_id[r.id] = &r;

    std::map<std::string, std::vector<GenerationRecord>> variants;
    for (const auto& res : results) {
        auto it = by_id.find(res.record_id);
        if (it == by_id.end())
            throw ValidationError("rescore result for unknown record '" + res.record_id + "'");
        variants[res.variant].push_back(apply_rescore(*it->second, res.tokens, res.variant));
    }
    for (auto& [variant, records] : variants) {
        std::sort(records.begin(), records.end(),
                  [](const GenerationRecord& a, const GenerationRecord& b) { return a.id < b.id; });
        write_records(records, stem_path(output + "." + variant, "records"));
        std::cerr << "wrote " << records.size() << " " << variant << " records\n";
    }
}

int cmd_intervene(const CommonOpts& common, const BackendOpts& backend_opts,
                  const std::string& input, const std::string& output,
                  const std::string& apply_path) {
    const auto records = load_records_arg(input);
    PromptLibrary prompts(common.assets_dir);

    if (!apply_path.empty()) {
        write_variant_records(records, read_scoring_results(apply_path), output);
        return 0;
    }

    const InterveneRequests built = build_intervention_requests(records, common.seed, prompts);
    for (const auto& f : built.failures)
        std::cerr << "record " << f.id << " skipped: " << f.error << "\n";
    if (built.requests.empty()) throw ValidationError("no records eligible for intervention");

    if (backend_opts.offline) {
        write_scoring_requests(built.requests, stem_path(output, "requests"));
        std::cerr << "emitted " << built.requests.size() << " re-scoring requests\n";
        return 0;
    }

    auto backend = make_backend(backend_opts);
    if (!backend->capabilities().score)
        throw UnsupportedBackend("backend does not support continuation scoring");
    std::vector<ScoringResult> results;
    std::size_t failures = 0;
    for (const auto& req : built.requests) {
        try {
            ForcedScoreRequest wire{req.context_text, req.forced_continuation, req.image_ref};
            results.push_back({req.record_id, req.variant, backend->score(wire)});
        } catch (const std::exception& e) {
            ++failures;
            std::cerr << "rescore " << req.record_id << "/" << req.variant
                      << " failed: " << e.what() << "\n";
        }
    }
    if (results.empty()) throw BackendError("all re-scoring requests failed");
    write_variant_records(records, results, output);
    if (failures > 0) std::cerr << failures << " re-scoring requests failed\n";
    return 0;
}

int cmd_rescore(const BackendOpts& backend_opts, const std::string& requests_path,
                const std::string& output) {
    const auto requests = read_scoring_requests(requests_path);
    auto backend = make_backend(backend_opts);
    if (!backend->capabilities().score)
        throw UnsupportedBackend("backend does not support continuation scoring");
    std::vector<ScoringResult> results;
    std::size_t failures = 0;
    for (const auto& req : requests) {
        try {
            ForcedScoreRequest wire{req.context_text, req.forced_continuation, req.image_ref};
            results.push_back({req.record_id, req.variant, backend->score(wire)});
        } catch (const std::exception& e) {
            ++failures;
            std::cerr << "rescore " << req.record_id << "/" << req.variant
                      << " failed: " << e.what() << "\n";
        }
    }
    if (results.empty() && !requests.empty()) throw BackendError("all re-scoring requests failed");
    write_scoring_results(results, output);
    std::cerr << "scored " << results.size() << " requests (" << failures << " failures)\n";
    return 0;
}

int cmd_sequential(const CommonOpts& common, const BackendOpts& backend_opts,
                   const std::string& input, const std::string& output, int rounds) {
    const auto records = load_records_arg(input);
    auto backend = make_backend(backend_opts);
    PromptLibrary prompts(common.assets_dir);
    const DecodingPreset preset = resolve_preset(common, backend_opts.preset_name);

    std::ostringstream csv;
    csv << "record_id,round,answer_logprob_sum\n";
    std::size_t failures = 0;
    for (const auto& r : records) {
        if (!r.parse_ok) continue;
        try {
            for (const auto& point : run_sequential_rounds(*backend, r, rounds, preset, prompts))
                csv << r.id << ',' << point.round << ',' << format_number(point.answer_logprob_sum)
                    << '\n';
        } catch (const std::exception& e) {
            ++failures;
            std::cerr << "record " << r.id << " sequential run failed: " << e.what() << "\n";
        }
    }
    write_text(output, csv.str());
    std::cerr << "sequential trajectories -> " << output << " (" << failures << " failures)\n";
    return 0;
}

// --------------------------- analyze subcommands ---------------------------

int cmd_analyze_shift(const std::string& input_a, const std::string& input_b,
                      const std::string& estimator, double threshold,
                      const std::string& output) {
    const ShiftPartition part =
        partition_shift(load_records_arg(input_a), load_scores_arg(input_a),
                        load_records_arg(input_b), load_scores_arg(input_b), estimator, threshold);
    std::ostringstream csv;
    csv << "estimator,group,direction,fraction,n\n";
    for (const auto& cell : part.cells) {
        csv << estimator << ',' << cell.group << ",increased," << format_number(cell.increased)
            << ',' << cell.n << '\n';
        csv << estimator << ',' << cell.group << ",decreased," << format_number(cell.decreased)
            << ',' << cell.n << '\n';
        csv << estimator << ',' << cell.group << ",unchanged," << format_number(cell.unchanged)
            << ',' << cell.n << '\n';
    }
    write_text(output, csv.str());
    if (part.excluded > 0)
        std::cerr << part.excluded << " records lacked a confidence in one of the runs\n";
    return 0;
}

int cmd_analyze_correlation(const std::string& input, std::vector<std::string> estimators,
                            const std::string& filter_name, bool length_mode,
                            const std::string& output) {
    const auto records = load_records_arg(input);
    const auto scores = load_scores_arg(input);
    if (estimators.empty())
        estimators.assign(std::begin(kEstimatorNames), std::end(kEstimatorNames));

    FrequencyFilter filter = FrequencyFilter::all;
    if (filter_name == "incorrect_only") filter = FrequencyFilter::incorrect_only;
    else if (filter_name != "all") throw UsageError("--filter must be all|incorrect_only");

    std::map<std::string, std::vector<const GenerationRecord*>> by_dataset;
    for (const auto& r : records) by_dataset[r.dataset].push_back(&r);

    std::ostringstream csv;
    csv << "estimator,dataset,r,ci_lo,ci_hi,n\n";
    for (const auto& est : estimators) {
        std::vector<FisherInput> pooled;
        for (const auto& [dataset, recs] : by_dataset) {
            std::vector<GenerationRecord> subset;
            for (const auto* r : recs) subset.push_back(*r);
            std::optional<CorrelationResult> result;
            std::string reason;
            try {
                result = length_mode
                             ? reasoning_length_correlation(subset, scores, est)
                             : frequency_confidence_correlation(subset, scores, filter, est);
            } catch (const std::exception& e) {
                reason = e.what();
            }
            std::optional<double> r_v, lo_v, hi_v;
            std::size_t n = 0;
            if (result) {
                r_v = result->r;
                n = result->n;
                if (std::abs(result->r) < 1.0 && result->n > result->k_controls + 3) {
                    const FisherInput fin{result->r, result->n, result->k_controls};
                    const auto ci = fisher_aggregate(std::span<const FisherInput>(&fin, 1));
                    lo_v = ci.ci_lo;
                    hi_v = ci.ci_hi;
                    pooled.push_back(fin);
                }
            } else {
                std::cerr << est << "/" << dataset << ": " << reason << "\n";
            }
            csv << est << ',' << dataset << ',' << corr_csv_cell(r_v) << ','
                << corr_csv_cell(lo_v) << ',' << corr_csv_cell(hi_v) << ',' << n << '\n';
        }
        if (pooled.size() > 1) {
            const auto agg = fisher_aggregate(pooled);
            std::size_t n_total = 0;
            for (const auto& p : pooled) n_total += p.n;
            csv << est << ",(pooled)," << format_number(agg.mean_r) << ','
                << format_number(agg.ci_lo) << ',' << format_number(agg.ci_hi) << ',' << n_total
                << '\n';
        }
    }
    write_text(output, csv.str());
    return 0;
}

int cmd_analyze_k_ablation(const CommonOpts& common, const JudgeOpts& judge_opts,
                           const std::string& input, const std::string& k_values_arg,
                           const std::string& output) {
    const auto records = load_records_arg(input);
    const auto samples = read_sample_sets(stem_path(input, "samples"));

    std::vector<std::size_t> k_values;
    std::stringstream ss(k_values_arg);
    std::string piece;
    while (std::getline(ss, piece, ','))
        if (!piece.empty()) k_values.push_back(static_cast<std::size_t>(std::stoul(piece)));
    if (k_values.empty()) throw UsageError("--k-values must list at least one k");

    const auto rows = k_ablation(records, samples, k_values, common.seed, judge_opts.to_config());
    std::ostringstream csv;
    csv << "k,estimator,augrc,prr\n";
    for (const auto& row : rows)
        csv << row.k << ',' << row.estimator << ',' << corr_csv_cell(row.augrc) << ','
            << corr_csv_cell(row.prr) << '\n';
    write_text(output, csv.str());
    return 0;
}

int cmd_analyze_length_summary(const std::string& input, const std::string& output) {
    const auto rows = length_summary(load_records_arg(input));
    std::ostringstream csv;
    csv << "model,dataset,mode,n,answer_mean,answer_std,reasoning_mean,reasoning_std\n";
    for (const auto& row : rows)
        csv << row.model << ',' << row.dataset << ',' << row.mode << ',' << row.n << ','
            << format_number(row.answer_mean) << ',' << format_number(row.answer_std) << ','
            << format_number(row.reasoning_mean) << ',' << format_number(row.reasoning_std)
            << '\n';
    write_text(output, csv.str());
    return 0;
}

int cmd_stub(const std::string& world_path, const std::string& replay_path, int port) {
    std::unique_ptr<StubServer> server;
    if (!replay_path.empty()) server = std::make_unique<StubServer>(replay_path);
    else if (!world_path.empty()) server = std::make_unique<StubServer>(load_world(world_path));
    else throw UsageError("stub requires --world or --replay");
    const int bound = server->start(port);
    std::cout << "stub backend listening on http://127.0.0.1:" << bound << std::endl;
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(3600));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Selective-generation uncertainty toolkit for reasoning-trace model logs"};
    app.require_subcommand(1);

    CommonOpts common;
    app.add_option("--assets", common.assets_dir, "Assets directory (prompts, presets)")
        ->envname("UQ_ASSETS_DIR");

    BackendOpts backend_opts;
    JudgeOpts judge_opts;

    // generate
    auto* generate = app.add_subcommand("generate", "Sample generations with token logprobs");
    std::string gen_input, gen_output, gen_mode = "no_cot";
    int gen_k = 10;
    bool gen_no_probes = false;
    generate->add_option("--input", gen_input, "Task JSONL")->required();
    generate->add_option("--output", gen_output, "Output stem")->required();
    generate->add_option("--mode", gen_mode, "no_cot|cot|thinking");
    generate->add_option("--k", gen_k, "Stochastic samples per input");
    generate->add_flag("--no-probes", gen_no_probes, "Skip SRC probes");
    generate->add_option("--seed", common.seed, "Run seed");
    add_backend_flags(generate, backend_opts);
    add_judge_flags(generate, judge_opts);

    // src-probe
    auto* srcprobe = app.add_subcommand("src-probe", "Score yes/no self-report continuations");
    std::string probe_input, probe_output;
    srcprobe->add_option("--input", probe_input, "Run stem or records file")->required();
    srcprobe->add_option("--output", probe_output, "Probe output path");
    add_backend_flags(srcprobe, backend_opts);

    // score
    auto* score = app.add_subcommand("score", "Compute estimator scores from logged files");
    std::string score_input, score_output, score_records, score_samples, score_probes;
    std::vector<std::string> score_estimators;
    score->add_option("--input", score_input, "Run stem")->required();
    score->add_option("--output", score_output, "Score output path");
    score->add_option("--records", score_records, "Records file override");
    score->add_option("--samples", score_samples, "Sample-set file override");
    score->add_option("--probes", score_probes, "Probe file override");
    score->add_option("--estimators", score_estimators, "Estimator subset")->delimiter(',');

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Selective-generation ranking metrics");
    std::string eval_a, eval_b, eval_out = "report", eval_label_a = "a", eval_label_b = "b";
    std::vector<std::string> eval_estimators;
    std::string eval_policy = "score_min";
    evaluate->add_option("--input", eval_a, "Run stem")->required();
    evaluate->add_option("--input-b", eval_b, "Second run stem (delta columns)");
    evaluate->add_option("--label", eval_label_a, "Label for the first run");
    evaluate->add_option("--label-b", eval_label_b, "Label for the second run");
    evaluate->add_option("--output", eval_out, "Report stem");
    evaluate->add_option("--estimators", eval_estimators, "Estimator subset")->delimiter(',');
    evaluate->add_option("--parse-failures", eval_policy, "score_min|exclude");

    // intervene
    auto* intervene = app.add_subcommand("intervene", "Answer-mention masking + re-scoring");
    std::string inter_input, inter_output, inter_apply;
    intervene->add_option("--input", inter_input, "Run stem")->required();
    intervene->add_option("--output", inter_output, "Output stem")->required();
    intervene->add_option("--apply", inter_apply, "Apply a re-scoring results file (offline)");
    intervene->add_option("--seed", common.seed, "Random-mask seed");
    add_backend_flags(intervene, backend_opts);

    // rescore
    auto* rescore = app.add_subcommand("rescore", "Score emitted re-scoring requests");
    std::string resc_requests, resc_output;
    rescore->add_option("--requests", resc_requests, "Request JSONL")->required();
    rescore->add_option("--output", resc_output, "Results output path")->required();
    add_backend_flags(rescore, backend_opts);

    // sequential
    auto* sequential = app.add_subcommand("sequential", "Repeated reasoning rounds trajectory");
    std::string seq_input, seq_output;
    int seq_rounds = 3;
    sequential->add_option("--input", seq_input, "Run stem")->required();
    sequential->add_option("--output", seq_output, "Trajectory CSV path")->required();
    sequential->add_option("--rounds", seq_rounds, "Answering rounds");
    add_backend_flags(sequential, backend_opts);

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Diagnostic analyses");
    analyze->require_subcommand(1);

    auto* shift = analyze->add_subcommand("shift", "Confidence-shift partition");
    std::string shift_a, shift_b, shift_estimator = "msp", shift_out;
    double shift_threshold = 0.5;
    shift->add_option("--input", shift_a, "Base run stem")->required();
    shift->add_option("--input-b", shift_b, "Variant run stem")->required();
    shift->add_option("--estimator", shift_estimator, "Estimator name");
    shift->add_option("--correct-threshold", shift_threshold,
                      "Fractional-correctness grouping threshold");
    shift->add_option("--output", shift_out, "CSV path")->required();

    auto* freq = analyze->add_subcommand("frequency", "Answer-frequency correlation");
    std::string freq_input, freq_filter = "all", freq_out;
    std::vector<std::string> freq_estimators;
    freq->add_option("--input", freq_input, "Run stem")->required();
    freq->add_option("--filter", freq_filter, "all|incorrect_only");
    freq->add_option("--estimators", freq_estimators, "Estimator subset")->delimiter(',');
    freq->add_option("--output", freq_out, "CSV path")->required();

    auto* lencorr = analyze->add_subcommand("length-correlation",
                                            "Reasoning length vs confidence (partial)");
    std::string lc_input, lc_out;
    std::vector<std::string> lc_estimators;
    lencorr->add_option("--input", lc_input, "Run stem")->required();
    lencorr->add_option("--estimators", lc_estimators, "Estimator subset")->delimiter(',');
    lencorr->add_option("--output", lc_out, "CSV path")->required();

    auto* kabl = analyze->add_subcommand("k-ablation", "Sample-count ablation");
    std::string kabl_input, kabl_values = "1,2,5,10", kabl_out;
    kabl->add_option("--input", kabl_input, "Run stem")->required();
    kabl->add_option("--k-values", kabl_values, "Comma-separated k list");
    kabl->add_option("--seed", common.seed, "Subsample seed");
    kabl->add_option("--output", kabl_out, "CSV path")->required();
    add_judge_flags(kabl, judge_opts);

    auto* lensum = analyze->add_subcommand("length-summary", "Answer/reasoning length stats");
    std::string ls_input, ls_out;
    lensum->add_option("--input", ls_input, "Run stem")->required();
    lensum->add_option("--output", ls_out, "CSV path")->required();

    // stub
    auto* stub = app.add_subcommand("stub", "Run the local deterministic stub backend");
    std::string stub_world, stub_replay;
    int stub_port = 0;
    stub->add_option("--world", stub_world, "World JSON file");
    stub->add_option("--replay", stub_replay, "Replay fixture (request hash -> response)");
    stub->add_option("--port", stub_port, "Port (0 = ephemeral)");

    try {
        app.parse(argc, argv);

        if (generate->parsed())
            return cmd_generate(common, backend_opts, judge_opts, gen_input, gen_output, gen_mode,
                                gen_k, gen_no_probes);
        if (srcprobe->parsed()) return cmd_src_probe(common, backend_opts, probe_input, probe_output);
        if (score->parsed())
            return cmd_score(score_input, score_output, score_records, score_samples, score_probes,
                             score_estimators);
        if (evaluate->parsed())
            return cmd_evaluate(eval_a, eval_b, eval_label_a, eval_label_b, eval_out,
                                eval_estimators, eval_policy);
        if (intervene->parsed())
            return cmd_intervene(common, backend_opts, inter_input, inter_output, inter_apply);
        if (rescore->parsed()) return cmd_rescore(backend_opts, resc_requests, resc_output);
        if (sequential->parsed())
            return cmd_sequential(common, backend_opts, seq_input, seq_output, seq_rounds);
        if (analyze->parsed()) {
            if (shift->parsed())
                return cmd_analyze_shift(shift_a, shift_b, shift_estimator, shift_threshold,
                                         shift_out);
            if (freq->parsed())
                return cmd_analyze_correlation(freq_input, freq_estimators, freq_filter, false,
                                               freq_out);
            if (lencorr->parsed())
                return cmd_analyze_correlation(lc_input, lc_estimators, "all", true, lc_out);
            if (kabl->parsed())
                return cmd_analyze_k_ablation(common, judge_opts, kabl_input, kabl_values, kabl_out);
            if (lensum->parsed()) return cmd_analyze_length_summary(ls_input, ls_out);
        }
        if (stub->parsed()) return cmd_stub(stub_world, stub_replay, stub_port);
        throw UsageError("no subcommand selected");
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 3;
    }
}
