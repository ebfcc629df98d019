#pragma once

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "uq/records.hpp"

namespace uq::test {

// Fresh per-test scratch directory under the build tree.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("uq_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string dir() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

inline TokenScore tok(const std::string& text, double logprob,
                      std::optional<double> entropy = std::nullopt) {
    TokenScore t;
    t.text = text;
    t.logprob = logprob;
    t.entropy = entropy;
    return t;
}

// Minimal parsed record: "<answer>X</answer>" with one token per word.
inline GenerationRecord simple_record(const std::string& id, const std::string& answer,
                                      double answer_logprob, double correct) {
    GenerationRecord r;
    r.id = id;
    r.dataset = "synthvqa";
    r.model = "stub-small";
    r.mode = Mode::no_cot;
    r.question = "What is shown?";
    r.gold_answers = {answer};
    r.raw_text = "<answer>" + answer + "</answer>";
    r.tokens = {tok("<answer>", -0.01, 0.1), tok(answer, answer_logprob, 0.2),
                tok("</answer>", -0.01, 0.1)};
    r.spans.reasoning = {0, 0};
    r.spans.answer = {1, 2};
    r.parse_ok = true;
    r.parsed_answer = answer;
    r.correct = correct;
    return r;
}

inline double urand(std::mt19937_64& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

} // namespace uq::test
