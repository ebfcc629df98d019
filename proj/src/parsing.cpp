#include "uq/parsing.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <limits>
#include <map>

#include "uq/errors.hpp"

namespace uq {

namespace {

struct TagPair {
    CharRange content;
    CharRange with_tags;
};

// Collects non-overlapping well-formed pairs left to right. For each close
// tag the nearest preceding unconsumed open tag is matched, so nested or
// repeated opens never leak a delimiter into the extracted content.
struct TagScan {
    std::vector<TagPair> pairs;
    bool stray = false;
};

TagScan scan_tag(std::string_view text, std::string_view open, std::string_view close) {
    TagScan scan;
    std::size_t consumed = 0;
    std::size_t open_count = 0;
    for (std::size_t p = text.find(open, 0); p != std::string_view::npos;
         p = text.find(open, p + open.size()))
        ++open_count;

    std::size_t close_pos = text.find(close, 0);
    while (close_pos != std::string_view::npos) {
        // nearest open tag in [consumed, close_pos)
        std::size_t best = std::string_view::npos;
        for (std::size_t p = text.find(open, consumed);
             p != std::string_view::npos && p + open.size() <= close_pos;
             p = text.find(open, p + 1))
            best = p;
        if (best == std::string_view::npos) {
            scan.stray = true; // close without open
        } else {
            TagPair pair;
            pair.content = {best + open.size(), close_pos};
            pair.with_tags = {best, close_pos + close.size()};
            scan.pairs.push_back(pair);
            consumed = close_pos + close.size();
        }
        close_pos = text.find(close, close_pos + close.size());
    }
    if (open_count != scan.pairs.size()) scan.stray = true; // unmatched opens
    return scan;
}

std::string trimmed(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string fold_case(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> ws_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

} // namespace

std::optional<ParsedOutput> extract_tagged(std::string_view raw_text) {
    const TagScan answers = scan_tag(raw_text, "<answer>", "</answer>");
    const TagScan thinks = scan_tag(raw_text, "<think>", "</think>");
    if (answers.pairs.empty()) return std::nullopt;

    ParsedOutput out;
    out.tag_violation = answers.stray || thinks.stray || answers.pairs.size() != 1 ||
                        thinks.pairs.size() > 1;

    const TagPair& ans = answers.pairs.back();
    out.answer_char_range = ans.content;
    out.answer_text = trimmed(raw_text.substr(ans.content.begin, ans.content.size()));
    if (out.answer_text.empty()) return std::nullopt;

    if (!thinks.pairs.empty()) {
        const TagPair& th = thinks.pairs.back();
        if (th.with_tags.end <= ans.with_tags.begin) {
            out.think_char_range = th.content;
            out.think_text = std::string(raw_text.substr(th.content.begin, th.content.size()));
        } else {
            // think block after the final answer; treat as absent
            out.tag_violation = true;
        }
    }
    return out;
}

std::string to_string(JudgeKind k) {
    switch (k) {
        case JudgeKind::exact_mc: return "exact_mc";
        case JudgeKind::open_ended_exact: return "open_ended_exact";
        case JudgeKind::vqa_soft: return "vqa_soft";
    }
    return "open_ended_exact";
}

JudgeKind judge_kind_from_string(const std::string& s) {
    if (s == "exact_mc") return JudgeKind::exact_mc;
    if (s == "open_ended_exact") return JudgeKind::open_ended_exact;
    if (s == "vqa_soft") return JudgeKind::vqa_soft;
    throw ConfigError("judge: expected exact_mc|open_ended_exact|vqa_soft, got '" + s + "'");
}

std::string normalize_answer(std::string_view text, const JudgeConfig& judge) {
    std::string work(text);
    if (judge.case_fold) work = fold_case(std::move(work));

    std::vector<std::string> tokens = ws_tokens(work);
    std::vector<std::string> kept;
    for (auto& tok : tokens) {
        if (judge.strip_punct) {
            std::size_t b = 0, e = tok.size();
            while (b < e && !is_alnum(tok[b])) ++b;
            while (e > b && !is_alnum(tok[e - 1])) --e;
            tok = tok.substr(b, e - b);
            if (tok.empty()) continue;
        }
        if (judge.strip_articles) {
            const std::string low = fold_case(tok);
            if (low == "a" || low == "an" || low == "the") continue;
        }
        kept.push_back(std::move(tok));
    }
    std::string out;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (i) out += ' ';
        out += kept[i];
    }
    return out;
}

double judge_correct(const std::string& pred,
                     const std::vector<std::string>& gold_answers,
                     const std::optional<std::vector<std::string>>& options,
                     const JudgeConfig& judge) {
    auto norm = [&](const std::string& s) { return normalize_answer(s, judge); };

    switch (judge.kind) {
        case JudgeKind::exact_mc: {
            if (!options)
                throw ConfigError("exact_mc judge requires options on the record");
            std::size_t matches = 0;
            bool matched_gold = false;
            std::vector<std::string> gold_norm;
            gold_norm.reserve(gold_answers.size());
            for (const auto& g : gold_answers) gold_norm.push_back(norm(g));
            for (const auto& opt : *options) {
                const std::string o = norm(opt);
                if (o != pred) continue;
                ++matches;
                if (std::find(gold_norm.begin(), gold_norm.end(), o) != gold_norm.end())
                    matched_gold = true;
            }
            return (matches == 1 && matched_gold) ? 1.0 : 0.0;
        }
        case JudgeKind::open_ended_exact: {
            for (const auto& g : gold_answers)
                if (norm(g) == pred) return 1.0;
            return 0.0;
        }
        case JudgeKind::vqa_soft: {
            std::size_t matches = 0;
            for (const auto& g : gold_answers)
                if (norm(g) == pred) ++matches;
            return std::min(1.0, static_cast<double>(matches) / 3.0);
        }
    }
    return 0.0;
}

VoteResult majority_vote(const std::vector<std::optional<std::string>>& answers,
                         const std::vector<double>& seq_logprobs) {
    if (answers.size() != seq_logprobs.size())
        throw ValidationError("majority_vote: answers and seq_logprobs must align");

    struct Candidate {
        std::size_t count = 0;
        double best_logprob = -std::numeric_limits<double>::infinity();
        std::size_t first_index = SIZE_MAX;
    };
    std::map<std::string, Candidate> tally;
    for (std::size_t i = 0; i < answers.size(); ++i) {
        if (!answers[i]) continue; // parse failures never win
        Candidate& c = tally[*answers[i]];
        ++c.count;
        c.best_logprob = std::max(c.best_logprob, seq_logprobs[i]);
        c.first_index = std::min(c.first_index, i);
    }
    if (tally.empty()) throw VoteFailure("no parseable sample to vote on");

    const std::pair<const std::string, Candidate>* best = nullptr;
    for (const auto& entry : tally) {
        if (!best) {
            best = &entry;
            continue;
        }
        const Candidate& a = entry.second;
        const Candidate& b = best->second;
        if (a.count > b.count ||
            (a.count == b.count && a.best_logprob > b.best_logprob) ||
            (a.count == b.count && a.best_logprob == b.best_logprob &&
             a.first_index < b.first_index))
            best = &entry;
    }
    return {best->first, best->second.count};
}

} // namespace uq
