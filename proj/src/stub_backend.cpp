#include "uq/stub_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "uq/errors.hpp"
#include "uq/jsonl.hpp"
#include "uq/textmatch.hpp"

namespace uq {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

std::uint64_t hash_str(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// uniform in [0, 1)
double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

double clamp01(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

bool is_tag_start(const std::string& text, std::size_t i, std::string_view tag) {
    return text.compare(i, tag.size(), tag) == 0;
}

constexpr std::string_view kTags[] = {"<think>", "</think>", "<answer>", "</answer>"};

} // namespace

std::vector<std::string> stub_tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        bool tagged = false;
        for (std::string_view tag : kTags) {
            if (is_tag_start(text, i, tag)) {
                out.emplace_back(tag);
                i += tag.size();
                tagged = true;
                break;
            }
        }
        if (tagged) continue;
        std::size_t b = i;
        if (std::isspace(static_cast<unsigned char>(text[i]))) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            out.push_back(text.substr(b, i - b));
            continue;
        }
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
            bool at_tag = false;
            for (std::string_view tag : kTags)
                if (is_tag_start(text, i, tag)) at_tag = true;
            if (at_tag) break;
            ++i;
        }
        // attach the following whitespace run to the word, llama-style
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
            bool breaks = text[i] == '\n';
            if (breaks) break;
            ++i;
        }
        out.push_back(text.substr(b, i - b));
    }
    return out;
}

nlohmann::json to_json(const StubWorld& w) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : w.items)
        items.push_back({{"question", it.question},
                         {"gold", it.gold},
                         {"foil", it.foil},
                         {"difficulty", it.difficulty},
                         {"mentions", it.mentions}});
    return nlohmann::json{{"seed", w.seed},
                          {"inflation", w.inflation},
                          {"signal", w.signal},
                          {"base_signal", w.base_signal},
                          {"cot_boost", w.cot_boost},
                          {"noise", w.noise},
                          {"items", std::move(items)}};
}

StubWorld world_from_json(const nlohmann::json& j) {
    StubWorld w;
    w.seed = j.value("seed", 1ULL);
    w.inflation = j.value("inflation", 0.18);
    w.signal = j.value("signal", 0.12);
    w.base_signal = j.value("base_signal", 0.7);
    w.cot_boost = j.value("cot_boost", 0.05);
    w.noise = j.value("noise", 0.01);
    for (const auto& v : j.at("items")) {
        StubItem it;
        it.question = v.at("question").get<std::string>();
        it.gold = v.at("gold").get<std::string>();
        it.foil = v.at("foil").get<std::string>();
        it.difficulty = v.at("difficulty").get<double>();
        it.mentions = v.at("mentions").get<int>();
        w.items.push_back(std::move(it));
    }
    return w;
}

StubWorld load_world(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open stub world " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("stub world " + path + ": " + e.what());
    }
    return world_from_json(j);
}

void save_world(const StubWorld& w, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << to_json(w).dump(2) << '\n';
}

StubWorld make_synthetic_world(std::size_t n, std::uint64_t seed) {
    static const char* kVocab[] = {
        "cat",     "dog",    "tram",   "bridge",  "ceramic", "oak",     "falcon",
        "violin",  "harbor", "glacier", "magnet", "turbine", "copper",  "sparrow",
        "lantern", "mosaic", "nine",    "42",     "seven",   "vertical garden",
    };
    constexpr std::size_t kVocabSize = sizeof(kVocab) / sizeof(kVocab[0]);
    StubWorld w;
    w.seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
        StubItem item;
        char qbuf[96];
        std::snprintf(qbuf, sizeof(qbuf), "What does exhibit #%04zu in the survey depict?", i);
        item.question = qbuf;
        const std::size_t g = mix(seed, mix(11, i)) % kVocabSize;
        std::size_t f = mix(seed, mix(13, i)) % kVocabSize;
        if (f == g) f = (f + 1) % kVocabSize;
        item.gold = kVocab[g];
        item.foil = kVocab[f];
        item.difficulty = 0.1 + 0.8 * unit(mix(seed, mix(17, i)));
        item.mentions = static_cast<int>(mix(seed, mix(19, i)) % 5);
        w.items.push_back(std::move(item));
    }
    return w;
}

StubBackend::StubBackend(StubWorld world) : world_(std::move(world)) {
    for (std::size_t i = 0; i < world_.items.size(); ++i)
        by_question_[world_.items[i].question] = i;
}

const StubItem& StubBackend::find_item(const std::string& text) const {
    // exact "Question: ..." line first, then substring search
    const std::string marker = "Question: ";
    if (auto pos = text.find(marker); pos != std::string::npos) {
        std::size_t e = text.find('\n', pos);
        if (e == std::string::npos) e = text.size();
        const std::string q = text.substr(pos + marker.size(), e - pos - marker.size());
        if (auto it = by_question_.find(q); it != by_question_.end())
            return world_.items[it->second];
    }
    for (const auto& [q, idx] : by_question_)
        if (text.find(q) != std::string::npos) return world_.items[idx];
    throw BackendError("stub: no world item matches the request");
}

namespace {

std::string build_trace(const std::string& answer, int mentions) {
    static const char* kMentionLines[] = {
        "I believe it is %s.",
        "The %s reading fits the visible cues.",
        "Most evidence points to %s.",
        "It could well be %s given the outline.",
        "On balance %s remains the strongest fit.",
    };
    std::string trace = "Examining the visible details before settling.";
    for (int m = 0; m < mentions; ++m) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), kMentionLines[m % 5], answer.c_str());
        trace += ' ';
        trace += buf;
    }
    trace += " Settling on the final choice now.";
    return trace;
}

// confidence of the answer tokens under reasoning; shared between generation
// and forced re-scoring so the identity intervention reproduces logprobs
// exactly
double reasoning_confidence(const StubWorld& w, const StubItem& item, std::size_t item_idx,
                            int mentions_in_context, const std::string& answer) {
    const double jitter = unit(mix(w.seed, mix(hash_str(answer), mix(23, item_idx))));
    return clamp01(0.10 + w.inflation * mentions_in_context + w.signal * (1.0 - item.difficulty) +
                       w.noise * jitter,
                   0.02, 0.995);
}

double plain_confidence(const StubWorld& w, const StubItem& item, std::size_t item_idx,
                        const std::string& answer) {
    const double jitter = unit(mix(w.seed, mix(hash_str(answer), mix(29, item_idx))));
    return clamp01(0.15 + w.base_signal * (1.0 - item.difficulty) + 0.05 * jitter, 0.02, 0.99);
}

std::vector<TokenScore> score_text_tokens(const StubWorld& w, const std::string& text,
                                          double answer_conf, std::uint64_t salt) {
    const std::vector<std::string> toks = stub_tokenize(text);
    // answer content tokens = tokens strictly between <answer> and </answer>
    std::vector<bool> in_answer(toks.size(), false);
    std::size_t n_answer = 0;
    bool inside = false;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (toks[i] == "<answer>") {
            inside = true;
            continue;
        }
        if (toks[i] == "</answer>") inside = false;
        if (inside) {
            in_answer[i] = true;
            ++n_answer;
        }
    }
    std::vector<TokenScore> out;
    out.reserve(toks.size());
    const double lp_answer =
        n_answer > 0 ? std::log(answer_conf) / static_cast<double>(n_answer) : 0.0;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        TokenScore t;
        t.text = toks[i];
        const std::uint64_t h = mix(w.seed, mix(salt, mix(hash_str(toks[i]), i)));
        if (in_answer[i]) {
            t.logprob = lp_answer;
            const double p = std::exp(lp_answer);
            const double q = 1.0 - p;
            t.entropy = q > 0.0 ? -(p * std::log(p) + q * std::log(q / 3.0)) : 0.0;
        } else {
            t.logprob = -(0.01 + 0.04 * unit(h));
            t.entropy = 0.02 + 0.1 * unit(splitmix64(h));
        }
        const double alt_gap = 0.5 + unit(mix(h, 31));
        t.alternatives = std::vector<std::pair<std::string, double>>{
            {t.text, t.logprob}, {"~", t.logprob - alt_gap}};
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace

GeneratedSample StubBackend::synthesize(const StubItem& item, std::size_t item_idx, bool reasoning,
                                        std::uint64_t request_seed, int sample_idx,
                                        const std::string& forced_answer,
                                        int context_rounds) const {
    const std::uint64_t base =
        mix(world_.seed, mix(request_seed, mix(item_idx, static_cast<std::uint64_t>(sample_idx))));
    std::string answer = forced_answer;
    if (answer.empty()) {
        const double p_correct =
            clamp01(1.0 - item.difficulty + (reasoning ? world_.cot_boost : 0.0), 0.02, 0.98);
        answer = unit(mix(base, 41)) < p_correct ? item.gold : item.foil;
    }
    double conf = reasoning ? reasoning_confidence(world_, item, item_idx, item.mentions, answer)
                            : plain_confidence(world_, item, item_idx, answer);
    if (context_rounds > 0) {
        // repeated answering in context: confidence collapses toward 1
        conf = 1.0 - (1.0 - conf) * std::pow(0.3, context_rounds);
    }
    GeneratedSample sample;
    if (reasoning) {
        sample.text = "<think>" + build_trace(answer, item.mentions) + "</think>\n<answer>" +
                      answer + "</answer>";
    } else {
        sample.text = "<answer>" + answer + "</answer>";
    }
    sample.tokens = score_text_tokens(world_, sample.text, conf, mix(base, 43));
    return sample;
}

std::vector<GeneratedSample> StubBackend::generate(const GenerateRequest& req) {
    if (req.messages.empty()) throw BackendError("stub: empty message list");
    std::string all_text;
    for (const auto& turn : req.messages) all_text += turn.text + "\n";
    const StubItem& item = find_item(all_text);
    const std::size_t item_idx = by_question_.at(item.question);

    const bool reasoning = all_text.find("<think>") != std::string::npos ||
                           req.preset.name.find("thinking") != std::string::npos;

    // sequential rounds: prior assistant answers stay in context
    int context_rounds = 0;
    std::string prior_answer;
    for (const auto& turn : req.messages) {
        if (turn.role != "assistant") continue;
        if (auto pos = turn.text.rfind("<answer>"); pos != std::string::npos) {
            ++context_rounds;
            const auto end = turn.text.find("</answer>", pos);
            if (end != std::string::npos)
                prior_answer = turn.text.substr(pos + 8, end - pos - 8);
        }
    }

    std::vector<GeneratedSample> out;
    out.reserve(static_cast<std::size_t>(req.n));
    for (int s = 0; s < req.n; ++s)
        out.push_back(synthesize(item, item_idx, reasoning || context_rounds > 0, req.seed, s,
                                 prior_answer, context_rounds));
    if (!req.want_logprobs)
        for (auto& sample : out) sample.tokens.clear();
    return out;
}

std::vector<TokenScore> StubBackend::score(const ForcedScoreRequest& req) {
    if (req.continuation.empty()) return {};
    const StubItem& item = find_item(req.context);
    const std::size_t item_idx = by_question_.at(item.question);

    // continuation content = text inside answer tags when present
    std::string content = req.continuation;
    bool tagged = false;
    if (content.rfind("<answer>", 0) == 0 && content.size() > 17 &&
        content.compare(content.size() - 9, 9, "</answer>") == 0) {
        content = content.substr(8, content.size() - 17);
        tagged = true;
    }

    double conf;
    if (req.context.find("self-report your certainty") != std::string::npos) {
        const double p_yes =
            clamp01(0.2 + 0.6 * (1.0 - item.difficulty) + 0.1 * unit(mix(world_.seed, mix(47, item_idx))),
                    0.03, 0.97);
        conf = content == "yes" ? p_yes : 1.0 - p_yes;
    } else {
        // forced re-scoring: inflation follows the answer mentions still
        // visible in the reasoning block of the context
        int mentions = 0;
        const auto tb = req.context.rfind("<think>");
        if (tb != std::string::npos) {
            const auto te = req.context.find("</think>", tb);
            const std::string trace = te == std::string::npos
                                          ? req.context.substr(tb + 7)
                                          : req.context.substr(tb + 7, te - tb - 7);
            mentions = static_cast<int>(count_mentions(trace, content));
        }
        conf = reasoning_confidence(world_, item, item_idx, mentions, content);
    }

    const std::string text = tagged ? "<answer>" + content + "</answer>" : content;
    std::vector<TokenScore> tokens =
        score_text_tokens(world_, text, conf, mix(world_.seed, mix(53, item_idx)));
    if (!tagged) {
        // bare continuation: every token carries answer mass
        const std::vector<std::string> toks = stub_tokenize(text);
        const double lp = std::log(conf) / static_cast<double>(toks.size());
        for (auto& t : tokens) {
            t.logprob = lp;
            const double p = std::exp(lp);
            const double q = 1.0 - p;
            t.entropy = q > 0.0 ? -(p * std::log(p) + q * std::log(q / 3.0)) : 0.0;
        }
    }
    return tokens;
}

// ---------------------------------------------------------------------------
// HTTP server wrapper

std::string fnv1a64_hex(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct StubServer::Impl {
    std::unique_ptr<StubBackend> backend;
    nlohmann::json replay = nlohmann::json::object();
    bool replay_mode = false;
    bool recording = false;
    nlohmann::json recorded = nlohmann::json::object();
    mutable std::mutex mu;
    httplib::Server server;
    std::thread thread;
};

StubServer::StubServer(StubWorld world) : impl_(std::make_unique<Impl>()) {
    impl_->backend = std::make_unique<StubBackend>(std::move(world));
}

StubServer::StubServer(const std::string& replay_fixture_path) : impl_(std::make_unique<Impl>()) {
    std::ifstream in(replay_fixture_path);
    if (!in) throw ConfigError("cannot open replay fixture " + replay_fixture_path);
    in >> impl_->replay;
    impl_->replay_mode = true;
}

StubServer::~StubServer() { stop(); }

void StubServer::enable_recording() { impl_->recording = true; }

void StubServer::save_recording(const std::string& path) const {
    std::lock_guard<std::mutex> lock(impl_->mu);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << impl_->recorded.dump() << '\n';
}

int StubServer::start(int port) {
    auto handle = [this](const httplib::Request& req, httplib::Response& res,
                         const std::function<nlohmann::json(const nlohmann::json&)>& fn) {
        int budget = fail_budget_.load();
        while (budget > 0 && !fail_budget_.compare_exchange_weak(budget, budget - 1)) {
        }
        if (budget > 0) {
            res.status = 500;
            res.set_content("{\"error\":\"injected failure\"}", "application/json");
            return;
        }
        const std::string hash = fnv1a64_hex(req.body);
        if (impl_->replay_mode) {
            std::lock_guard<std::mutex> lock(impl_->mu);
            if (!impl_->replay.contains(hash)) {
                res.status = 404;
                res.set_content("{\"error\":\"no replay entry for request\"}", "application/json");
                return;
            }
            res.set_content(impl_->replay[hash].dump(), "application/json");
            return;
        }
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::parse_error& e) {
            res.status = 400;
            res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
            return;
        }
        try {
            const nlohmann::json reply = fn(body);
            if (impl_->recording) {
                std::lock_guard<std::mutex> lock(impl_->mu);
                impl_->recorded[hash] = reply;
            }
            res.set_content(reply.dump(), "application/json");
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
        }
    };

    impl_->server.Get("/v1/capabilities", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"generate\":true,\"score\":true}", "application/json");
    });

    impl_->server.Post("/v1/chat/completions", [this, handle](const httplib::Request& req,
                                                              httplib::Response& res) {
        handle(req, res, [this](const nlohmann::json& body) {
            GenerateRequest greq;
            for (const auto& m : body.at("messages")) {
                ChatTurn turn;
                turn.role = m.at("role").get<std::string>();
                for (const auto& part : m.at("content"))
                    if (part.at("type") == "text") turn.text += part.at("text").get<std::string>();
                greq.messages.push_back(std::move(turn));
            }
            greq.n = body.value("n", 1);
            greq.seed = body.value("seed", 0ULL);
            greq.want_logprobs = body.value("logprobs", false);
            greq.preset.name = body.value("model", "stub-small");
            const auto samples = impl_->backend->generate(greq);
            nlohmann::json choices = nlohmann::json::array();
            for (std::size_t i = 0; i < samples.size(); ++i) {
                nlohmann::json content = nlohmann::json::array();
                for (const auto& t : samples[i].tokens) {
                    nlohmann::json tok = {{"token", t.text}, {"logprob", logprob_to_json(t.logprob)}};
                    if (t.entropy) tok["entropy"] = *t.entropy;
                    if (t.alternatives) {
                        nlohmann::json alts = nlohmann::json::array();
                        for (const auto& [text, lp] : *t.alternatives)
                            alts.push_back({{"token", text}, {"logprob", logprob_to_json(lp)}});
                        tok["top_logprobs"] = std::move(alts);
                    }
                    content.push_back(std::move(tok));
                }
                choices.push_back({{"index", i},
                                   {"message", {{"role", "assistant"}, {"content", samples[i].text}}},
                                   {"logprobs", {{"content", std::move(content)}}}});
            }
            return nlohmann::json{{"choices", std::move(choices)}};
        });
    });

    impl_->server.Post("/v1/score", [this, handle](const httplib::Request& req,
                                                   httplib::Response& res) {
        handle(req, res, [this](const nlohmann::json& body) {
            ForcedScoreRequest sreq;
            sreq.context = body.at("context").get<std::string>();
            sreq.continuation = body.at("continuation").get<std::string>();
            const auto tokens = impl_->backend->score(sreq);
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& t : tokens) {
                nlohmann::json tok = {{"token", t.text}, {"logprob", logprob_to_json(t.logprob)}};
                if (t.entropy) tok["entropy"] = *t.entropy;
                arr.push_back(std::move(tok));
            }
            return nlohmann::json{{"tokens", std::move(arr)}};
        });
    });

    if (port == 0) {
        port_ = impl_->server.bind_to_any_port("127.0.0.1");
    } else {
        if (!impl_->server.bind_to_port("127.0.0.1", port))
            throw BackendError("stub: cannot bind port " + std::to_string(port));
        port_ = port;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port_;
}

void StubServer::stop() {
    if (impl_ && impl_->thread.joinable()) {
        impl_->server.stop();
        impl_->thread.join();
    }
}

} // namespace uq
