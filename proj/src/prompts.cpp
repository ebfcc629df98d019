#include "uq/prompts.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "uq/errors.hpp"

#ifndef UQ_DEFAULT_ASSETS_DIR
#define UQ_DEFAULT_ASSETS_DIR "assets"
#endif

namespace uq {

namespace {

std::string replace_all(std::string text, const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        text.replace(pos, key.size(), value);
        pos += value.size();
    }
    return text;
}

std::string join_options(const std::vector<std::string>& options) {
    std::string out;
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (i) out += ", ";
        out += options[i];
    }
    return out;
}

std::string rstrip(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

} // namespace

std::string resolve_assets_dir(const std::string& explicit_dir) {
    if (!explicit_dir.empty()) return explicit_dir;
    if (const char* env = std::getenv("UQ_ASSETS_DIR"); env && *env) return env;
    return UQ_DEFAULT_ASSETS_DIR;
}

PromptLibrary::PromptLibrary(const std::string& dir) : dir_(resolve_assets_dir(dir)) {
    if (!std::filesystem::is_directory(std::filesystem::path(dir_) / "prompts"))
        throw ConfigError("prompt assets not found under " + dir_);
}

std::string PromptLibrary::tpl(const std::string& name) const {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    const std::string path = dir_ + "/prompts/" + name + ".txt";
    std::ifstream in(path);
    if (!in) throw ConfigError("missing prompt template " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = rstrip(buf.str());
    cache_[name] = text;
    return text;
}

std::string PromptLibrary::task_prompt(const std::string& dataset, Mode mode,
                                       const std::string& question,
                                       const std::optional<std::vector<std::string>>& options) const {
    std::string context = options ? tpl("standard_context_mc") : tpl("standard_context_open");
    context = replace_all(std::move(context), "{question}", question);
    if (options) context = replace_all(std::move(context), "{options}", join_options(*options));

    std::string out = context;
    if (dataset == "okvqa") out += "\n\n" + tpl("dataset_okvqa");
    else if (dataset == "mathvista") out += "\n\n" + tpl("dataset_mathvista");

    // Reasoning-trained models get the plain answer instruction; the trace is
    // intrinsic to the model, not prompted.
    const bool cot_prompting = mode == Mode::cot;
    out += "\n\n" + tpl(cot_prompting ? "standard_answer_cot" : "standard_answer_no_cot");
    out += "\n\n" + tpl("standard_format_rules");
    return out;
}

std::string PromptLibrary::src_prompt(const std::string& question, const std::string& answer,
                                      const std::optional<std::vector<std::string>>& options) const {
    std::string context = options ? tpl("src_context_mc") : tpl("src_context_open");
    context = replace_all(std::move(context), "{question}", question);
    context = replace_all(std::move(context), "{answer}", answer);
    if (options) context = replace_all(std::move(context), "{mc_options}", join_options(*options));
    std::string out = context;
    out += "\n\n" + tpl("src_answer_no_cot");
    out += "\n\n" + tpl("src_format_rules");
    return out;
}

std::string PromptLibrary::sequential_followup() const { return tpl("sequential_followup"); }

} // namespace uq
