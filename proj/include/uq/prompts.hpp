#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uq/records.hpp"

namespace uq {

/// Loads the versioned prompt templates from an assets directory and
/// assembles the (dataset, mode)-selected prompts.
class PromptLibrary {
public:
    /// dir: explicit assets directory; empty selects UQ_ASSETS_DIR from the
    /// environment, then the compiled-in default.
    explicit PromptLibrary(const std::string& dir = "");

    std::string task_prompt(const std::string& dataset, Mode mode, const std::string& question,
                            const std::optional<std::vector<std::string>>& options) const;

    /// Appendix-style self-report prompt; the yes/no continuations are scored
    /// against this context.
    std::string src_prompt(const std::string& question, const std::string& answer,
                           const std::optional<std::vector<std::string>>& options) const;

    std::string sequential_followup() const;

    const std::string& assets_dir() const { return dir_; }

private:
    std::string tpl(const std::string& name) const;

    std::string dir_;
    mutable std::map<std::string, std::string> cache_;
};

std::string resolve_assets_dir(const std::string& explicit_dir);

} // namespace uq
