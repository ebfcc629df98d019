#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace uq {

struct CharRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool operator==(const CharRange&) const = default;
};

/// Finds every boundary-respecting, case-insensitive occurrence of `needle`
/// in `text`. Internal whitespace in the needle matches any whitespace run
/// (multi-word answers are matched as contiguous phrases). A match may not
/// be flanked by alphanumerics; a purely numeric needle may additionally not
/// be flanked by a decimal point. Matches do not overlap.
std::vector<CharRange> find_mentions(std::string_view text, std::string_view needle);

/// find_mentions().size(); the single matcher shared by answer masking and
/// answer-frequency analysis.
std::size_t count_mentions(std::string_view text, std::string_view needle);

} // namespace uq
