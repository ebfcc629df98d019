#include "uq/textmatch.hpp"

#include <cctype>

namespace uq {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
char fold(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

// Collapses internal whitespace runs to single spaces and trims the ends.
std::string normalize_ws(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (char c : s) {
        if (is_space(c)) {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += c;
    }
    return out;
}

bool needle_is_numeric(std::string_view needle) {
    bool saw_digit = false;
    for (char c : needle) {
        if (is_digit(c)) saw_digit = true;
        else if (c != '.' && c != '-' && c != ',') return false;
    }
    return saw_digit;
}

// Attempts to match the whitespace-normalized needle at text[pos]; returns the
// end position on success, npos otherwise.
std::size_t match_at(std::string_view text, std::size_t pos, std::string_view needle) {
    std::size_t t = pos;
    for (std::size_t n = 0; n < needle.size(); ++n) {
        if (needle[n] == ' ') {
            if (t >= text.size() || !is_space(text[t])) return std::string_view::npos;
            while (t < text.size() && is_space(text[t])) ++t;
        } else {
            if (t >= text.size() || fold(text[t]) != fold(needle[n])) return std::string_view::npos;
            ++t;
        }
    }
    return t;
}

} // namespace

std::vector<CharRange> find_mentions(std::string_view text, std::string_view needle) {
    std::vector<CharRange> out;
    const std::string norm = normalize_ws(needle);
    if (norm.empty()) return out;
    const bool numeric = needle_is_numeric(norm);

    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t end = match_at(text, pos, norm);
        if (end == std::string_view::npos) {
            ++pos;
            continue;
        }
        const char before = pos > 0 ? text[pos - 1] : '\0';
        const char after = end < text.size() ? text[end] : '\0';
        bool blocked = (pos > 0 && is_alnum(before)) || (end < text.size() && is_alnum(after));
        if (numeric && !blocked)
            blocked = (pos > 0 && before == '.') || (end < text.size() && after == '.');
        if (blocked) {
            ++pos;
            continue;
        }
        out.push_back({pos, end});
        pos = end;
    }
    return out;
}

std::size_t count_mentions(std::string_view text, std::string_view needle) {
    return find_mentions(text, needle).size();
}

} // namespace uq
