#pragma once

#include <charconv>
#include <string>

namespace uq {

// Shortest decimal that round-trips the double; deterministic, used for all
// CSV output so golden files are byte-stable.
inline std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline constexpr const char* kUndefinedCell = "—"; // undefined metric cell

} // namespace uq
