#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "uq/errors.hpp"

namespace uq {

// Invokes fn(object, line_number) for every non-blank line of a JSONL file.
inline void for_each_jsonl(const std::string& path,
                           const std::function<void(const nlohmann::json&, std::size_t)>& fn) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what(), line_no);
        }
        if (!j.is_object())
            throw ParseError(path + ":" + std::to_string(line_no) + ": line is not an object", line_no);
        fn(j, line_no);
    }
}

inline void write_jsonl_lines(const std::string& path, const std::vector<nlohmann::json>& lines) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& j : lines) out << j.dump() << '\n';
    if (!out) throw IoError("write failed: " + path);
}

// Log probabilities may be -inf (JSON has no literal for it); encoded as the string "-inf".
inline nlohmann::json logprob_to_json(double lp) {
    if (std::isinf(lp)) return "-inf";
    return lp;
}

inline double logprob_from_json(const nlohmann::json& j, const std::string& field) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw ValidationError(field + ": unrecognized log-probability string '" + s + "'");
    }
    if (!j.is_number()) throw ValidationError(field + ": expected a number");
    return j.get<double>();
}

} // namespace uq
