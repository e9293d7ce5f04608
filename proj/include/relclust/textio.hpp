#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "relclust/errors.hpp"

namespace relclust {
namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t cut = line.find(sep, start);
        if (cut == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, cut - start));
        start = cut + 1;
    }
}

inline double parse_real(const std::string& field, const std::string& where, int line_no) {
    const std::string t = trim(field);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size())
        throw parse_error(where + ": line " + std::to_string(line_no) + ": not a number: '" +
                          field + "'");
    return v;
}

inline long long parse_integer(const std::string& field, const std::string& where, int line_no) {
    const std::string t = trim(field);
    char* end = nullptr;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (t.empty() || end != t.c_str() + t.size())
        throw parse_error(where + ": line " + std::to_string(line_no) + ": not an integer: '" +
                          field + "'");
    return v;
}

/// All non-empty lines of a file, paired with their 1-based line numbers.
inline std::vector<std::pair<int, std::string>> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw structural_error("cannot open file: " + path);
    std::vector<std::pair<int, std::string>> lines;
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        lines.push_back({no, line});
    }
    return lines;
}

/// Shortest decimal text that round-trips the exact double value.
inline std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail
}  // namespace relclust
