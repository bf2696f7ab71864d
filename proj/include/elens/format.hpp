#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "elens/errors.hpp"

namespace elens {

// Fixed formatting so identical values always produce identical bytes.
inline std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string lower(std::string s) {
    for (char& c : s) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return s;
}

// CSV fields are kept unquoted; reject the characters that would need
// escaping so emitted files stay trivially parseable.
inline void check_csv_field(const std::string& v, const std::string& what,
                            int line_no) {
    for (char c : v) {
        if (c == ',' || c == '"' || c == '\n') {
            throw DataError(what + " contains forbidden character at line " +
                            std::to_string(line_no));
        }
    }
}

}  // namespace elens
