#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace edualloc::csv {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

struct Reader {
    explicit Reader(const std::string& path) : in(path), path(path) {
        if (!in) throw std::runtime_error("cannot open '" + path + "'");
    }

    // returns false at EOF; skips blank lines; strips trailing \r
    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            fields = split_line(line);
            return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + msg);
    }

    std::ifstream in;
    std::string path;
    int line_no = 0;
};

inline double parse_double(const Reader& r, const std::string& s, const char* what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        r.fail(std::string("cannot parse ") + what + " from '" + s + "'");
    }
}

inline long parse_long(const Reader& r, const std::string& s, const char* what) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        r.fail(std::string("cannot parse ") + what + " from '" + s + "'");
    }
}

} // namespace edualloc::csv
