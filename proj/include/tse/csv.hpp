#pragma once

// Minimal CSV support: comma-separated, dot-decimal, header required.
// Readers report the offending line number on malformed input so CLI
// diagnostics can point at the exact row.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tse/errors.hpp"

namespace tse {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // raw cells, header excluded

    int column(const std::string& name) const {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return static_cast<int>(j);
        return -1;
    }

    int require_column(const std::string& name, const std::string& file) const {
        int j = column(name);
        if (j < 0)
            throw ValidationError(file + ": missing required column '" + name + "'");
        return j;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    CsvTable t;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (line_no == 1) {
            t.header = std::move(cells);
        } else {
            if (cells.size() != t.header.size())
                throw ValidationError(path + ":" + std::to_string(line_no) + ": expected " +
                                      std::to_string(t.header.size()) + " cells, got " +
                                      std::to_string(cells.size()));
            t.rows.push_back(std::move(cells));
        }
    }
    if (t.header.empty()) throw ValidationError(path + ": empty file (header required)");
    return t;
}

inline double parse_double(const std::string& cell, const std::string& context) {
    try {
        std::size_t pos = 0;
        double v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw ValidationError(context + ": cannot parse number from '" + cell + "'");
    }
}

/// Shortest decimal form that round-trips the exact double.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    for (int prec = 1; prec <= 16; ++prec) {
        char shorter[40];
        std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
        std::sscanf(shorter, "%lf", &back);
        if (back == v) return shorter;
    }
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace tse
