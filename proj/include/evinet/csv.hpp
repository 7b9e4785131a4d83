#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "evinet/errors.hpp"

namespace evinet {

// Minimal comma-separated table support for the project's delimited-text
// interfaces (manifests, boxes files, report tables). Fields never contain
// commas or quotes by format contract, so no quoting is implemented.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name, const std::string& context) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw io_error(context + ": missing required column '" + name + "'");
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

// Reads a file with a required header row; skips blank lines. Throws
// io_error on missing files and validation_error on ragged rows.
inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("read_csv: cannot open " + path);
    CsvTable t;
    std::string line;
    bool have_header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw validation_error(path + ":" + std::to_string(lineno) + ": expected " +
                                   std::to_string(t.header.size()) + " fields, got " +
                                   std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    if (!have_header) throw validation_error(path + ": missing header row");
    return t;
}

inline void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path);
    if (!out) throw io_error("write_csv: cannot open " + path + " for writing");
    auto write_row = [&out](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << row[i];
        }
        out << '\n';
    };
    write_row(table.header);
    for (const auto& row : table.rows) write_row(row);
    if (!out) throw io_error("write_csv: failed writing " + path);
}

} // namespace evinet
