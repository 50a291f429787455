#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include "trajlens/error.hpp"

namespace trajlens::csv {

/// Shortest decimal text that parses back to the same double.
inline std::string format(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view text, std::string_view context) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw DataError("not a number '" + std::string(text) + "' in " + std::string(context));
    }
    return value;
}

inline long parse_long(std::string_view text, std::string_view context) {
    long value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw DataError("not an integer '" + std::string(text) + "' in " + std::string(context));
    }
    return value;
}

inline std::string quote(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

inline std::string join(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) {
            line += ',';
        }
        line += quote(fields[i]);
    }
    return line;
}

/// Splits one CSV record. Quoted fields may contain commas and doubled quotes.
inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else if (c != '\r') {
            current += c;
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        throw DataError("missing CSV column '" + std::string(name) + "'");
    }
    bool has_column(std::string_view name) const {
        for (const auto& h : header) {
            if (h == name) {
                return true;
            }
        }
        return false;
    }
};

inline Table read(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    Table table;
    std::string line;
    bool first = true;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        auto fields = split(line);
        if (first) {
            table.header = std::move(fields);
            first = false;
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(table.header.size()) +
                            " fields, got " + std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    if (first) {
        throw DataError("empty CSV file " + path);
    }
    return table;
}

inline void write(const std::string& path, const Table& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path);
    }
    out << join(table.header) << '\n';
    for (const auto& row : table.rows) {
        out << join(row) << '\n';
    }
}

/// Two-column `key,value` lookup file with a header row.
inline std::unordered_map<std::string, std::string> read_mapping(const std::string& path) {
    const Table table = read(path);
    if (table.header.size() < 2) {
        throw DataError(path + ": mapping needs two columns");
    }
    std::unordered_map<std::string, std::string> mapping;
    for (const auto& row : table.rows) {
        mapping[row[0]] = row[1];
    }
    return mapping;
}

} // namespace trajlens::csv
