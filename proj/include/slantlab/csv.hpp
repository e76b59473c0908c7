#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "slantlab/common.hpp"

namespace slantlab {

// Minimal RFC-4180-ish CSV support: comma separated, double-quote quoting,
// embedded quotes doubled. Enough for the corpus, panel and score files.
namespace csv {

inline std::string quote(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline std::vector<std::string> parse_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::unordered_map<std::string, size_t> col_index;

    size_t col(const std::string& name) const {
        auto it = col_index.find(name);
        if (it == col_index.end()) throw DataError("csv: missing column '" + name + "'");
        return it->second;
    }
    bool has_col(const std::string& name) const { return col_index.count(name) > 0; }
};

// Full-file parse honoring quoted fields, including embedded newlines.
inline std::vector<std::vector<std::string>> parse_records(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    bool row_started = false;
    for (size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
            row_started = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
            row_started = true;
        } else if (c == '\n') {
            if (row_started || !cur.empty()) {
                fields.push_back(std::move(cur));
                cur.clear();
                records.push_back(std::move(fields));
                fields.clear();
                row_started = false;
            }
        } else if (c != '\r') {
            cur += c;
            row_started = true;
        }
    }
    if (row_started || !cur.empty()) {
        fields.push_back(std::move(cur));
        records.push_back(std::move(fields));
    }
    return records;
}

inline Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("csv: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Table t;
    auto records = parse_records(text);
    for (size_t r = 0; r < records.size(); ++r) {
        if (r == 0) {
            t.header = std::move(records[r]);
            for (size_t i = 0; i < t.header.size(); ++i) t.col_index[t.header[i]] = i;
        } else {
            t.rows.push_back(std::move(records[r]));
        }
    }
    return t;
}

// Shortest round-trip double formatting so artifacts are byte-stable.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) {
        for (int prec = 1; prec < 17; ++prec) {
            char shorter[32];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
            std::sscanf(shorter, "%lf", &back);
            if (back == v) return shorter;
        }
    }
    return buf;
}

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw DataError("csv: cannot write '" + path + "'");
    }

    void row(const std::vector<std::string>& fields) {
        for (size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << quote(fields[i]);
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

} // namespace csv
} // namespace slantlab
