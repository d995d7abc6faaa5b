#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fqf/error.hpp"

namespace fqf::harness {

inline constexpr const char* kCsvHeader = "experiment_id,seed,step,metric,value,wall_ms";

struct ResultRow {
    std::string experiment_id;
    std::uint64_t seed = 0;
    std::size_t step = 0;
    std::string metric;
    double value = 0.0;
    double wall_ms = 0.0;
};

/// Shortest round-trip representation; non-finite values print as "nan".
inline std::string format_value(double v) {
    if (!std::isfinite(v)) return "nan";
    char buf[32];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string format_row(const ResultRow& r) {
    std::ostringstream out;
    out << r.experiment_id << ',' << r.seed << ',' << r.step << ',' << r.metric << ',' << format_value(r.value) << ','
        << format_value(r.wall_ms);
    return out.str();
}

/// Writes the header on open and one line per row; flushes each row.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw InvalidArgument("cannot open output file for writing: " + path);
        out_ << kCsvHeader << '\n';
    }

    void write(const ResultRow& row) {
        if (row.experiment_id.find(',') != std::string::npos || row.metric.find(',') != std::string::npos)
            throw InvalidArgument("csv: identifiers must not contain commas");
        out_ << format_row(row) << '\n';
        out_.flush();
        if (!out_) throw Error("failed writing " + path_);
    }

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
    std::ofstream out_;
};

/// Parses a results file, checking the header and every field.
inline std::vector<ResultRow> read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw InvalidArgument(path + ": unexpected header");
    std::vector<ResultRow> rows;
    std::size_t lineno = 1;
    auto number = [&](const std::string& field) {
        if (field == "nan") return std::nan("");
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(field, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != field.size() || field.empty() || !std::isfinite(v))
            throw InvalidArgument(path + ":" + std::to_string(lineno) + ": bad number '" + field + "'");
        return v;
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 6) throw InvalidArgument(path + ":" + std::to_string(lineno) + ": expected 6 fields");
        ResultRow r;
        r.experiment_id = f[0];
        r.seed = std::stoull(f[1]);
        r.step = std::stoull(f[2]);
        r.metric = f[3];
        r.value = number(f[4]);
        r.wall_ms = number(f[5]);
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace fqf::harness
