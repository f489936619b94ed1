// JSONL / CSV emitters for training metrics and eval reports. Numbers are
// serialized via nlohmann::json (shortest round-trip form) so repeated runs
// produce byte-identical files.
#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "moto/mat.hpp"

namespace moto {

class JsonlWriter {
public:
    explicit JsonlWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw DataError("cannot open for writing: " + path.string());
    }

    void append(const nlohmann::json& record) {
        out_ << record.dump() << '\n';
        if (!out_) throw DataError("jsonl write failed");
    }

    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

inline std::string csv_cell(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();  // no quoting needed: closed schemas
    return v.dump();
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
        : out_(path, std::ios::binary), n_cols_(columns.size()) {
        if (!out_) throw DataError("cannot open for writing: " + path.string());
        write_row_(columns);
    }

    void row(const std::vector<nlohmann::json>& cells) {
        if (cells.size() != n_cols_) throw DataError("csv row width mismatch");
        std::vector<std::string> s;
        s.reserve(cells.size());
        for (const auto& c : cells) s.push_back(csv_cell(c));
        write_row_(s);
    }

private:
    void write_row_(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i)
            out_ << cells[i] << (i + 1 < cells.size() ? "," : "");
        out_ << '\n';
        if (!out_) throw DataError("csv write failed");
    }

    std::ofstream out_;
    std::size_t n_cols_;
};

}  // namespace moto
