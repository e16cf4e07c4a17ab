#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "distill_forge/errors.hpp"

namespace distill {

using json = nlohmann::ordered_json;

/// Calls `visit(record, line_number)` for every non-blank line.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const json&, std::size_t)>& visit) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw InvalidData(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        try {
            visit(record, line_no);
        } catch (const json::exception& e) {
            throw InvalidData(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (in.bad()) throw IoError("read failure on " + path.string());
}

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::vector<json> records;
    for_each_jsonl(path, [&](const json& r, std::size_t) { records.push_back(r); });
    return records;
}

/// Writes one compact object per line; creates parent directories.
template <class Range>
void write_jsonl(const std::filesystem::path& path, const Range& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (const auto& record : records) {
        out << json(record).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    }
    out.flush();
    if (!out) throw IoError("write failure on " + path.string());
}

inline void write_json(const std::filesystem::path& path, const json& value) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << value.dump(2) << '\n';
    if (!out) throw IoError("write failure on " + path.string());
}

inline json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidData(path.string() + ": " + e.what());
    }
}

}  // namespace distill
