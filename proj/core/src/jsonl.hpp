#pragma once

// Internal helpers for the JSON Lines formats used across the library.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <nlohmann/json.hpp>

#include "leaflet/error.hpp"

namespace leaflet::detail {

using nlohmann::json;

/// Calls `fn(object, line_number)` for every non-blank line. Lines that are
/// not JSON objects raise ParseError with the offending line number.
inline void read_jsonl(const std::filesystem::path& path,
                       const std::function<void(const json&, std::size_t)>& fn) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json value;
        try {
            value = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path.string(), number, std::string("invalid JSON: ") + e.what());
        }
        if (!value.is_object()) throw ParseError(path.string(), number, "expected a JSON object");
        fn(value, number);
    }
}

/// Fetches a required field or throws ParseError naming it.
template <typename T>
T field(const json& obj, const char* key, const std::filesystem::path& path, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(path.string(), line, std::string("missing required field '") + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ParseError(path.string(), line, std::string("field '") + key + "' has the wrong type");
    }
}

/// Writes `content` to a sibling temp file and renames it over `path`.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw Error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace leaflet::detail
