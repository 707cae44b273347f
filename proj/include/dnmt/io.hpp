#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dnmt/error.hpp"

namespace dnmt {

using Json = nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorKind::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// All outputs are written atomically: temp file in the same directory, then
// rename over the target.
inline void atomic_write(const std::filesystem::path& path,
                         const std::function<void(std::ostream&)>& writer) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) raise(ErrorKind::io, "cannot write " + tmp.string());
        writer(out);
        out.flush();
        if (!out) raise(ErrorKind::io, "write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) raise(ErrorKind::io, "rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
    atomic_write(path, [&](std::ostream& out) { out << text; });
}

inline std::vector<Json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::io, "cannot open " + path.string());
    std::vector<Json> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const Json::parse_error& e) {
            raise(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records) {
    atomic_write(path, [&](std::ostream& out) {
        for (const Json& r : records) out << r.dump() << '\n';
    });
}

// FNV-1a digest of a file's bytes; recorded in run manifests.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string file_digest(const std::filesystem::path& path) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(read_file(path))));
    return std::string(buf);
}

} // namespace dnmt
