#pragma once

// On-disk formats. Matrices: raw little-endian float64, column-major, with a
// JSON sidecar (same stem, .json) carrying shape and the config hash. Tables:
// CSV with a leading "# config_hash: ..." comment, header row, LF endings and
// shortest round-trip number formatting, so identical inputs give identical
// bytes.

#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "sspod/errors.hpp"
#include "sspod/subspace.hpp"

namespace sspod {

namespace fs = std::filesystem;

/// A required input file is absent or unreadable.
class ArtifactError : public Error {
public:
    ArtifactError(const fs::path& path, const std::string& what)
        : Error(what + ": " + path.string()), path_(path) {}
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

/// 64-bit FNV-1a of a string, as 16 lowercase hex digits.
inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

/// nlohmann::json objects keep keys sorted, so dump() is canonical.
inline std::string config_hash(const nlohmann::json& config) { return fnv1a_hex(config.dump()); }

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw Error("parse_double: not a number: '" + s + "'");
    return v;
}

inline fs::path sidecar_path(const fs::path& bin) {
    fs::path p = bin;
    p.replace_extension(".json");
    return p;
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("write failed: " + path.string());
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError(path, "missing artifact");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& path) {
    const std::string text = read_text(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ArtifactError(path, std::string("corrupt artifact (") + e.what() + ")");
    }
}

// ---------------------------------------------------------------------------
// Binary matrices

static_assert(std::endian::native == std::endian::little, "binary matrix format assumes a little-endian host");

struct MatrixHeader {
    Index rows = 0;
    Index cols = 0;
    std::string config_hash;
};

inline void write_matrix(const fs::path& path, const Matrix& m, const std::string& hash) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open for writing: " + path.string());
        out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!out) throw Error("write failed: " + path.string());
    }
    nlohmann::json side;
    side["format"] = "sspod-matrix";
    side["version"] = 1;
    side["rows"] = m.rows();
    side["cols"] = m.cols();
    side["dtype"] = "float64";
    side["order"] = "column-major";
    side["endianness"] = "little";
    side["data"] = path.filename().string();
    side["config_hash"] = hash;
    write_json(sidecar_path(path), side);
}

inline MatrixHeader read_matrix_header(const fs::path& path) {
    const nlohmann::json side = read_json(sidecar_path(path));
    try {
        if (side.at("dtype") != "float64" || side.at("order") != "column-major") {
            throw ArtifactError(sidecar_path(path), "unsupported matrix layout");
        }
        return {side.at("rows").get<Index>(), side.at("cols").get<Index>(), side.value("config_hash", std::string())};
    } catch (const nlohmann::json::exception& e) {
        throw ArtifactError(sidecar_path(path), std::string("malformed sidecar (") + e.what() + ")");
    }
}

inline Matrix read_matrix(const fs::path& path, MatrixHeader* header_out = nullptr) {
    const MatrixHeader h = read_matrix_header(path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError(path, "missing artifact");
    Matrix m(h.rows, h.cols);
    const auto bytes = static_cast<std::streamsize>(m.size() * sizeof(double));
    in.read(reinterpret_cast<char*>(m.data()), bytes);
    if (in.gcount() != bytes || in.peek() != std::char_traits<char>::eof()) {
        throw ArtifactError(path, "matrix payload size does not match its sidecar");
    }
    if (header_out != nullptr) *header_out = h;
    return m;
}

// ---------------------------------------------------------------------------
// CSV

class CsvWriter {
public:
    CsvWriter(const std::string& hash, const std::vector<std::string>& header) : width_(header.size()) {
        text_ << "# config_hash: " << hash << '\n';
        for (std::size_t i = 0; i < header.size(); ++i) text_ << (i ? "," : "") << header[i];
        text_ << '\n';
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != width_) throw DimensionError("CsvWriter: row width differs from the header");
        for (std::size_t i = 0; i < cells.size(); ++i) text_ << (i ? "," : "") << cells[i];
        text_ << '\n';
    }

    void row(const std::vector<double>& cells) {
        std::vector<std::string> s;
        s.reserve(cells.size());
        for (double v : cells) s.push_back(format_double(v));
        row(s);
    }

    std::string str() const { return text_.str(); }
    void save(const fs::path& path) const { write_text(path, str()); }

private:
    std::size_t width_;
    std::ostringstream text_;
};

/// Numeric columns of a CSV written by CsvWriter (comment line skipped).
struct CsvTable {
    std::string config_hash;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw Error("CsvTable: no column '" + name + "'");
    }

    Vector numeric(const std::string& name) const {
        const std::size_t c = column(name);
        Vector v(static_cast<Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) v(static_cast<Index>(i)) = parse_double(rows[i][c]);
        return v;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline CsvTable read_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    CsvTable t;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("# config_hash: ", 0) == 0) {
            t.config_hash = line.substr(15);
            continue;
        }
        if (!line.empty() && line[0] == '#') continue;
        if (t.header.empty()) {
            t.header = split_csv_line(line);
            continue;
        }
        auto cells = split_csv_line(line);
        if (cells.size() != t.header.size()) throw ArtifactError(path, "ragged CSV row");
        t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) throw ArtifactError(path, "CSV has no header");
    return t;
}

/// Small dense matrices as CSV: header c0..c{cols-1}, one row per line.
inline void write_matrix_csv(const fs::path& path, const Matrix& m, const std::string& hash) {
    std::vector<std::string> header;
    for (Index j = 0; j < m.cols(); ++j) header.push_back("c" + std::to_string(j));
    CsvWriter w(hash, header);
    for (Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(m.cols()));
        for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
        w.row(r);
    }
    w.save(path);
}

inline Matrix read_matrix_csv(const fs::path& path) {
    const CsvTable t = read_csv(path);
    Matrix m(static_cast<Index>(t.rows.size()), static_cast<Index>(t.header.size()));
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            m(i, j) = parse_double(t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        }
    }
    return m;
}

}  // namespace sspod
