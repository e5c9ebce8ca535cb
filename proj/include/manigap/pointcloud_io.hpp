#pragma once

#include "manigap/core.hpp"
#include "manigap/pointcloud.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace manigap {

enum class PointFormat { Off, XyzCsv };

[[nodiscard]] inline PointFormat format_from_path(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".off") return PointFormat::Off;
    if (ext == ".csv" || ext == ".xyz") return PointFormat::XyzCsv;
    throw ConfigError("cannot infer point-cloud format from extension of " + path.string());
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\r')) ++pos;
        if (pos >= s.size()) break;
        const std::size_t start = pos;
        while (pos < s.size() && s[pos] != ' ' && s[pos] != '\t' && s[pos] != '\r') ++pos;
        out.push_back(s.substr(start, pos - start));
    }
    return out;
}

inline bool parse_double(std::string_view tok, double& out) {
    tok = trim(tok);
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    if (tok.empty()) return false;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return res.ec == std::errc() && res.ptr == tok.data() + tok.size() && std::isfinite(out);
}

inline bool parse_count(std::string_view tok, long long& out) {
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
    return res.ec == std::errc() && res.ptr == tok.data() + tok.size() && out >= 0;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// Line reader that tracks 1-based line numbers and skips blank and '#' comment lines.
class LineReader {
public:
    LineReader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

    bool next(std::string& line) {
        while (std::getline(in_, line)) {
            ++number_;
            const auto t = trim(line);
            if (t.empty() || t.front() == '#') continue;
            line = std::string(t);
            return true;
        }
        return false;
    }

    [[nodiscard]] std::size_t number() const noexcept { return number_; }
    [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, number_, what); }
    [[noreturn]] void fail_eof(const std::string& what) const { throw ParseError(path_, number_ + 1, what); }

private:
    std::istream& in_;
    std::string path_;
    std::size_t number_ = 0;
};

}  // namespace detail

/// OFF: "OFF" header, "V F E" counts, V coordinate lines; faces are not read.
[[nodiscard]] inline PointCloud parse_off(std::istream& in, const std::string& path = "<stream>") {
    detail::LineReader reader(in, path);
    std::string line;
    if (!reader.next(line)) reader.fail_eof("missing OFF header");
    std::string_view rest = line;
    if (rest.substr(0, 3) != "OFF") reader.fail("expected header token 'OFF'");
    rest = detail::trim(rest.substr(3));
    // Some exporters glue the counts onto the header line.
    if (rest.empty()) {
        if (!reader.next(line)) reader.fail_eof("missing vertex/face/edge counts");
        rest = line;
    }
    const auto counts = detail::split_ws(rest);
    long long v = 0, f = 0, e = 0;
    if (counts.size() != 3 || !detail::parse_count(counts[0], v) || !detail::parse_count(counts[1], f) ||
        !detail::parse_count(counts[2], e))
        reader.fail("expected counts line 'V F E' with three nonnegative integers");

    PointCloud cloud;
    cloud.points.resize(static_cast<Index>(v), 3);
    for (long long i = 0; i < v; ++i) {
        if (!reader.next(line)) reader.fail_eof("expected " + std::to_string(v) + " vertices, found " + std::to_string(i));
        const auto toks = detail::split_ws(line);
        if (toks.size() != 3) reader.fail("vertex line needs exactly 3 coordinates");
        for (Index c = 0; c < 3; ++c) {
            double value = 0.0;
            if (!detail::parse_double(toks[static_cast<std::size_t>(c)], value))
                reader.fail("invalid coordinate '" + std::string(toks[static_cast<std::size_t>(c)]) + "'");
            cloud.points(static_cast<Index>(i), c) = value;
        }
    }
    cloud.source = "file:" + path;
    return cloud;
}

/// XYZ-CSV: optional header row, then one "x,y,z" row per point.
[[nodiscard]] inline PointCloud parse_xyz_csv(std::istream& in, const std::string& path = "<stream>") {
    detail::LineReader reader(in, path);
    std::string line;
    std::vector<double> values;
    bool first = true;
    while (reader.next(line)) {
        std::vector<std::string_view> fields;
        std::string_view s = line;
        for (std::size_t pos = 0;;) {
            const std::size_t comma = s.find(',', pos);
            fields.push_back(s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
        }
        double xyz[3];
        bool ok = fields.size() == 3;
        for (std::size_t c = 0; ok && c < 3; ++c) ok = detail::parse_double(fields[c], xyz[c]);
        if (!ok) {
            const bool looks_like_header = first && std::any_of(line.begin(), line.end(), [](unsigned char ch) {
                return std::isalpha(ch) && ch != 'e' && ch != 'E';
            });
            if (looks_like_header) {
                first = false;
                continue;
            }
            if (fields.size() != 3) reader.fail("expected 3 comma-separated fields, found " + std::to_string(fields.size()));
            reader.fail("invalid coordinate in row '" + line + "'");
        }
        first = false;
        values.insert(values.end(), xyz, xyz + 3);
    }
    PointCloud cloud;
    cloud.points.resize(static_cast<Index>(values.size() / 3), 3);
    for (Index i = 0; i < cloud.size(); ++i)
        for (Index c = 0; c < 3; ++c) cloud.points(i, c) = values[static_cast<std::size_t>(3 * i + c)];
    cloud.source = "file:" + path;
    return cloud;
}

[[nodiscard]] inline PointCloud load_point_cloud(const std::filesystem::path& path, PointFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open point-cloud file " + path.string());
    return format == PointFormat::Off ? parse_off(in, path.string()) : parse_xyz_csv(in, path.string());
}

[[nodiscard]] inline PointCloud load_point_cloud(const std::filesystem::path& path) {
    return load_point_cloud(path, format_from_path(path));
}

/// Shortest round-trip decimal representation, so reading back gives identical doubles.
inline void write_off(std::ostream& out, const PointCloud& cloud) {
    if (cloud.ambient_dim() != 3) throw ConfigError("OFF output needs 3-D points");
    out << "OFF\n" << cloud.size() << " 0 0\n";
    for (Index i = 0; i < cloud.size(); ++i)
        out << detail::format_double(cloud.points(i, 0)) << ' ' << detail::format_double(cloud.points(i, 1)) << ' '
            << detail::format_double(cloud.points(i, 2)) << '\n';
}

inline void write_xyz_csv(std::ostream& out, const PointCloud& cloud, bool header = true) {
    if (cloud.ambient_dim() != 3) throw ConfigError("XYZ-CSV output needs 3-D points");
    if (header) out << "x,y,z\n";
    for (Index i = 0; i < cloud.size(); ++i)
        out << detail::format_double(cloud.points(i, 0)) << ',' << detail::format_double(cloud.points(i, 1)) << ','
            << detail::format_double(cloud.points(i, 2)) << '\n';
}

inline void save_point_cloud(const std::filesystem::path& path, const PointCloud& cloud, PointFormat format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    if (format == PointFormat::Off)
        write_off(out, cloud);
    else
        write_xyz_csv(out, cloud);
    if (!out) throw Error("write failed for " + path.string());
}

/// n distinct points drawn uniformly without replacement.
[[nodiscard]] inline PointCloud subsample(const PointCloud& cloud, Index n, std::uint64_t seed) {
    if (n < 0 || n > cloud.size())
        throw ConfigError("subsample: requested " + std::to_string(n) + " points from a cloud of " +
                          std::to_string(cloud.size()));
    std::vector<Index> order(static_cast<std::size_t>(cloud.size()));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(seed);
    for (Index k = 0; k < n; ++k) {
        std::uniform_int_distribution<Index> pick(k, cloud.size() - 1);
        std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(pick(rng))]);
    }
    PointCloud out;
    out.points.resize(n, cloud.ambient_dim());
    for (Index k = 0; k < n; ++k) out.points.row(k) = cloud.points.row(order[static_cast<std::size_t>(k)]);
    out.source = cloud.source + ":subsample=" + std::to_string(n);
    return out;
}

}  // namespace manigap
