#pragma once

#include "manigap/config.hpp"
#include "manigap/genlab.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace manigap {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kResultsSchema = 1;

namespace detail {

inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string cl_field(const std::optional<double>& c) { return c ? num(*c) : "none"; }

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
}

inline std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace detail

// Column order is the contract; add columns only with a schema bump.
[[nodiscard]] inline std::string results_csv(const std::vector<GapRecord>& records) {
    std::ostringstream out;
    out << "# manigap results schema v" << kResultsSchema << '\n';
    out << "config_fingerprint,n,gamma,c_l,depth,width,seed,empirical_risk,statistical_risk,stderr,gap\n";
    for (const auto& r : records) {
        if (!r.ok()) continue;
        out << hex64(r.config_fingerprint) << ',' << r.n << ',' << detail::num(r.gamma) << ',' << detail::cl_field(r.cell.c_l)
            << ',' << r.cell.depth << ',' << r.cell.width << ',' << r.seed << ',' << detail::num(r.empirical_risk) << ','
            << detail::num(r.statistical_risk) << ',' << detail::num(r.statistical_stderr) << ',' << detail::num(r.gap)
            << '\n';
    }
    return out.str();
}

[[nodiscard]] inline std::string failures_csv(const std::vector<GapRecord>& records) {
    std::ostringstream out;
    out << "# manigap failures schema v" << kResultsSchema << '\n';
    out << "n,gamma,c_l,depth,width,trial,seed,error\n";
    for (const auto& r : records) {
        if (r.ok()) continue;
        out << r.cell.n << ',' << detail::num(r.cell.gamma) << ',' << detail::cl_field(r.cell.c_l) << ',' << r.cell.depth << ','
            << r.cell.width << ',' << r.trial << ',' << r.seed << ',' << detail::csv_escape(r.error) << '\n';
    }
    return out.str();
}

/// Per-cell aggregation; gamma is the nominal level, gamma_certified its mean certified size.
[[nodiscard]] inline std::string summary_csv(const std::vector<CellSummary>& cells) {
    std::ostringstream out;
    out << "# manigap summary schema v" << kResultsSchema << '\n';
    out << "n,gamma,gamma_certified,c_l,depth,width,trials,failures,mean_gap,std_gap\n";
    for (const auto& s : cells)
        out << s.cell.n << ',' << detail::num(s.cell.gamma) << ',' << detail::num(s.mean_gamma) << ','
            << detail::cl_field(s.cell.c_l) << ',' << s.cell.depth << ',' << s.cell.width << ',' << s.count << ','
            << s.failures << ',' << detail::num(s.mean_gap) << ',' << detail::num(s.std_gap) << '\n';
    return out.str();
}

/// One aggregate row (class "all") and one row per class for every record.
[[nodiscard]] inline std::string graph_results_csv(const std::vector<GraphLevelRecord>& records) {
    std::ostringstream out;
    out << "# manigap graph results schema v" << kResultsSchema << '\n';
    out << "config_fingerprint,gamma,gamma_certified,seed,class,empirical_risk,statistical_risk,stderr,gap,train_accuracy,test_accuracy\n";
    for (const auto& r : records) {
        const std::string head = hex64(r.config_fingerprint) + ',' + detail::num(r.nominal_gamma) + ',' + detail::num(r.gamma) + ',' +
                                 std::to_string(r.seed) + ',';
        out << head << "all," << detail::num(r.empirical_risk) << ',' << detail::num(r.statistical_risk) << ','
            << detail::num(r.statistical_stderr) << ',' << detail::num(r.gap) << ',' << detail::num(r.train_accuracy) << ','
            << detail::num(r.test_accuracy) << '\n';
        for (std::size_t k = 0; k < r.class_names.size(); ++k)
            out << head << detail::csv_escape(r.class_names[k]) << ',' << detail::num(r.class_empirical[k]) << ','
                << detail::num(r.class_statistical[k]) << ",nan,"
                << detail::num(std::abs(r.class_statistical[k] - r.class_empirical[k])) << ",nan,nan\n";
    }
    return out.str();
}

[[nodiscard]] inline std::string bound_fit_report(const BoundFit& fit) {
    static const char* names[4] = {"eps(N)/sqrt(N)", "sqrt(log(1/delta))/N", "(log N/N)^(1/d)", "gamma"};
    std::ostringstream out;
    out << "bound-shape fit (nonnegative least squares)\n";
    out << "d = " << fit.d << "\ndelta = " << detail::num(fit.delta) << "\ncells = " << fit.cells << '\n';
    for (std::size_t j = 0; j < 4; ++j) out << "C" << j + 1 << " [" << names[j] << "] = " << detail::num(fit.coefficients[j]) << '\n';
    out << "r2 = " << detail::num(fit.r2) << '\n';
    out << "rank = " << fit.rank << " of 4\ncondition = " << detail::num(fit.condition) << '\n';
    if (fit.rank_deficient) out << "warning: design is rank deficient; coefficients are not identifiable\n";
    return out.str();
}

/// Mean gap vs log N, one polyline per gamma (unconstrained, first depth/width only).
[[nodiscard]] inline std::string gap_svg(const std::vector<CellSummary>& cells) {
    std::map<double, std::vector<std::pair<double, double>>> series;
    for (const auto& s : cells)
        if (s.count > 0 && std::isfinite(s.mean_gap) && s.cell.depth == cells.front().cell.depth &&
            s.cell.width == cells.front().cell.width && s.cell.c_l == cells.front().cell.c_l)
            series[s.cell.gamma].push_back({std::log(static_cast<double>(s.cell.n)), s.mean_gap});
    double x0 = 1e300, x1 = -1e300, y1 = 0.0;
    for (const auto& [g, pts] : series)
        for (const auto& [x, y] : pts) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
        }
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= 0.0) y1 = 1.0;
    const double w = 640, h = 400, m = 50;
    auto px = [&](double x) { return m + (x - x0) / (x1 - x0) * (w - 2 * m); };
    auto py = [&](double y) { return h - m - y / y1 * (h - 2 * m); };
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m << "\" y2=\"" << h - m << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << h - m << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">log N</text>\n";
    out << "<text x=\"15\" y=\"" << h / 2 << "\" transform=\"rotate(-90 15 " << h / 2 << ")\" text-anchor=\"middle\">mean gap</text>\n";
    std::size_t idx = 0;
    for (const auto& [g, pts] : series) {
        const char* color = colors[idx % 6];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
        for (const auto& [x, y] : pts) out << px(x) << ',' << py(y) << ' ';
        out << "\"/>\n";
        out << "<text x=\"" << w - m + 5 << "\" y=\"" << m + 15 * idx << "\" fill=\"" << color << "\" font-size=\"11\">gamma="
            << g << "</text>\n";
        ++idx;
    }
    out << "</svg>\n";
    return out.str();
}

struct RunManifest {
    std::uint64_t config_checksum = 0;
    std::string tool_version = kToolVersion;
    std::uint64_t master_seed = 0;
    std::string command;
    std::string started;
    std::vector<std::string> outputs;
    nlohmann::json config;

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"config_checksum", hex64(config_checksum)}, {"tool_version", tool_version}, {"master_seed", master_seed},
                {"command", command}, {"started", started}, {"outputs", outputs}, {"config", config}};
    }
};

[[nodiscard]] inline RunManifest make_manifest(const ExperimentConfig& cfg, const std::string& command) {
    RunManifest m;
    m.config = config_to_json(cfg);
    m.config_checksum = fnv1a(m.config.dump());
    m.master_seed = cfg.eval.master_seed;
    m.command = command;
    m.started = detail::utc_now();
    return m;
}

/// Writes files into a sibling staging directory (manifest first), then swaps it into place.
/// An existing directory is only replaced with overwrite = true.
class OutputDir {
public:
    OutputDir(std::filesystem::path target, bool overwrite) : target_(std::move(target)) {
        namespace fs = std::filesystem;
        if (fs::exists(target_) && !overwrite)
            throw ConfigError("output directory " + target_.string() + " exists (pass --overwrite to replace it)");
        if (fs::exists(target_) && !fs::is_directory(target_)) throw ConfigError(target_.string() + " is not a directory");
        const auto parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
        fs::create_directories(parent);
        staging_ = parent / (target_.filename().string() + ".tmp-" + hex64(fnv1a(detail::utc_now() + target_.string())));
        fs::remove_all(staging_);
        fs::create_directories(staging_);
    }
    OutputDir(const OutputDir&) = delete;
    OutputDir& operator=(const OutputDir&) = delete;
    ~OutputDir() {
        std::error_code ec;
        if (!committed_) std::filesystem::remove_all(staging_, ec);
    }

    void write_manifest(const RunManifest& m) {
        detail::write_file(staging_ / "manifest.json", m.to_json().dump(2) + "\n");
        manifest_written_ = true;
    }

    void write(const std::string& name, const std::string& text) {
        if (!manifest_written_) throw Error("manifest must be written before results");
        detail::write_file(staging_ / name, text);
    }

    void commit() {
        namespace fs = std::filesystem;
        if (fs::exists(target_)) {
            const auto old = fs::path(staging_.string() + ".old");
            fs::rename(target_, old);
            fs::rename(staging_, target_);
            fs::remove_all(old);
        } else {
            fs::rename(staging_, target_);
        }
        committed_ = true;
    }

private:
    std::filesystem::path target_;
    std::filesystem::path staging_;
    bool manifest_written_ = false;
    bool committed_ = false;
};

}  // namespace manigap
