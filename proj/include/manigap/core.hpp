#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace manigap {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

inline constexpr double kPi = std::numbers::pi;

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (maps to CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file; carries the 1-based line number of the offending line.
class ParseError : public ConfigError {
public:
    ParseError(std::string path, std::size_t line, const std::string& what)
        : ConfigError(path + ":" + std::to_string(line) + ": " + what), path_(std::move(path)), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
    std::size_t line_;
};

// splitmix64 finalizer; used to derive independent RNG streams from a master seed.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

[[nodiscard]] constexpr std::uint64_t fnv1a(std::string_view bytes,
                                            std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept {
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
    return mix64(mix64(master) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                                  std::uint64_t stream = 0) noexcept {
    return derive_seed(derive_seed(master, fnv1a(tag)), stream);
}

[[nodiscard]] inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

/// Volume of the d-dimensional Euclidean unit ball.
[[nodiscard]] inline double unit_ball_volume(int d) {
    return std::pow(kPi, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
}

[[nodiscard]] inline double wrap_angle(double a) {
    a = std::fmod(a, 2.0 * kPi);
    return a < 0.0 ? a + 2.0 * kPi : a;
}

// Signed difference a - b reduced to (-period/2, period/2].
[[nodiscard]] inline double periodic_delta(double a, double b, double period) {
    double d = std::fmod(a - b, period);
    if (d > period / 2) d -= period;
    if (d <= -period / 2) d += period;
    return d;
}

}  // namespace manigap
