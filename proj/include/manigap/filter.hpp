#pragma once

#include "manigap/core.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace manigap {

/// Heat-kernel filter taps h_0 .. h_{K-1}; the filter is sum_k h_k exp(-k L).
class FilterCoefficients {
public:
    FilterCoefficients() : taps_{1.0} {}
    explicit FilterCoefficients(std::vector<double> taps) : taps_(std::move(taps)) {
        if (taps_.empty()) throw ConfigError("filter needs at least one tap");
        for (double t : taps_)
            if (!std::isfinite(t)) throw ConfigError("filter taps must be finite");
    }

    [[nodiscard]] std::size_t size() const noexcept { return taps_.size(); }
    [[nodiscard]] double operator[](std::size_t k) const { return taps_[k]; }
    [[nodiscard]] std::span<const double> taps() const noexcept { return taps_; }

    [[nodiscard]] FilterCoefficients scaled(double s) const {
        std::vector<double> t = taps_;
        for (double& v : t) v *= s;
        return FilterCoefficients(std::move(t));
    }

private:
    std::vector<double> taps_;
};

/// hhat(lambda) = sum_k h_k exp(-k lambda).
[[nodiscard]] inline double freq_response(std::span<const double> taps, double lambda) {
    double out = 0.0;
    for (std::size_t k = 0; k < taps.size(); ++k) out += taps[k] * std::exp(-static_cast<double>(k) * lambda);
    return out;
}

/// hhat'(lambda) = -sum_k k h_k exp(-k lambda).
[[nodiscard]] inline double freq_response_deriv(std::span<const double> taps, double lambda) {
    double out = 0.0;
    for (std::size_t k = 1; k < taps.size(); ++k) {
        const double kd = static_cast<double>(k);
        out -= kd * taps[k] * std::exp(-kd * lambda);
    }
    return out;
}

[[nodiscard]] inline double freq_response(const FilterCoefficients& h, double lambda) {
    if (lambda < 0.0) throw ConfigError("frequency response requires lambda >= 0");
    return freq_response(h.taps(), lambda);
}

[[nodiscard]] inline double freq_response_deriv(const FilterCoefficients& h, double lambda) {
    if (lambda < 0.0) throw ConfigError("frequency response requires lambda >= 0");
    return freq_response_deriv(h.taps(), lambda);
}

/// Uniform grid of `steps` points spanning [lo, hi].
struct LambdaGrid {
    double lo = 0.01;
    double hi = 10.0;
    std::size_t steps = 1000;

    void validate() const {
        if (!(lo > 0.0)) throw ConfigError("lambda grid requires lambda_min > 0");
        if (!(hi >= lo)) throw ConfigError("lambda grid requires lambda_max >= lambda_min");
        if (steps < 1) throw ConfigError("lambda grid requires at least one step");
    }

    [[nodiscard]] double at(std::size_t i) const {
        if (steps == 1) return lo;
        return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
    }

    [[nodiscard]] std::vector<double> points() const {
        std::vector<double> out(steps);
        for (std::size_t i = 0; i < steps; ++i) out[i] = at(i);
        return out;
    }
};

/// Realized low-pass and integral-Lipschitz constants of one filter over a finite grid.
struct FilterCertificate {
    double c_h = 0.0;  // max lambda^d |hhat(lambda)|
    double c_l = 0.0;  // max lambda^(d+1) |hhat'(lambda)|
    int dim = 1;
    LambdaGrid grid;
};

[[nodiscard]] inline FilterCertificate certify_filter(std::span<const double> taps, int d, const LambdaGrid& grid) {
    grid.validate();
    if (d < 1) throw ConfigError("certify_filter requires d >= 1");
    FilterCertificate cert{0.0, 0.0, d, grid};
    for (std::size_t i = 0; i < grid.steps; ++i) {
        const double lam = grid.at(i);
        const double lam_d = std::pow(lam, d);
        cert.c_h = std::max(cert.c_h, lam_d * std::abs(freq_response(taps, lam)));
        cert.c_l = std::max(cert.c_l, lam_d * lam * std::abs(freq_response_deriv(taps, lam)));
    }
    return cert;
}

[[nodiscard]] inline FilterCertificate certify_filter(const FilterCoefficients& h, int d, const LambdaGrid& grid) {
    return certify_filter(h.taps(), d, grid);
}

}  // namespace manigap
