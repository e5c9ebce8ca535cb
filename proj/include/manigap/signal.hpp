#pragma once

#include "manigap/filter.hpp"
#include "manigap/manifold.hpp"

#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

namespace manigap {

using ScalarField = std::function<double(const Vector&)>;

/// f = sum_i c_i phi_i with every nonzero c_i at an eigenvalue <= cutoff.
class BandlimitedSignal {
public:
    BandlimitedSignal(ManifoldModel m, std::map<std::size_t, double> coefficients, double cutoff)
        : manifold_(std::move(m)), coefficients_(std::move(coefficients)), cutoff_(cutoff) {
        std::size_t top = 0;
        for (const auto& [i, c] : coefficients_) {
            if (i < 1) throw ConfigError("eigen-indices are 1-based");
            if (!std::isfinite(c)) throw ConfigError("signal coefficients must be finite");
            top = std::max(top, i);
        }
        if (top == 0) return;
        basis_ = eigenpairs(manifold_.with_tilt(0.0), top);
        for (const auto& [i, c] : coefficients_) {
            if (c != 0.0 && basis_[i - 1].eigenvalue() > cutoff_)
                throw ConfigError("coefficient at index " + std::to_string(i) + " has eigenvalue " +
                                  std::to_string(basis_[i - 1].eigenvalue()) + " above cutoff " +
                                  std::to_string(cutoff_));
        }
    }

    [[nodiscard]] const ManifoldModel& manifold() const noexcept { return manifold_; }
    [[nodiscard]] const std::map<std::size_t, double>& coefficients() const noexcept { return coefficients_; }
    [[nodiscard]] double cutoff() const noexcept { return cutoff_; }
    [[nodiscard]] double eigenvalue(std::size_t i) const { return basis_.at(i - 1).eigenvalue(); }

    [[nodiscard]] double operator()(const Vector& x) const {
        double out = 0.0;
        for (const auto& [i, c] : coefficients_)
            if (c != 0.0) out += c * basis_[i - 1](x);
        return out;
    }

    [[nodiscard]] Vector gradient(const Vector& x) const {
        Vector g = Vector::Zero(manifold_.ambient_dim());
        for (const auto& [i, c] : coefficients_)
            if (c != 0.0) g += c * basis_[i - 1].gradient(x);
        return g;
    }

    [[nodiscard]] Vector evaluate(const Matrix& points) const {
        Vector out(points.rows());
        for (Index r = 0; r < points.rows(); ++r) out[r] = (*this)(points.row(r).transpose());
        return out;
    }

    /// Applies the spectral multiplier g(lambda_i) to each coefficient.
    [[nodiscard]] BandlimitedSignal filtered(const FilterCoefficients& g) const {
        std::map<std::size_t, double> c = coefficients_;
        for (auto& [i, v] : c) v *= freq_response(g, basis_[i - 1].eigenvalue());
        return BandlimitedSignal(manifold_, std::move(c), cutoff_);
    }

private:
    ManifoldModel manifold_;
    std::map<std::size_t, double> coefficients_;
    double cutoff_;
    std::vector<EigenPair> basis_;
};

[[nodiscard]] inline BandlimitedSignal synth_bandlimited(const ManifoldModel& m, std::map<std::size_t, double> coeffs,
                                                         double cutoff) {
    return BandlimitedSignal(m, std::move(coeffs), cutoff);
}

/// Monte-Carlo estimate with its standard error.
struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

/// <f, g>_M under the manifold measure, estimated from n samples of mu.
template <class F, class G>
[[nodiscard]] McEstimate mc_inner_product(const F& f, const G& g, const ManifoldModel& m, std::size_t n,
                                          std::uint64_t seed) {
    const PointCloud cloud = sample_points(m, n, seed);
    double sum = 0.0, sq = 0.0;
    for (Index i = 0; i < cloud.size(); ++i) {
        const Vector x = cloud.point(i);
        const double v = f(x) * g(x);
        sum += v;
        sq += v * v;
    }
    const double nd = static_cast<double>(n);
    const double mean = sum / nd;
    const double var = n > 1 ? std::max(0.0, (sq - nd * mean * mean) / (nd - 1.0)) : 0.0;
    return {mean, std::sqrt(var / nd)};
}

/// Monte-Carlo Gram matrix of the first `count` eigenfunctions plus per-entry standard errors.
struct McGram {
    Matrix gram;
    Matrix std_error;
};

[[nodiscard]] inline McGram mc_gram(const ManifoldModel& m, std::size_t count, std::size_t n, std::uint64_t seed) {
    const auto basis = eigenpairs(m, count);
    const PointCloud cloud = sample_points(m, n, seed);
    const Index c = static_cast<Index>(count);
    Matrix phi(cloud.size(), c);
    for (Index r = 0; r < cloud.size(); ++r) {
        const Vector x = cloud.point(r);
        for (Index j = 0; j < c; ++j) phi(r, j) = basis[static_cast<std::size_t>(j)](x);
    }
    const double nd = static_cast<double>(n);
    McGram out{phi.transpose() * phi / nd, Matrix::Zero(c, c)};
    for (Index i = 0; i < c; ++i) {
        for (Index j = 0; j < c; ++j) {
            const Vector prod = phi.col(i).cwiseProduct(phi.col(j));
            const double var = (prod.array() - out.gram(i, j)).square().sum() / (nd - 1.0);
            out.std_error(i, j) = std::sqrt(var / nd);
        }
    }
    return out;
}

/// Monte-Carlo spectral coefficients <f, phi_i> for i = 1..count.
template <class F>
[[nodiscard]] std::vector<McEstimate> mc_project(const F& f, const ManifoldModel& m, std::size_t count,
                                                 std::size_t n, std::uint64_t seed) {
    const auto basis = eigenpairs(m, count);
    std::vector<McEstimate> out;
    out.reserve(count);
    for (const auto& phi : basis) out.push_back(mc_inner_product(f, phi, m, n, seed));
    return out;
}

/// Raised when a sampled Lipschitz ratio exceeds the requested constant.
class CertificationError : public Error {
public:
    CertificationError(const std::string& what, Vector a, Vector b, double ratio)
        : Error(what), a_(std::move(a)), b_(std::move(b)), ratio_(ratio) {}
    [[nodiscard]] const Vector& first() const noexcept { return a_; }
    [[nodiscard]] const Vector& second() const noexcept { return b_; }
    [[nodiscard]] double ratio() const noexcept { return ratio_; }

private:
    Vector a_;
    Vector b_;
    double ratio_;
};

struct TeacherSpec {
    std::map<std::size_t, double> coefficients;  // input signal f
    double cutoff = 1e300;
    FilterCoefficients filter;                   // g = ghat(L) f
    std::optional<double> threshold;             // labels: g(x) > threshold
    std::size_t n_pairs = 4000;
    std::uint64_t seed = 0;
};

/// Teacher target g = ghat(L) f with an empirically certified Lipschitz constant.
class LipschitzTarget {
public:
    LipschitzTarget(BandlimitedSignal g, double c_g, double certified, std::optional<double> threshold)
        : g_(std::move(g)), c_g_(c_g), certified_(certified), threshold_(threshold) {}

    [[nodiscard]] double operator()(const Vector& x) const { return g_(x); }
    [[nodiscard]] Vector gradient(const Vector& x) const { return g_.gradient(x); }
    [[nodiscard]] double label(const Vector& x) const {
        if (!threshold_) throw ConfigError("target has no label threshold");
        return g_(x) > *threshold_ ? 1.0 : 0.0;
    }
    [[nodiscard]] const BandlimitedSignal& signal() const noexcept { return g_; }
    [[nodiscard]] double c_g() const noexcept { return c_g_; }
    [[nodiscard]] double certified_constant() const noexcept { return certified_; }
    [[nodiscard]] const std::optional<double>& threshold() const noexcept { return threshold_; }

private:
    BandlimitedSignal g_;
    double c_g_;
    double certified_;
    std::optional<double> threshold_;
};

/// Largest Lipschitz ratio seen over random far pairs, random near pairs and gradient norms.
template <class G>
[[nodiscard]] double empirical_lipschitz(const G& g, const ManifoldModel& m, std::size_t n_pairs, std::uint64_t seed,
                                         Vector* worst_a = nullptr, Vector* worst_b = nullptr) {
    Rng rng(seed);
    std::normal_distribution<double> normal;
    double best = 0.0;
    auto consider = [&](const Vector& a, const Vector& b) {
        const double dist = m.geodesic(a, b);
        if (dist <= 1e-12) return;
        const double r = std::abs(g(a) - g(b)) / dist;
        if (r > best) {
            best = r;
            if (worst_a) *worst_a = a;
            if (worst_b) *worst_b = b;
        }
    };
    const double near = 1e-3 * m.length_scale();
    for (std::size_t p = 0; p < n_pairs; ++p) {
        const Vector a = sample_uniform_point(m, rng);
        consider(a, sample_uniform_point(m, rng));
        const Matrix t = m.tangent_basis(a);
        Vector dir = Vector::Zero(t.cols());
        for (Index j = 0; j < dir.size(); ++j) dir[j] = normal(rng);
        dir.normalize();
        consider(a, m.exp_map(a, t * dir * near));
    }
    return best;
}

[[nodiscard]] inline LipschitzTarget lipschitz_target(const ManifoldModel& m, double c_g, const TeacherSpec& spec) {
    if (!(c_g > 0.0)) throw ConfigError("lipschitz_target requires c_g > 0");
    const BandlimitedSignal g = BandlimitedSignal(m, spec.coefficients, spec.cutoff).filtered(spec.filter);
    Vector wa, wb;
    double ratio = empirical_lipschitz(g, m, spec.n_pairs, spec.seed, &wa, &wb);
    Rng rng(derive_seed(spec.seed, "gradient"));
    for (std::size_t p = 0; p < spec.n_pairs; ++p) {
        const Vector x = sample_uniform_point(m, rng);
        const double gn = g.gradient(x).norm();
        if (gn > ratio) {
            ratio = gn;
            wa = x;
            wb = x;
        }
    }
    if (ratio > c_g) {
        std::ostringstream msg;
        msg << "target Lipschitz ratio " << ratio << " exceeds c_g = " << c_g << " at pair (" << wa.transpose()
            << ") / (" << wb.transpose() << ")";
        throw CertificationError(msg.str(), wa, wb, ratio);
    }
    return LipschitzTarget(g, c_g, ratio, spec.threshold);
}

}  // namespace manigap
