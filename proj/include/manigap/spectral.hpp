#pragma once

#include "manigap/core.hpp"
#include "manigap/filter.hpp"
#include "manigap/geograph.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <vector>

namespace manigap {

/// Ascending eigenvalues with orthonormal eigenvector columns (n x n, n x m, or empty when only
/// eigenvalues were requested).
struct SpectralBasis {
    Vector eigenvalues;
    Matrix eigenvectors;

    [[nodiscard]] Index size() const noexcept { return eigenvalues.size(); }
    [[nodiscard]] Index nodes() const noexcept { return eigenvectors.rows(); }
    [[nodiscard]] bool has_vectors() const noexcept { return eigenvectors.cols() > 0; }
    [[nodiscard]] bool is_full() const noexcept { return has_vectors() && eigenvectors.cols() == eigenvectors.rows(); }
};

enum class DecompMode { Full, Lowest, ValuesOnly };

struct EigenOptions {
    DecompMode mode = DecompMode::Full;
    Index count = 0;        // m for Lowest mode; 0 keeps everything in ValuesOnly mode
    Index dense_cap = 3000;
    double tol = 1e-10;     // relative residual for the iterative lowest-m path
    int max_iter = 2000;
};

namespace detail {

inline void fix_signs(Matrix& v) {
    for (Index c = 0; c < v.cols(); ++c) {
        Index arg = 0;
        v.col(c).cwiseAbs().maxCoeff(&arg);
        if (v(arg, c) < 0.0) v.col(c) *= -1.0;
    }
}

inline void check_square(Index rows, Index cols) {
    if (rows != cols) throw ConfigError("eigendecompose requires a square matrix");
}

// Chebyshev-filtered subspace iteration for the lowest m eigenpairs of a sparse PSD matrix.
inline SpectralBasis lowest_iterative(const SparseMatrix& l, Index m, const EigenOptions& opt) {
    const Index n = l.rows();
    const Index p = std::min(n, m + std::max<Index>(10, m / 2));
    double upper = 0.0;
    for (Index r = 0; r < n; ++r) {
        double s = 0.0;
        for (SparseMatrix::InnerIterator it(l, r); it; ++it) s += std::abs(it.value());
        upper = std::max(upper, s);
    }
    if (upper == 0.0) {
        SpectralBasis b;
        b.eigenvalues = Vector::Zero(m);
        b.eigenvectors = Matrix::Identity(n, m);
        return b;
    }
    Rng rng(0x5eedULL);
    std::normal_distribution<double> normal;
    Matrix x(n, p);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    x = Eigen::HouseholderQR<Matrix>(x).householderQ() * Matrix::Identity(n, p);

    const int degree = 12;
    Vector theta;
    for (int iter = 0; iter < opt.max_iter; ++iter) {
        const Matrix lx = l * x;
        const Matrix h = x.transpose() * lx;
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (h + h.transpose()));
        theta = es.eigenvalues();
        x = x * es.eigenvectors();
        const Matrix lxr = lx * es.eigenvectors();
        double worst = 0.0;
        for (Index i = 0; i < m; ++i) worst = std::max(worst, (lxr.col(i) - theta[i] * x.col(i)).norm());
        if (worst <= opt.tol * upper) {
            SpectralBasis b;
            b.eigenvalues = theta.head(m);
            b.eigenvectors = x.leftCols(m);
            return b;
        }
        // Damp [cut, upper] with a Chebyshev polynomial, amplifying the wanted low end.
        const double cut = theta[p - 1];
        const double e = 0.5 * (upper - cut), c = 0.5 * (upper + cut);
        Matrix y0 = x;
        Matrix y1 = (l * x - c * x) / e;
        for (int j = 2; j <= degree; ++j) {
            Matrix y2 = 2.0 * (l * y1 - c * y1) / e - y0;
            y0 = std::move(y1);
            y1 = std::move(y2);
        }
        x = Eigen::HouseholderQR<Matrix>(y1).householderQ() * Matrix::Identity(n, p);
    }
    throw Error("eigendecompose: lowest-m subspace iteration did not converge");
}

}  // namespace detail

/// Dense self-adjoint decomposition for n <= dense_cap; lowest-m mode truncates it, or falls back
/// to subspace iteration past the cap.
[[nodiscard]] inline SpectralBasis eigendecompose(const Matrix& l, const EigenOptions& opt = {}) {
    detail::check_square(l.rows(), l.cols());
    const Index n = l.rows();
    if (opt.mode == DecompMode::Lowest && (opt.count < 1 || opt.count > n))
        throw ConfigError("lowest-m mode requires 1 <= m <= n");
    if (n > opt.dense_cap) {
        if (opt.mode == DecompMode::Lowest) return detail::lowest_iterative(l.sparseView().cast<double>(), opt.count, opt);
        throw ConfigError("eigendecompose: n = " + std::to_string(n) + " exceeds the dense cap of " +
                          std::to_string(opt.dense_cap) + "; use the truncated lowest-m mode");
    }
    SpectralBasis b;
    if (n == 0) return b;
    const Matrix sym = 0.5 * (l + l.transpose());
    if (opt.mode == DecompMode::ValuesOnly) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw Error("eigendecompose: dense solver failed");
        b.eigenvalues = opt.count > 0 ? Vector(es.eigenvalues().head(std::min(opt.count, n))) : es.eigenvalues();
        return b;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) throw Error("eigendecompose: dense solver failed");
    b.eigenvalues = es.eigenvalues();
    b.eigenvectors = es.eigenvectors();
    if (opt.mode == DecompMode::Lowest) {
        b.eigenvalues = Vector(b.eigenvalues.head(opt.count));
        b.eigenvectors = Matrix(b.eigenvectors.leftCols(opt.count));
    }
    detail::fix_signs(b.eigenvectors);
    return b;
}

[[nodiscard]] inline SpectralBasis eigendecompose(const SparseMatrix& l, const EigenOptions& opt = {}) {
    detail::check_square(l.rows(), l.cols());
    if (l.rows() > opt.dense_cap && opt.mode == DecompMode::Lowest) {
        if (opt.count < 1 || opt.count > l.rows()) throw ConfigError("lowest-m mode requires 1 <= m <= n");
        SpectralBasis b = detail::lowest_iterative(l, opt.count, opt);
        detail::fix_signs(b.eigenvectors);
        return b;
    }
    if (l.rows() > opt.dense_cap)
        throw ConfigError("eigendecompose: n = " + std::to_string(l.rows()) + " exceeds the dense cap of " +
                          std::to_string(opt.dense_cap) + "; use the truncated lowest-m mode");
    return eigendecompose(Matrix(l), opt);
}

[[nodiscard]] inline Vector graph_eigenvalues(const GeometricGraph& g, Index count = 0) {
    const EigenOptions opt;
    if (count > 0 && g.laplacian().rows() > opt.dense_cap)
        return eigendecompose(g.laplacian(), {DecompMode::Lowest, count}).eigenvalues;
    return eigendecompose(g.laplacian(), {DecompMode::ValuesOnly, count}).eigenvalues;
}

namespace detail {
inline void check_basis_signal(const SpectralBasis& basis, const Matrix& x) {
    if (!basis.has_vectors()) throw ConfigError("basis has no eigenvectors");
    if (x.rows() != basis.nodes()) throw ConfigError("signal rows do not match basis size");
}
}  // namespace detail

/// V exp(-k Lambda) V^T x.
[[nodiscard]] inline Matrix heat_apply(const SpectralBasis& basis, double k, const Matrix& x) {
    detail::check_basis_signal(basis, x);
    if (k < 0.0) throw ConfigError("heat_apply requires k >= 0");
    if (k == 0.0 && basis.is_full()) return x;
    const Vector decay = (-k * basis.eigenvalues.array()).exp();
    return basis.eigenvectors * (decay.asDiagonal() * (basis.eigenvectors.transpose() * x));
}

/// V hhat(Lambda) V^T x: the spectral form of sum_k h_k exp(-k L) x.
[[nodiscard]] inline Matrix spectral_filter_apply(const SpectralBasis& basis, const FilterCoefficients& h,
                                                  const Matrix& x) {
    detail::check_basis_signal(basis, x);
    Vector response(basis.size());
    for (Index i = 0; i < basis.size(); ++i) response[i] = freq_response(h.taps(), basis.eigenvalues[i]);
    return basis.eigenvectors * (response.asDiagonal() * (basis.eigenvectors.transpose() * x));
}

/// exp(-k L) x by scaling and squaring of a truncated Taylor series, independent of any eigensolver.
[[nodiscard]] inline Matrix matexp_oracle(const Matrix& l, const Matrix& x, double k, double tol,
                                          int max_terms = 200) {
    if (!(tol > 0.0)) throw ConfigError("matexp_oracle requires tol > 0");
    if (l.rows() != l.cols() || l.rows() != x.rows()) throw ConfigError("matexp_oracle: dimension mismatch");
    if (k == 0.0) return x;
    const Matrix a = -k * l;
    const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
    int s = 0;
    while (norm / std::ldexp(1.0, s) > 0.5) ++s;
    const Matrix as = a / std::ldexp(1.0, s);
    const double term_tol = tol / std::ldexp(1.0, s);
    Matrix sum = Matrix::Identity(l.rows(), l.cols());
    Matrix term = sum;
    bool converged = false;
    for (int j = 1; j <= max_terms; ++j) {
        term = term * as / static_cast<double>(j);
        sum += term;
        if (term.cwiseAbs().colwise().sum().maxCoeff() <= term_tol) {
            converged = true;
            break;
        }
    }
    if (!converged) throw Error("matexp_oracle: Taylor series did not converge within the term cap");
    for (int i = 0; i < s; ++i) sum = sum * sum;
    return sum * x;
}

[[nodiscard]] inline Matrix matexp_oracle(const SparseMatrix& l, const Matrix& x, double k, double tol,
                                          int max_terms = 200) {
    return matexp_oracle(Matrix(l), x, k, tol, max_terms);
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

[[nodiscard]] inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("fit_line needs at least two paired points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw ConfigError("fit_line: abscissae are all equal");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return f;
}

/// Least-squares line through (log i, log lambda_i) for i in [i_lo, i_hi] (1-based).
using WeylFit = LineFit;

[[nodiscard]] inline WeylFit weyl_check(const Vector& eigenvalues, int d, Index i_lo, Index i_hi) {
    if (d < 1) throw ConfigError("weyl_check requires d >= 1");
    if (i_lo < 1 || i_hi > eigenvalues.size() || i_hi <= i_lo) throw ConfigError("weyl_check: index range outside basis");
    std::vector<double> lx, ly;
    for (Index i = i_lo; i <= i_hi; ++i) {
        const double lam = eigenvalues[i - 1];
        if (!(lam > 0.0)) throw ConfigError("weyl_check: nonpositive eigenvalue at index " + std::to_string(i));
        lx.push_back(std::log(static_cast<double>(i)));
        ly.push_back(std::log(lam));
    }
    const LineFit f = fit_line(lx, ly);
    return f;
}

[[nodiscard]] inline WeylFit weyl_check(const SpectralBasis& basis, int d, Index i_lo, Index i_hi) {
    return weyl_check(basis.eigenvalues, d, i_lo, i_hi);
}

struct PerturbationReport {
    std::vector<double> abs_diff;  // |lambda_i - lambda'_i|
    std::vector<double> ratio;     // abs_diff / (gamma |lambda_i| + gamma)
    double median_abs_diff = 0.0;
    double median_ratio = 0.0;
    double max_ratio = 0.0;
};

[[nodiscard]] inline double median(std::vector<double> v) {
    if (v.empty()) throw ConfigError("median of an empty list");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

[[nodiscard]] inline PerturbationReport eigen_perturbation_check(const Vector& base, const Vector& pert, double gamma,
                                                                 Index m) {
    if (!(gamma > 0.0)) throw ConfigError("eigen_perturbation_check requires gamma > 0");
    if (m < 1 || base.size() < m || pert.size() < m) throw ConfigError("eigen_perturbation_check: bases too small");
    PerturbationReport r;
    for (Index i = 0; i < m; ++i) {
        const double diff = std::abs(base[i] - pert[i]);
        r.abs_diff.push_back(diff);
        r.ratio.push_back(diff / (gamma * std::abs(base[i]) + gamma));
    }
    r.median_abs_diff = median(r.abs_diff);
    r.median_ratio = median(r.ratio);
    r.max_ratio = *std::max_element(r.ratio.begin(), r.ratio.end());
    return r;
}

[[nodiscard]] inline PerturbationReport eigen_perturbation_check(const SpectralBasis& base, const SpectralBasis& pert,
                                                                 double gamma, Index m) {
    return eigen_perturbation_check(base.eigenvalues, pert.eigenvalues, gamma, m);
}

/// max_{i <= m} |lambda_{1,i} - lambda_{2,i}|; a lower-bound proxy for the operator distance.
[[nodiscard]] inline double spectral_distance(const Vector& a, const Vector& b, Index m) {
    if (m < 1 || a.size() < m || b.size() < m) throw ConfigError("spectral_distance: m exceeds a basis size");
    return (a.head(m) - b.head(m)).cwiseAbs().maxCoeff();
}

[[nodiscard]] inline double spectral_distance(const SpectralBasis& a, const SpectralBasis& b, Index m) {
    return spectral_distance(a.eigenvalues, b.eigenvalues, m);
}

}  // namespace manigap
