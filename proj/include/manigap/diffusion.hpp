#pragma once

#include "manigap/spectral.hpp"

#include <cmath>
#include <concepts>
#include <vector>

namespace manigap {

/// Something that applies exp(-k L) of a fixed graph to node signals.
template <class D>
concept Diffusion = requires(const D& d, const Matrix& x, int k) {
    { d.nodes() } -> std::convertible_to<Index>;
    { d.heat(x, k) } -> std::same_as<Matrix>;
    { d.stack(x, k) } -> std::same_as<std::vector<Matrix>>;
};

/// Exact diffusion through a full eigenbasis.
class SpectralDiffusion {
public:
    explicit SpectralDiffusion(SpectralBasis basis) : basis_(std::move(basis)) {
        if (!basis_.is_full()) throw ConfigError("SpectralDiffusion needs a full eigenbasis");
    }

    [[nodiscard]] static SpectralDiffusion from_graph(const GeometricGraph& g, Index dense_cap = 3000) {
        return SpectralDiffusion(eigendecompose(g.laplacian(), {DecompMode::Full, 0, dense_cap}));
    }

    [[nodiscard]] Index nodes() const noexcept { return basis_.nodes(); }
    [[nodiscard]] const SpectralBasis& basis() const noexcept { return basis_; }

    [[nodiscard]] Matrix heat(const Matrix& x, int k) const { return heat_apply(basis_, k, x); }

    /// out[k] = exp(-k L) x for k < count; out[0] is x itself.
    [[nodiscard]] std::vector<Matrix> stack(const Matrix& x, int count) const {
        if (x.rows() != nodes()) throw ConfigError("signal rows do not match graph size");
        std::vector<Matrix> out;
        out.reserve(static_cast<std::size_t>(std::max(count, 0)));
        if (count <= 0) return out;
        out.push_back(x);
        if (count == 1) return out;
        const Matrix coeffs = basis_.eigenvectors.transpose() * x;
        for (int k = 1; k < count; ++k) {
            const Vector decay = (-static_cast<double>(k) * basis_.eigenvalues.array()).exp();
            out.push_back(basis_.eigenvectors * (decay.asDiagonal() * coeffs));
        }
        return out;
    }

private:
    SpectralBasis basis_;
};

/// Matrix-free diffusion: Chebyshev expansion of exp(-t L) on [0, b], b = 2 max degree
/// (Gershgorin), with coefficients exp(-z) (2 - delta_j0) (-1)^j I_j(z), z = t b / 2.
class ChebyshevDiffusion {
public:
    explicit ChebyshevDiffusion(SparseMatrix laplacian, double tol = 1e-13)
        : l_(std::move(laplacian)), tol_(tol) {
        if (l_.rows() != l_.cols()) throw ConfigError("Laplacian must be square");
        for (Index r = 0; r < l_.rows(); ++r) {
            double s = 0.0;
            for (SparseMatrix::InnerIterator it(l_, r); it; ++it) s += std::abs(it.value());
            bound_ = std::max(bound_, s);
        }
    }

    [[nodiscard]] static ChebyshevDiffusion from_graph(const GeometricGraph& g) { return ChebyshevDiffusion(g.laplacian()); }

    [[nodiscard]] Index nodes() const noexcept { return l_.rows(); }
    [[nodiscard]] double bound() const noexcept { return bound_; }

    /// Expansion coefficients for exp(-t L), truncated once they fall below tol past the peak.
    [[nodiscard]] std::vector<double> coefficients(double t) const {
        const double z = 0.5 * t * bound_;
        std::vector<double> c;
        for (int j = 0; j < 100000; ++j) {
            const double v = std::exp(-z) * (j == 0 ? 1.0 : 2.0) * (j % 2 == 0 ? 1.0 : -1.0) *
                             std::cyl_bessel_i(static_cast<double>(j), z);
            c.push_back(v);
            if (j > z && std::abs(v) < tol_) return c;
        }
        throw Error("ChebyshevDiffusion: expansion did not converge");
    }

    [[nodiscard]] std::vector<Matrix> stack(const Matrix& x, int count) const {
        if (x.rows() != nodes()) throw ConfigError("signal rows do not match graph size");
        std::vector<Matrix> out;
        if (count <= 0) return out;
        out.push_back(x);
        if (count == 1) return out;
        if (bound_ == 0.0) {
            for (int k = 1; k < count; ++k) out.push_back(x);
            return out;
        }
        std::vector<std::vector<double>> coeffs;
        std::size_t terms = 0;
        for (int k = 1; k < count; ++k) {
            coeffs.push_back(coefficients(k));
            terms = std::max(terms, coeffs.back().size());
            out.push_back(Matrix::Zero(x.rows(), x.cols()));
        }
        // Shared recurrence T_{j+1} = 2 Lt T_j - T_{j-1} with Lt = (2/b) L - I.
        const double s = 2.0 / bound_;
        Matrix t_prev = x;
        Matrix t_cur = s * (l_ * x) - x;
        auto accumulate = [&](std::size_t j, const Matrix& t) {
            for (std::size_t k = 0; k < coeffs.size(); ++k)
                if (j < coeffs[k].size()) out[k + 1] += coeffs[k][j] * t;
        };
        accumulate(0, t_prev);
        if (terms > 1) accumulate(1, t_cur);
        for (std::size_t j = 2; j < terms; ++j) {
            Matrix t_next = 2.0 * (s * (l_ * t_cur) - t_cur) - t_prev;
            accumulate(j, t_next);
            t_prev = std::move(t_cur);
            t_cur = std::move(t_next);
        }
        return out;
    }

    [[nodiscard]] Matrix heat(const Matrix& x, int k) const {
        if (k < 0) throw ConfigError("heat requires k >= 0");
        if (k == 0) return x;
        return stack(x, k + 1).back();
    }

private:
    SparseMatrix l_;
    double tol_;
    double bound_ = 0.0;
};

static_assert(Diffusion<SpectralDiffusion>);
static_assert(Diffusion<ChebyshevDiffusion>);

}  // namespace manigap
