#pragma once

#include "manigap/manifold.hpp"

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace manigap {

enum class FieldKind {
    Gradient,  // x -> exp_x(a * sum_j w_j grad phi_j(x))
    Rotation,  // rigid motion by a: circle angle, sphere rotation about the z axis, torus shift along u
};

struct DeformationField {
    FieldKind kind = FieldKind::Gradient;
    std::vector<std::pair<std::size_t, double>> terms;  // (eigen-index, weight)
};

struct DeformationCertificate {
    double gamma_dist = 0.0;
    double gamma_jac = 0.0;

    [[nodiscard]] double max() const noexcept { return std::max(gamma_dist, gamma_jac); }
};

/// Mismatch map tau on a base manifold. Certified suprema are NaN until certification ran.
class DeformationMap {
public:
    DeformationMap(ManifoldModel base, DeformationField field, double amplitude)
        : base_(std::move(base)), field_(std::move(field)), amplitude_(amplitude) {
        if (!(amplitude_ >= 0.0) || !std::isfinite(amplitude_)) throw ConfigError("deformation amplitude must be >= 0");
        if (field_.kind == FieldKind::Gradient) {
            std::size_t top = 0;
            for (const auto& [i, w] : field_.terms) {
                if (i < 1) throw ConfigError("deformation field eigen-indices are 1-based");
                top = std::max(top, i);
            }
            if (top > 0) basis_ = eigenpairs(base_.with_tilt(0.0), top);
        }
    }

    [[nodiscard]] const ManifoldModel& base() const noexcept { return base_; }
    [[nodiscard]] const DeformationField& field() const noexcept { return field_; }
    [[nodiscard]] double amplitude() const noexcept { return amplitude_; }
    [[nodiscard]] double nominal_gamma() const noexcept { return nominal_; }
    [[nodiscard]] double certified_gamma_dist() const noexcept { return cert_.gamma_dist; }
    [[nodiscard]] double certified_gamma_jac() const noexcept { return cert_.gamma_jac; }
    [[nodiscard]] const DeformationCertificate& certificate() const noexcept { return cert_; }
    [[nodiscard]] bool certified() const noexcept { return certified_; }
    [[nodiscard]] bool is_identity() const noexcept { return amplitude_ == 0.0; }

    [[nodiscard]] DeformationMap with_certificate(const DeformationCertificate& cert, double nominal) const {
        DeformationMap out = *this;
        out.cert_ = cert;
        out.nominal_ = nominal;
        out.certified_ = true;
        return out;
    }

    /// Unscaled tangent field V(x); tau(x) = exp_x(a V(x)) for gradient fields.
    [[nodiscard]] Vector velocity(const Vector& x) const {
        Vector v = Vector::Zero(x.size());
        for (const auto& [i, w] : field_.terms) v += w * basis_[i - 1].gradient(x);
        return v;
    }

    [[nodiscard]] Vector operator()(const Vector& x) const {
        if (amplitude_ == 0.0) return x;
        switch (field_.kind) {
            case FieldKind::Gradient:
                return base_.exp_map(x, amplitude_ * velocity(x));
            case FieldKind::Rotation: {
                switch (base_.kind()) {
                    case ManifoldKind::Circle:
                    case ManifoldKind::Sphere: {
                        Vector y = x;
                        const double c = std::cos(amplitude_), s = std::sin(amplitude_);
                        y[0] = c * x[0] - s * x[1];
                        y[1] = s * x[0] + c * x[1];
                        return y;
                    }
                    case ManifoldKind::FlatTorus: {
                        Vector coords = base_.coords(x);
                        coords[0] += amplitude_;
                        return base_.embed(coords);
                    }
                }
            }
        }
        return x;
    }

    [[nodiscard]] PointCloud apply(const PointCloud& cloud) const {
        PointCloud out;
        out.points.resize(cloud.size(), cloud.ambient_dim());
        for (Index i = 0; i < cloud.size(); ++i) out.points.row(i) = (*this)(cloud.point(i)).transpose();
        out.source = cloud.source + ":deformed";
        return out;
    }

private:
    ManifoldModel base_;
    DeformationField field_;
    double amplitude_;
    std::vector<EigenPair> basis_;
    double nominal_ = std::numeric_limits<double>::quiet_NaN();
    DeformationCertificate cert_{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    bool certified_ = false;
};

[[nodiscard]] inline DeformationMap make_deformation(const ManifoldModel& m, DeformationField field, double amplitude) {
    return DeformationMap(m, std::move(field), amplitude);
}

namespace detail {

// Rotation taking unit vector a to unit vector b about their common normal (parallel transport along the
// great circle); identity when they coincide.
inline Eigen::Matrix3d minimal_rotation(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    const Eigen::Vector3d axis = a.cross(b);
    const double s = axis.norm();
    const double c = a.dot(b);
    if (s < 1e-15) return Eigen::Matrix3d::Identity();
    return Eigen::AngleAxisd(std::atan2(s, c), axis / s).toRotationMatrix();
}

// Frame at tau(x) aligned with the frame at x.
inline Matrix aligned_frame(const ManifoldModel& m, const Vector& x, const Vector& y, const Matrix& frame_x) {
    if (m.kind() != ManifoldKind::Sphere) return m.tangent_basis(y);
    const Eigen::Matrix3d r = minimal_rotation(x.head<3>().normalized(), y.head<3>().normalized());
    return r * frame_x;
}

}  // namespace detail

/// Suprema of dist(x, tau(x)) and ||J_x(tau) - I||_F over n_check points drawn from the base manifold.
[[nodiscard]] inline DeformationCertificate certify_deformation(const DeformationMap& tau, std::size_t n_check,
                                                                std::uint64_t seed) {
    if (n_check < 1) throw ConfigError("certify_deformation requires n_check >= 1");
    const ManifoldModel& m = tau.base();
    DeformationCertificate cert;
    if (tau.is_identity()) return cert;
    const double h = 1e-5 * m.length_scale();
    const PointCloud cloud = sample_points(m.with_tilt(0.0), n_check, seed);
    for (Index i = 0; i < cloud.size(); ++i) {
        const Vector x = cloud.point(i);
        const Vector y = tau(x);
        cert.gamma_dist = std::max(cert.gamma_dist, m.geodesic(x, y));
        const Matrix ex = m.tangent_basis(x);
        const Matrix ey = detail::aligned_frame(m, x, y, ex);
        Matrix jac(ex.cols(), ex.cols());
        for (Index j = 0; j < ex.cols(); ++j) {
            const Vector dy = (tau(m.exp_map(x, ex.col(j) * h)) - tau(m.exp_map(x, -ex.col(j) * h))) / (2.0 * h);
            jac.col(j) = ey.transpose() * dy;
        }
        cert.gamma_jac = std::max(cert.gamma_jac, (jac - Matrix::Identity(jac.rows(), jac.cols())).norm());
    }
    return cert;
}

/// Chooses the amplitude by bisection so both certified suprema stay within nominal_gamma.
[[nodiscard]] inline DeformationMap deform(const ManifoldModel& m, const DeformationField& field, double nominal_gamma,
                                           std::size_t n_check = 1000, std::uint64_t seed = 0) {
    if (!(nominal_gamma >= 0.0)) throw ConfigError("nominal gamma must be >= 0");
    if (nominal_gamma == 0.0) return make_deformation(m, field, 0.0).with_certificate({}, 0.0);
    auto measure = [&](double a) { return certify_deformation(make_deformation(m, field, a), n_check, seed); };
    double lo = 0.0;
    double hi = nominal_gamma;
    DeformationCertificate lo_cert;
    for (int i = 0;; ++i) {
        const DeformationCertificate c = measure(hi);
        if (c.max() > nominal_gamma) break;
        lo = hi;
        lo_cert = c;
        hi *= 2.0;
        if (i >= 40) throw Error("deform: certified size never reaches the budget (degenerate field)");
    }
    for (int i = 0; i < 50; ++i) {
        const double mid = 0.5 * (lo + hi);
        const DeformationCertificate c = measure(mid);
        if (c.max() <= nominal_gamma) {
            lo = mid;
            lo_cert = c;
        } else {
            hi = mid;
        }
    }
    if (lo == 0.0) throw Error("deform: bisection did not find a positive admissible amplitude");
    return make_deformation(m, field, lo).with_certificate(lo_cert, nominal_gamma);
}

/// f o tau.
template <class F>
[[nodiscard]] auto pushforward_signal(F f, const DeformationMap& tau) {
    if (!tau.certified()) throw Error("pushforward_signal requires a certified deformation");
    return [f = std::move(f), tau](const Vector& x) { return f(tau(x)); };
}

}  // namespace manigap
