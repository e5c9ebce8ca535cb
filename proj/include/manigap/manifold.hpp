#pragma once

#include "manigap/core.hpp"
#include "manigap/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace manigap {

enum class ManifoldKind { Circle, Sphere, FlatTorus };

[[nodiscard]] inline std::string_view to_string(ManifoldKind k) {
    switch (k) {
        case ManifoldKind::Circle: return "circle";
        case ManifoldKind::Sphere: return "sphere";
        case ManifoldKind::FlatTorus: return "flat_torus";
    }
    return "unknown";
}

/// Analytic manifold with a density of the form rho(x) = (1 + tilt * t(x)) / vol, where t is
/// the first embedded coordinate for the circle and torus and the height for the sphere.
///
/// Intrinsic coordinates: circle theta; sphere (polar, azimuth); flat torus arc-length (u, v).
/// The flat torus with sides (Lu, Lv) is embedded isometrically in R^4 as two circles of
/// radii Lu/2pi and Lv/2pi.
class ManifoldModel {
public:
    [[nodiscard]] static ManifoldModel circle(double radius = 1.0, double tilt = 0.0) {
        return ManifoldModel(ManifoldKind::Circle, radius, radius, tilt);
    }
    [[nodiscard]] static ManifoldModel sphere(double radius = 1.0, double tilt = 0.0) {
        return ManifoldModel(ManifoldKind::Sphere, radius, radius, tilt);
    }
    [[nodiscard]] static ManifoldModel flat_torus(double side_u = 2.0 * kPi, double side_v = 2.0 * kPi,
                                                  double tilt = 0.0) {
        return ManifoldModel(ManifoldKind::FlatTorus, side_u, side_v, tilt);
    }

    [[nodiscard]] ManifoldKind kind() const noexcept { return kind_; }
    [[nodiscard]] int intrinsic_dim() const noexcept { return kind_ == ManifoldKind::Circle ? 1 : 2; }
    [[nodiscard]] int ambient_dim() const noexcept {
        switch (kind_) {
            case ManifoldKind::Circle: return 2;
            case ManifoldKind::Sphere: return 3;
            case ManifoldKind::FlatTorus: return 4;
        }
        return 0;
    }

    /// Circle/sphere radius.
    [[nodiscard]] double radius() const noexcept { return a_; }
    [[nodiscard]] double side_u() const noexcept { return a_; }
    [[nodiscard]] double side_v() const noexcept { return b_; }
    [[nodiscard]] double radius_u() const noexcept { return a_ / (2.0 * kPi); }
    [[nodiscard]] double radius_v() const noexcept { return b_ / (2.0 * kPi); }
    [[nodiscard]] double tilt() const noexcept { return tilt_; }
    [[nodiscard]] bool is_uniform() const noexcept { return tilt_ == 0.0; }
    [[nodiscard]] ManifoldModel with_tilt(double tilt) const { return ManifoldModel(kind_, a_, b_, tilt); }
    /// Length scale used for finite-difference steps.
    [[nodiscard]] double length_scale() const noexcept {
        return kind_ == ManifoldKind::FlatTorus ? std::min(radius_u(), radius_v()) : a_;
    }

    [[nodiscard]] double volume() const noexcept {
        switch (kind_) {
            case ManifoldKind::Circle: return 2.0 * kPi * a_;
            case ManifoldKind::Sphere: return 4.0 * kPi * a_ * a_;
            case ManifoldKind::FlatTorus: return a_ * b_;
        }
        return 0.0;
    }

    [[nodiscard]] double tilt_profile(const Vector& x) const {
        switch (kind_) {
            case ManifoldKind::Circle: return x[0] / x.head<2>().norm();
            case ManifoldKind::Sphere: return x[2] / x.norm();
            case ManifoldKind::FlatTorus: return x[0] / x.head<2>().norm();
        }
        return 0.0;
    }

    [[nodiscard]] double density(const Vector& x) const { return (1.0 + tilt_ * tilt_profile(x)) / volume(); }
    [[nodiscard]] double rho_min() const noexcept { return (1.0 - std::abs(tilt_)) / volume(); }
    [[nodiscard]] double rho_max() const noexcept { return (1.0 + std::abs(tilt_)) / volume(); }

    [[nodiscard]] Vector embed(const Vector& c) const {
        Vector x(ambient_dim());
        switch (kind_) {
            case ManifoldKind::Circle:
                x << a_ * std::cos(c[0]), a_ * std::sin(c[0]);
                break;
            case ManifoldKind::Sphere:
                x << a_ * std::sin(c[0]) * std::cos(c[1]), a_ * std::sin(c[0]) * std::sin(c[1]), a_ * std::cos(c[0]);
                break;
            case ManifoldKind::FlatTorus: {
                const double ru = radius_u(), rv = radius_v();
                x << ru * std::cos(c[0] / ru), ru * std::sin(c[0] / ru), rv * std::cos(c[1] / rv),
                    rv * std::sin(c[1] / rv);
                break;
            }
        }
        return x;
    }

    [[nodiscard]] Vector coords(const Vector& x) const {
        Vector c(intrinsic_dim());
        switch (kind_) {
            case ManifoldKind::Circle:
                c << wrap_angle(std::atan2(x[1], x[0]));
                break;
            case ManifoldKind::Sphere:
                c << std::acos(std::clamp(x[2] / x.norm(), -1.0, 1.0)), wrap_angle(std::atan2(x[1], x[0]));
                break;
            case ManifoldKind::FlatTorus:
                c << radius_u() * wrap_angle(std::atan2(x[1], x[0])), radius_v() * wrap_angle(std::atan2(x[3], x[2]));
                break;
        }
        return c;
    }

    /// Nearest point on the manifold (radial projection per circle factor).
    [[nodiscard]] Vector project(const Vector& x) const {
        if (x.size() != ambient_dim()) throw ConfigError("project: point has wrong ambient dimension");
        Vector p = x;
        auto normalize_block = [](auto block, double r) {
            const double n = block.norm();
            if (n == 0.0) {
                block.setZero();
                block[0] = r;
            } else {
                block *= r / n;
            }
        };
        switch (kind_) {
            case ManifoldKind::Circle:
            case ManifoldKind::Sphere:
                normalize_block(p.head(ambient_dim()), a_);
                break;
            case ManifoldKind::FlatTorus:
                normalize_block(p.head<2>(), radius_u());
                normalize_block(p.tail<2>(), radius_v());
                break;
        }
        return p;
    }

    /// Orthonormal tangent frame at x, one column per intrinsic direction.
    [[nodiscard]] Matrix tangent_basis(const Vector& x) const {
        Matrix t = Matrix::Zero(ambient_dim(), intrinsic_dim());
        switch (kind_) {
            case ManifoldKind::Circle: {
                const Eigen::Vector2d p = x.head<2>().normalized();
                t.col(0) << -p[1], p[0];
                break;
            }
            case ManifoldKind::Sphere: {
                const Eigen::Vector3d n = x.head<3>().normalized();
                Eigen::Index axis = 0;
                n.cwiseAbs().minCoeff(&axis);
                Eigen::Vector3d e1 = Eigen::Vector3d::Unit(axis);
                e1 = (e1 - e1.dot(n) * n).normalized();
                const Eigen::Vector3d e2 = n.cross(e1);
                t.col(0) = e1;
                t.col(1) = e2;
                break;
            }
            case ManifoldKind::FlatTorus: {
                const Eigen::Vector2d p = x.head<2>().normalized();
                const Eigen::Vector2d q = x.tail<2>().normalized();
                t(0, 0) = -p[1];
                t(1, 0) = p[0];
                t(2, 1) = -q[1];
                t(3, 1) = q[0];
                break;
            }
        }
        return t;
    }

    /// Endpoint of the geodesic leaving x with ambient tangent velocity v (unit time).
    [[nodiscard]] Vector exp_map(const Vector& x, const Vector& v) const {
        switch (kind_) {
            case ManifoldKind::Circle: {
                const Vector t = tangent_basis(x).col(0);
                const double theta = std::atan2(x[1], x[0]) + t.dot(v) / a_;
                Vector out(2);
                out << a_ * std::cos(theta), a_ * std::sin(theta);
                return out;
            }
            case ManifoldKind::Sphere: {
                const Vector p = project(x);
                const Vector n = p / a_;
                const Vector vt = v - v.dot(n) * n;
                const double speed = vt.norm();
                if (speed == 0.0) return p;
                const double angle = speed / a_;
                return project(p * std::cos(angle) + vt * (a_ * std::sin(angle) / speed));
            }
            case ManifoldKind::FlatTorus: {
                const Matrix t = tangent_basis(x);
                Vector c = coords(x);
                c[0] += t.col(0).dot(v);
                c[1] += t.col(1).dot(v);
                return embed(c);
            }
        }
        return x;
    }

    /// Intrinsic (arc-length / great-circle / quotient) distance.
    [[nodiscard]] double geodesic(const Vector& x, const Vector& y) const {
        switch (kind_) {
            case ManifoldKind::Circle:
                return a_ * std::abs(periodic_delta(std::atan2(x[1], x[0]), std::atan2(y[1], y[0]), 2.0 * kPi));
            case ManifoldKind::Sphere: {
                const Eigen::Vector3d p = x.head<3>(), q = y.head<3>();
                return a_ * std::atan2(p.cross(q).norm(), p.dot(q));
            }
            case ManifoldKind::FlatTorus: {
                const Vector cx = coords(x), cy = coords(y);
                const double du = periodic_delta(cx[0], cy[0], a_);
                const double dv = periodic_delta(cx[1], cy[1], b_);
                return std::hypot(du, dv);
            }
        }
        return 0.0;
    }

    [[nodiscard]] std::string describe() const {
        std::string s(to_string(kind_));
        if (kind_ == ManifoldKind::FlatTorus)
            s += "(" + std::to_string(a_) + "x" + std::to_string(b_) + ")";
        else
            s += "(r=" + std::to_string(a_) + ")";
        if (tilt_ != 0.0) s += "[tilt=" + std::to_string(tilt_) + "]";
        return s;
    }

    friend bool operator==(const ManifoldModel& p, const ManifoldModel& q) {
        return std::tie(p.kind_, p.a_, p.b_, p.tilt_) == std::tie(q.kind_, q.a_, q.b_, q.tilt_);
    }

private:
    ManifoldModel(ManifoldKind kind, double a, double b, double tilt) : kind_(kind), a_(a), b_(b), tilt_(tilt) {
        if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
            throw ConfigError("manifold size parameters must be positive and finite");
        if (!(std::abs(tilt) < 1.0)) throw ConfigError("density tilt must satisfy |tilt| < 1");
    }

    ManifoldKind kind_;
    double a_;
    double b_;
    double tilt_;
};

/// Draws a point from the normalized volume measure (no tilt).
[[nodiscard]] inline Vector sample_uniform_point(const ManifoldModel& m, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector c(m.intrinsic_dim());
    switch (m.kind()) {
        case ManifoldKind::Circle:
            c << 2.0 * kPi * unit(rng);
            break;
        case ManifoldKind::Sphere: {
            const double z = 2.0 * unit(rng) - 1.0;
            const double phi = 2.0 * kPi * unit(rng);
            c << std::acos(z), phi;
            break;
        }
        case ManifoldKind::FlatTorus: {
            const double u = m.side_u() * unit(rng);
            const double v = m.side_v() * unit(rng);
            c << u, v;
            break;
        }
    }
    return m.embed(c);
}

/// Draws a point distributed per the manifold density; rejection sampling for tilted densities.
[[nodiscard]] inline Vector sample_point(const ManifoldModel& m, Rng& rng) {
    if (m.is_uniform()) return sample_uniform_point(m, rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double bound = 1.0 + std::abs(m.tilt());
    for (;;) {
        Vector x = sample_uniform_point(m, rng);
        if (unit(rng) * bound <= 1.0 + m.tilt() * m.tilt_profile(x)) return x;
    }
}

/// n i.i.d. points from mu; deterministic in (m, n, seed).
[[nodiscard]] inline PointCloud sample_points(const ManifoldModel& m, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("sample_points requires n >= 1");
    Rng rng(seed);
    PointCloud cloud;
    cloud.points.resize(static_cast<Index>(n), m.ambient_dim());
    for (Index i = 0; i < cloud.size(); ++i) cloud.points.row(i) = sample_point(m, rng).transpose();
    cloud.source = "sampled:" + m.describe() + ":seed=" + std::to_string(seed);
    return cloud;
}

/// Closed-form mode label: circle (k, trig); sphere (l, m); torus (a, b, trig). trig 0 = cos, 1 = sin.
struct EigenMode {
    int a = 0;
    int b = 0;
    int trig = 0;
};

namespace detail {

struct TorusMode {
    double lb;
    EigenMode mode;
};

inline std::vector<TorusMode> torus_modes(double ru, double rv, std::size_t count) {
    for (int bound = 4;; bound *= 2) {
        std::vector<TorusMode> modes;
        for (int a = 0; a <= bound; ++a) {
            for (int b = -bound; b <= bound; ++b) {
                if (a == 0 && b < 0) continue;
                const double lb = (a / ru) * (a / ru) + (b / rv) * (b / rv);
                if (a == 0 && b == 0) {
                    modes.push_back({0.0, {0, 0, 0}});
                    continue;
                }
                modes.push_back({lb, {a, b, 0}});
                modes.push_back({lb, {a, b, 1}});
            }
        }
        // Every mode below this eigenvalue lies inside the enumeration box.
        const double safe = std::pow((bound + 1) / std::max(ru, rv), 2);
        std::stable_sort(modes.begin(), modes.end(), [](const TorusMode& p, const TorusMode& q) {
            return std::tie(p.lb, p.mode.a, p.mode.b, p.mode.trig) < std::tie(q.lb, q.mode.a, q.mode.b, q.mode.trig);
        });
        std::size_t usable = 0;
        while (usable < modes.size() && modes[usable].lb < safe) ++usable;
        if (usable >= count) {
            modes.resize(count);
            return modes;
        }
    }
}

}  // namespace detail

/// One eigenpair of the weighted Laplacian under uniform density, with eigenfunctions
/// orthonormal in L2(mu) (mu the probability measure).
class EigenPair {
public:
    EigenPair(ManifoldModel m, std::size_t index, EigenMode mode, double lb_eigenvalue)
        : manifold_(std::move(m)), index_(index), mode_(mode), lb_(lb_eigenvalue) {}

    [[nodiscard]] std::size_t index() const noexcept { return index_; }
    [[nodiscard]] const EigenMode& mode() const noexcept { return mode_; }
    /// Classical Laplace-Beltrami eigenvalue.
    [[nodiscard]] double lb_eigenvalue() const noexcept { return lb_; }
    /// Eigenvalue of -(1/2rho) div(rho^2 grad) with constant rho = 1/vol, i.e. (rho/2) * lb.
    [[nodiscard]] double eigenvalue() const noexcept { return 0.5 / manifold_.volume() * lb_; }
    [[nodiscard]] const ManifoldModel& manifold() const noexcept { return manifold_; }

    [[nodiscard]] double operator()(const Vector& x) const {
        switch (manifold_.kind()) {
            case ManifoldKind::Circle: {
                if (mode_.a == 0) return 1.0;
                const double phase = mode_.a * std::atan2(x[1], x[0]);
                return std::sqrt(2.0) * (mode_.trig == 0 ? std::cos(phase) : std::sin(phase));
            }
            case ManifoldKind::Sphere: {
                const double polar = std::acos(std::clamp(x[2] / x.norm(), -1.0, 1.0));
                const double azimuth = std::atan2(x[1], x[0]);
                const unsigned l = static_cast<unsigned>(mode_.a);
                const unsigned am = static_cast<unsigned>(std::abs(mode_.b));
                const double norm = std::sqrt(4.0 * kPi);
                if (mode_.b == 0) return norm * std::sph_legendre(l, 0, polar);
                const double base = norm * std::sqrt(2.0) * std::sph_legendre(l, am, polar);
                return mode_.b > 0 ? base * std::cos(am * azimuth) : base * std::sin(am * azimuth);
            }
            case ManifoldKind::FlatTorus: {
                if (mode_.a == 0 && mode_.b == 0) return 1.0;
                const double phase = torus_phase(x);
                return std::sqrt(2.0) * (mode_.trig == 0 ? std::cos(phase) : std::sin(phase));
            }
        }
        return 0.0;
    }

    /// Riemannian gradient as an ambient tangent vector.
    [[nodiscard]] Vector gradient(const Vector& x) const {
        switch (manifold_.kind()) {
            case ManifoldKind::Circle: {
                Vector g = Vector::Zero(2);
                if (mode_.a == 0) return g;
                const double phase = mode_.a * std::atan2(x[1], x[0]);
                const double dtheta = std::sqrt(2.0) * mode_.a * (mode_.trig == 0 ? -std::sin(phase) : std::cos(phase));
                return manifold_.tangent_basis(x).col(0) * (dtheta / manifold_.radius());
            }
            case ManifoldKind::FlatTorus: {
                Vector g = Vector::Zero(4);
                if (mode_.a == 0 && mode_.b == 0) return g;
                const double phase = torus_phase(x);
                const double dphase = std::sqrt(2.0) * (mode_.trig == 0 ? -std::sin(phase) : std::cos(phase));
                const Matrix t = manifold_.tangent_basis(x);
                return t.col(0) * (dphase * mode_.a / manifold_.radius_u()) +
                       t.col(1) * (dphase * mode_.b / manifold_.radius_v());
            }
            case ManifoldKind::Sphere:
                break;
        }
        return numeric_gradient(x);
    }

    /// Fourth-order central differences along geodesics in each tangent direction.
    [[nodiscard]] Vector numeric_gradient(const Vector& x, double step = 1e-3) const {
        const Matrix t = manifold_.tangent_basis(x);
        const double h = step * scale();
        Vector g = Vector::Zero(x.size());
        for (Index j = 0; j < t.cols(); ++j) {
            auto at = [&](double s) { return (*this)(manifold_.exp_map(x, t.col(j) * s)); };
            const double slope = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
            g += slope * t.col(j);
        }
        return g;
    }

private:
    [[nodiscard]] double torus_phase(const Vector& x) const {
        return mode_.a * std::atan2(x[1], x[0]) + mode_.b * std::atan2(x[3], x[2]);
    }
    [[nodiscard]] double scale() const { return manifold_.length_scale(); }

    ManifoldModel manifold_;
    std::size_t index_;
    EigenMode mode_;
    double lb_;
};

/// First `count` eigenpairs in nondecreasing eigenvalue order (index 1 is the constant).
[[nodiscard]] inline std::vector<EigenPair> eigenpairs(const ManifoldModel& m, std::size_t count) {
    if (!m.is_uniform())
        throw Error("eigenpair: no closed form for " + m.describe() + " (only uniform densities are supported)");
    std::vector<EigenPair> out;
    out.reserve(count);
    switch (m.kind()) {
        case ManifoldKind::Circle:
            for (std::size_t i = 1; i <= count; ++i) {
                const int k = static_cast<int>(i / 2);
                const int trig = (i >= 2 && i % 2 == 1) ? 1 : 0;
                out.emplace_back(m, i, EigenMode{k, 0, trig}, static_cast<double>(k * k) / (m.radius() * m.radius()));
            }
            break;
        case ManifoldKind::Sphere:
            for (std::size_t i = 1; i <= count; ++i) {
                const int l = static_cast<int>(std::floor(std::sqrt(static_cast<double>(i - 1)) + 1e-12));
                const int j = static_cast<int>(i - 1) - l * l;
                const int order = j == 0 ? 0 : ((j + 1) / 2) * (j % 2 == 1 ? 1 : -1);
                out.emplace_back(m, i, EigenMode{l, order, 0}, static_cast<double>(l * (l + 1)) / (m.radius() * m.radius()));
            }
            break;
        case ManifoldKind::FlatTorus: {
            const auto modes = detail::torus_modes(m.radius_u(), m.radius_v(), count);
            for (std::size_t i = 0; i < count; ++i) out.emplace_back(m, i + 1, modes[i].mode, modes[i].lb);
            break;
        }
    }
    return out;
}

[[nodiscard]] inline EigenPair eigenpair(const ManifoldModel& m, std::size_t index) {
    if (index < 1) throw ConfigError("eigenpair index is 1-based");
    return eigenpairs(m, index).back();
}

}  // namespace manigap
