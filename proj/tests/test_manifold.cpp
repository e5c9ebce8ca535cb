#include "manigap/deformation.hpp"
#include "manigap/signal.hpp"
#include "manigap/spectral.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace manigap;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

}  // namespace

TEST(Sampling, CirclePointsLieOnCircle) {
    const auto cloud = sample_points(ManifoldModel::circle(), 4, 11);
    ASSERT_EQ(cloud.size(), 4);
    for (Index i = 0; i < 4; ++i) EXPECT_NEAR(cloud.points.row(i).norm(), 1.0, 1e-12);
}

TEST(Sampling, DeterministicPerSeed) {
    const auto m = ManifoldModel::flat_torus(2.0, 3.0, 0.2);
    EXPECT_EQ(sample_points(m, 300, 5), sample_points(m, 300, 5));
    EXPECT_FALSE(sample_points(m, 300, 5) == sample_points(m, 300, 6));
}

TEST(Sampling, RejectsEmptyRequest) { EXPECT_THROW((void)sample_points(ManifoldModel::circle(), 0, 1), ConfigError); }

TEST(Sampling, SphereCoordinateMeansVanish) {
    const Index n = 10000;
    const auto cloud = sample_points(ManifoldModel::sphere(), static_cast<std::size_t>(n), 3);
    // Each coordinate of a uniform point on S^2 has variance 1/3.
    const double sigma = std::sqrt(1.0 / 3.0 / static_cast<double>(n));
    for (Index c = 0; c < 3; ++c) EXPECT_LT(std::abs(cloud.points.col(c).mean()), 3.0 * sigma);
}

TEST(Sampling, TiltedCircleMatchesCdfOracle) {
    // rho(theta) proportional to 1 + 0.3 cos(theta); CDF F(theta) = (theta + 0.3 sin(theta)) / 2pi.
    const auto m = ManifoldModel::circle(1.0, 0.3);
    const std::size_t n = 20000;
    const int bins = 20;
    const auto cloud = sample_points(m, n, 99);
    std::vector<double> counts(bins, 0.0);
    for (Index i = 0; i < cloud.size(); ++i) {
        const double theta = wrap_angle(std::atan2(cloud.points(i, 1), cloud.points(i, 0)));
        counts[std::min(bins - 1, static_cast<int>(theta / (2 * kPi) * bins))] += 1.0;
    }
    auto cdf = [](double t) { return (t + 0.3 * std::sin(t)) / (2 * kPi); };
    double chi2 = 0.0;
    for (int b = 0; b < bins; ++b) {
        const double expected = n * (cdf(2 * kPi * (b + 1) / bins) - cdf(2 * kPi * b / bins));
        chi2 += (counts[b] - expected) * (counts[b] - expected) / expected;
    }
    EXPECT_LT(chi2, 36.191);  // chi-square critical value, 19 dof, alpha = 0.01
}

TEST(Manifold, DensityBoundsAndNormalization) {
    for (const auto& m : {ManifoldModel::circle(1.5, 0.4), ManifoldModel::sphere(0.7, -0.3),
                          ManifoldModel::flat_torus(2.0, 5.0, 0.5)}) {
        const auto cloud = sample_points(m, 2000, 4);
        for (Index i = 0; i < cloud.size(); ++i) {
            const double r = m.density(cloud.point(i));
            EXPECT_GE(r, m.rho_min() - 1e-15);
            EXPECT_LE(r, m.rho_max() + 1e-15);
        }
        // integral of rho dvol = vol * E_uniform[rho].
        Rng rng(8);
        double acc = 0.0;
        const int n = 40000;
        for (int i = 0; i < n; ++i) acc += m.density(sample_uniform_point(m, rng));
        EXPECT_NEAR(acc / n * m.volume(), 1.0, 0.02);
    }
}

TEST(Manifold, RejectsInvalidParameters) {
    EXPECT_THROW((void)ManifoldModel::circle(0.0), ConfigError);
    EXPECT_THROW((void)ManifoldModel::sphere(1.0, 1.0), ConfigError);
    EXPECT_THROW((void)ManifoldModel::flat_torus(-1.0, 1.0), ConfigError);
}

TEST(Manifold, ProjectAndExpStayOnManifold) {
    const auto m = ManifoldModel::flat_torus(3.0, 4.0);
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        const Vector x = sample_uniform_point(m, rng);
        const Vector y = m.exp_map(x, m.tangent_basis(x) * vec({0.3, -1.1}));
        EXPECT_NEAR((m.project(y) - y).norm(), 0.0, 1e-12);
        EXPECT_NEAR(m.geodesic(x, y), std::hypot(0.3, 1.1), 1e-12);
    }
}

TEST(EigenPair, CircleClosedForms) {
    const auto m = ManifoldModel::circle();
    const auto e1 = eigenpair(m, 1);
    EXPECT_EQ(e1.eigenvalue(), 0.0);
    EXPECT_EQ(e1(vec({0.6, 0.8})), 1.0);
    const auto e2 = eigenpair(m, 2);
    EXPECT_NEAR(e2.eigenvalue(), 1.0 / (4 * kPi), 1e-15);
    const double t = 0.7;
    EXPECT_NEAR(e2(vec({std::cos(t), std::sin(t)})), std::sqrt(2.0) * std::cos(t), 1e-14);
    const auto e3 = eigenpair(m, 3);
    EXPECT_NEAR(e3(vec({std::cos(t), std::sin(t)})), std::sqrt(2.0) * std::sin(t), 1e-14);
    EXPECT_NEAR(eigenpair(m, 5).eigenvalue(), 4.0 / (4 * kPi), 1e-15);
}

TEST(EigenPair, NondecreasingAndTiltRejected) {
    for (const auto& m : {ManifoldModel::circle(2.0), ManifoldModel::sphere(), ManifoldModel::flat_torus(2.0, 3.0)}) {
        const auto pairs = eigenpairs(m, 40);
        EXPECT_EQ(pairs.front().eigenvalue(), 0.0);
        for (std::size_t i = 1; i < pairs.size(); ++i) EXPECT_LE(pairs[i - 1].eigenvalue(), pairs[i].eigenvalue());
    }
    EXPECT_THROW((void)eigenpair(ManifoldModel::circle(1.0, 0.2), 2), Error);
}

TEST(EigenPair, SphereMultiplicities) {
    const auto pairs = eigenpairs(ManifoldModel::sphere(), 25);
    std::size_t i = 0;
    for (int l = 0; l <= 4; ++l) {
        for (int k = 0; k < 2 * l + 1; ++k, ++i)
            EXPECT_NEAR(pairs[i].eigenvalue(), l * (l + 1) / (8 * kPi), 1e-14) << "index " << i + 1;
    }
}

TEST(EigenPair, TorusMultiplicities) {
    const auto pairs = eigenpairs(ManifoldModel::flat_torus(), 13);
    const double rho_half = 0.5 / (4 * kPi * kPi);
    EXPECT_EQ(pairs[0].lb_eigenvalue(), 0.0);
    for (int i = 1; i <= 4; ++i) EXPECT_NEAR(pairs[i].eigenvalue(), rho_half * 1.0, 1e-15);
    for (int i = 5; i <= 8; ++i) EXPECT_NEAR(pairs[i].eigenvalue(), rho_half * 2.0, 1e-15);
    for (int i = 9; i <= 12; ++i) EXPECT_NEAR(pairs[i].eigenvalue(), rho_half * 4.0, 1e-15);
}

TEST(EigenPair, GramMatrixIsIdentityWithinMonteCarloError) {
    for (const auto& m : {ManifoldModel::circle(), ManifoldModel::sphere(), ManifoldModel::flat_torus(2.0, 3.0)}) {
        const McGram g = mc_gram(m, 10, 50000, 123);
        for (Index i = 0; i < 10; ++i)
            for (Index j = 0; j < 10; ++j)
                EXPECT_LE(std::abs(g.gram(i, j) - (i == j ? 1.0 : 0.0)), 3.0 * g.std_error(i, j) + 1e-12)
                    << m.describe() << " entry " << i << "," << j;
    }
}

// -(rho/2) Laplace-Beltrami by central differences in intrinsic coordinates; tolerances cover O(h^2) truncation.
TEST(EigenPair, FiniteDifferenceLaplacianMatchesEigenvalue) {
    const double h = 1e-3;
    {
        const auto m = ManifoldModel::circle(1.7);
        const double rho = 1.0 / m.volume();
        for (const auto& phi : eigenpairs(m, 9)) {
            for (double t = 0.1; t < 6.2; t += 0.5) {
                auto f = [&](double s) { return phi(m.embed(vec({s / m.radius()}))); };
                const double s = t * m.radius();
                const double lap = (f(s + h) - 2 * f(s) + f(s - h)) / (h * h);
                EXPECT_NEAR(-0.5 * rho * lap, phi.eigenvalue() * f(s), 1e-5 * (1.0 + std::abs(f(s))));
            }
        }
    }
    {
        const auto m = ManifoldModel::sphere();
        const double rho = 1.0 / m.volume();
        for (const auto& phi : eigenpairs(m, 16)) {
            for (double th = 0.3; th < 3.0; th += 0.6) {
                for (double ph = 0.2; ph < 6.2; ph += 1.3) {
                    auto f = [&](double a, double b) { return phi(m.embed(vec({a, b}))); };
                    const double d_th = (std::sin(th + h / 2) * (f(th + h, ph) - f(th, ph)) -
                                         std::sin(th - h / 2) * (f(th, ph) - f(th - h, ph))) /
                                        (h * h * std::sin(th));
                    const double d_ph = (f(th, ph + h) - 2 * f(th, ph) + f(th, ph - h)) / (h * h * std::sin(th) * std::sin(th));
                    EXPECT_NEAR(-0.5 * rho * (d_th + d_ph), phi.eigenvalue() * f(th, ph), 1e-5 * (1.0 + std::abs(f(th, ph))));
                }
            }
        }
    }
    {
        const auto m = ManifoldModel::flat_torus(2.0, 3.0);
        const double rho = 1.0 / m.volume();
        for (const auto& phi : eigenpairs(m, 15)) {
            for (double u = 0.1; u < 2.0; u += 0.45) {
                for (double v = 0.2; v < 3.0; v += 0.7) {
                    auto f = [&](double a, double b) { return phi(m.embed(vec({a, b}))); };
                    const double lap = (f(u + h, v) + f(u - h, v) + f(u, v + h) + f(u, v - h) - 4 * f(u, v)) / (h * h);
                    EXPECT_NEAR(-0.5 * rho * lap, phi.eigenvalue() * f(u, v), 1e-5 * (1.0 + std::abs(f(u, v))));
                }
            }
        }
    }
}

TEST(EigenPair, AnalyticGradientsMatchNumeric) {
    for (const auto& m : {ManifoldModel::circle(1.3), ManifoldModel::flat_torus(2.0, 3.0)}) {
        Rng rng(1);
        for (const auto& phi : eigenpairs(m, 12)) {
            const Vector x = sample_uniform_point(m, rng);
            EXPECT_LT((phi.gradient(x) - phi.numeric_gradient(x)).norm(), 1e-8);
        }
    }
}

TEST(Bandlimited, ConstantSignal) {
    const auto f = synth_bandlimited(ManifoldModel::sphere(), {{1, 1.0}}, 0.0);
    EXPECT_DOUBLE_EQ(f(vec({0.0, 0.6, 0.8})), 1.0);
}

TEST(Bandlimited, CircleHarmonics) {
    const auto f = synth_bandlimited(ManifoldModel::circle(), {{2, 1.0}, {3, 0.5}}, 1.0);
    for (double t = 0.0; t < 6.0; t += 0.37) {
        const double expect = std::sqrt(2.0) * (std::cos(t) + 0.5 * std::sin(t));
        EXPECT_NEAR(f(vec({std::cos(t), std::sin(t)})), expect, 1e-14);
    }
}

TEST(Bandlimited, EmptyIsZero) {
    const auto m = ManifoldModel::circle();
    const auto f = synth_bandlimited(m, {}, 1.0);
    EXPECT_EQ(f(vec({1.0, 0.0})), 0.0);
    EXPECT_EQ(mc_inner_product(f, f, m, 100, 1).mean, 0.0);
}

TEST(Bandlimited, RejectsCoefficientAboveCutoff) {
    EXPECT_THROW((void)synth_bandlimited(ManifoldModel::circle(), {{4, 1.0}}, 0.05), ConfigError);
    EXPECT_NO_THROW((void)synth_bandlimited(ManifoldModel::circle(), {{4, 0.0}}, 0.05));
}

TEST(Bandlimited, MonteCarloRoundTrip) {
    const auto m = ManifoldModel::sphere();
    const std::map<std::size_t, double> coeffs{{1, 0.3}, {2, -1.0}, {4, 0.5}, {7, 0.8}};
    const auto f = synth_bandlimited(m, coeffs, 1.0);
    const auto est = mc_project(f, m, 9, 40000, 17);
    for (std::size_t i = 1; i <= 9; ++i) {
        const double truth = coeffs.count(i) ? coeffs.at(i) : 0.0;
        EXPECT_LE(std::abs(est[i - 1].mean - truth), 3.0 * est[i - 1].std_error + 1e-12) << "index " << i;
    }
}

TEST(LipschitzTarget, ConstantCertifiesAnyBudget) {
    TeacherSpec spec;
    spec.coefficients = {{1, 2.0}};
    const auto g = lipschitz_target(ManifoldModel::circle(), 1e-9, spec);
    EXPECT_EQ(g.certified_constant(), 0.0);
}

TEST(LipschitzTarget, FirstHarmonicMatchesAnalyticGradient) {
    TeacherSpec spec;
    spec.coefficients = {{2, 1.0}};
    const auto g = lipschitz_target(ManifoldModel::circle(), 1.5, spec);
    // |grad (sqrt2 cos theta)| peaks at sqrt 2.
    EXPECT_NEAR(g.certified_constant(), std::sqrt(2.0), 1e-3);
    EXPECT_LE(g.certified_constant(), std::sqrt(2.0) + 1e-9);
    try {
        (void)lipschitz_target(ManifoldModel::circle(), 1.0, spec);
        FAIL() << "expected certification failure";
    } catch (const CertificationError& e) {
        EXPECT_GT(e.ratio(), 1.0);
        EXPECT_EQ(e.first().size(), 2);
    }
}

TEST(LipschitzTarget, TeacherMultipliesCoefficients) {
    const auto m = ManifoldModel::circle();
    TeacherSpec spec;
    spec.coefficients = {{2, 1.0}, {5, -0.5}};
    spec.filter = FilterCoefficients({0.0, 1.0});
    const auto g = lipschitz_target(m, 10.0, spec);
    const auto pairs = eigenpairs(m, 5);
    EXPECT_NEAR(g.signal().coefficients().at(2), std::exp(-pairs[1].eigenvalue()), 1e-15);
    EXPECT_NEAR(g.signal().coefficients().at(5), -0.5 * std::exp(-pairs[4].eigenvalue()), 1e-15);
}

TEST(LipschitzTarget, ThresholdLabels) {
    TeacherSpec spec;
    spec.coefficients = {{2, 1.0}};
    spec.threshold = 0.0;
    const auto g = lipschitz_target(ManifoldModel::circle(), 2.0, spec);
    EXPECT_EQ(g.label(vec({1.0, 0.0})), 1.0);
    EXPECT_EQ(g.label(vec({-1.0, 0.0})), 0.0);
}

TEST(Deformation, ZeroAmplitudeIsIdentity) {
    const auto m = ManifoldModel::sphere();
    const auto tau = make_deformation(m, {FieldKind::Gradient, {{2, 1.0}}}, 0.0);
    const auto cert = certify_deformation(tau, 100, 1);
    EXPECT_EQ(cert.gamma_dist, 0.0);
    EXPECT_EQ(cert.gamma_jac, 0.0);
    const Vector x = vec({0.0, 0.6, 0.8});
    EXPECT_EQ(tau(x), x);
}

TEST(Deformation, CircleRotationIsIsometry) {
    const double gamma = 0.3;
    const auto tau = make_deformation(ManifoldModel::circle(), {FieldKind::Rotation, {}}, gamma);
    const auto cert = certify_deformation(tau, 500, 2);
    EXPECT_NEAR(cert.gamma_dist, gamma, 1e-12);
    EXPECT_LT(cert.gamma_jac, 1e-8);
}

TEST(Deformation, SphereDisplacementLinearInAmplitude) {
    const auto m = ManifoldModel::sphere();
    const DeformationField field{FieldKind::Gradient, {{2, 1.0}, {3, 0.5}, {6, 0.3}}};
    std::vector<double> amps{0.01, 0.02, 0.03, 0.04}, dists;
    for (double a : amps) dists.push_back(certify_deformation(make_deformation(m, field, a), 400, 5).gamma_dist);
    EXPECT_GE(fit_line(amps, dists).r2, 0.99);
}

TEST(Deformation, DeformedPointsStayOnManifold) {
    for (const auto& m : {ManifoldModel::circle(2.0), ManifoldModel::sphere(1.5), ManifoldModel::flat_torus(2.0, 3.0)}) {
        const auto tau = make_deformation(m, {FieldKind::Gradient, {{2, 1.0}, {4, -0.7}}}, 0.2);
        const auto cloud = sample_points(m, 200, 3);
        for (Index i = 0; i < cloud.size(); ++i) {
            const Vector y = tau(cloud.point(i));
            EXPECT_LT((m.project(y) - y).norm(), 1e-12);
        }
    }
}

TEST(Deformation, BisectionMeetsBudgetAndRecheckIsSound) {
    for (const auto& m : {ManifoldModel::circle(), ManifoldModel::sphere(), ManifoldModel::flat_torus(2.0, 3.0)}) {
        const double gamma = 0.1;
        const auto tau = deform(m, {FieldKind::Gradient, {{2, 1.0}, {3, 0.5}}}, gamma, 500, 9);
        EXPECT_LE(tau.certified_gamma_dist(), gamma);
        EXPECT_LE(tau.certified_gamma_jac(), gamma);
        EXPECT_GT(tau.certificate().max(), 0.95 * gamma);
        const auto recheck = certify_deformation(tau, 2000, 10);
        EXPECT_LE(recheck.gamma_dist, 1.1 * tau.certified_gamma_dist());
        EXPECT_LE(recheck.gamma_jac, 1.1 * tau.certified_gamma_jac());
    }
}

TEST(Deformation, DegenerateFieldFails) {
    // The constant eigenfunction has zero gradient, so no amplitude reaches the budget.
    EXPECT_THROW((void)deform(ManifoldModel::circle(), {FieldKind::Gradient, {{1, 1.0}}}, 0.1, 50, 1), Error);
}

TEST(Pushforward, IdentityAndRotation) {
    const auto m = ManifoldModel::circle();
    const auto f = synth_bandlimited(m, {{2, 1.0}}, 1.0);
    const auto id = pushforward_signal(f, deform(m, {}, 0.0));
    const auto half = make_deformation(m, {FieldKind::Rotation, {}}, kPi);
    const auto rot = pushforward_signal(f, half.with_certificate(certify_deformation(half, 10, 1), kPi));
    for (double t = 0.0; t < 6.0; t += 0.5) {
        const Vector x = vec({std::cos(t), std::sin(t)});
        EXPECT_EQ(id(x), f(x));
        EXPECT_NEAR(rot(x), -f(x), 1e-12);
    }
}

TEST(Pushforward, ContinuousInAmplitude) {
    const auto m = ManifoldModel::sphere();
    const auto f = synth_bandlimited(m, {{2, 1.0}, {5, 0.4}}, 1.0);
    const DeformationField field{FieldKind::Gradient, {{3, 1.0}, {4, 0.5}}};
    std::vector<double> norms;
    for (double gamma : {0.2, 0.1, 0.05}) {
        const auto g = pushforward_signal(f, deform(m, field, gamma, 300, 4));
        auto diff = [&](const Vector& x) { return g(x) - f(x); };
        norms.push_back(mc_inner_product(diff, diff, m, 4000, 6).mean);
    }
    EXPECT_GT(norms[0], norms[1]);
    EXPECT_GT(norms[1], norms[2]);
}
