#include "manigap/genlab.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace manigap;

namespace {

// Cheap circle teacher-student setup; every test trims what it varies.
ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.signal.coefficients = {{2, 1.0}, {4, 0.6}};
    cfg.target.taps = {0.2, 1.0, -0.6};
    cfg.graph.n = {60};
    cfg.model.depth = {1};
    cfg.model.width = {2};
    cfg.model.k = 3;
    cfg.train.learning_rate = 0.01;
    cfg.train.epochs = 5;
    cfg.eval.n_eval = 500;
    cfg.eval.replicates = 8;
    cfg.eval.master_seed = 11;
    cfg.eval.workers = 1;
    return cfg;
}

GnnModel identity_model() {
    GnnModel m = init_model({1, 1}, 1, 1, Activation::Identity, Task::Node, 0);
    m.layers[0].taps[0](0, 0) = 1.0;
    m.readout.weight(0, 0) = 1.0;
    m.readout.bias.setZero();
    return m;
}

GnnModel zero_model(const ExperimentConfig& cfg) {
    GnnModel m = init_model({1, 2}, cfg.model.k, 1, Activation::Relu, Task::Node, 3);
    for (auto& l : m.layers)
        for (auto& t : l.taps) t.setZero();
    m.readout.bias.setZero();
    return m;
}

void expect_same(const GapRecord& a, const GapRecord& b) {
    EXPECT_EQ(a.cell, b.cell);
    EXPECT_EQ(a.seed, b.seed);
    EXPECT_EQ(a.trial, b.trial);
    EXPECT_EQ(a.empirical_risk, b.empirical_risk);
    EXPECT_EQ(a.statistical_risk, b.statistical_risk);
    EXPECT_EQ(a.statistical_stderr, b.statistical_stderr);
    EXPECT_EQ(a.gap, b.gap);
    EXPECT_EQ(a.gamma, b.gamma);
    EXPECT_EQ(a.error, b.error);
}

}  // namespace

TEST(EmpiricalRisk, TwoNodeL1) {
    Matrix l(2, 2);
    l << 1, -1, -1, 1;
    const SpectralDiffusion diff(eigendecompose(l));
    Matrix x(2, 1), y = Matrix::Zero(2, 1);
    x << 1, 3;
    EXPECT_DOUBLE_EQ(empirical_risk(identity_model(), diff, x, y, Loss{LossKind::L1}), 2.0);
}

TEST(EmpiricalRisk, MatchesNaiveLoop) {
    const auto g = manigap::testing::random_graph(5);
    const auto diff = ChebyshevDiffusion::from_graph(g);
    const GnnModel m = init_model({2, 3, 3}, 3, 2, Activation::Relu, Task::Node, 9);
    const Matrix x = manigap::testing::random_signal(g.size(), 2, 1);
    const Matrix y = manigap::testing::random_signal(g.size(), 2, 2);
    const Matrix out = forward(m, diff, x);
    for (const Loss spec : {Loss{LossKind::L1}, Loss{LossKind::Huber, 0.3}}) {
        double total = 0.0;
        for (Index i = 0; i < out.rows(); ++i)
            for (Index c = 0; c < out.cols(); ++c) {
                const double r = std::abs(out(i, c) - y(i, c));
                total += spec.kind == LossKind::L1 ? r : (r <= 0.3 ? 0.5 * r * r / 0.3 : r - 0.15);
            }
        EXPECT_NEAR(empirical_risk(m, diff, x, y, spec), total / out.rows(), 1e-12);
    }
    EXPECT_THROW((void)empirical_risk(m, diff, x, Matrix(y.leftCols(1)), Loss{}), ConfigError);
}

TEST(RiskRows, ZeroOne) {
    Matrix p(3, 1), t(3, 1);
    p << 0.3, -0.2, 0.0;
    t << 1, 1, 0;
    EXPECT_EQ(risk_rows(RiskMetric::ZeroOne, Loss{}, p, t), Vector((Vector(3) << 0, 1, 0).finished()));
    Matrix q(2, 3), u(2, 3);
    q << 0.1, 0.5, 0.2, 2.0, 0.0, 1.0;
    u << 0, 1, 0, 0, 0, 1;
    EXPECT_EQ(risk_rows(RiskMetric::ZeroOne, Loss{}, q, u), Vector((Vector(2) << 0, 1).finished()));
}

TEST(StatisticalRisk, IdentityOnSameSampleEqualsEmpirical) {
    const auto cfg = small_config();
    const NodeProblem prob = make_problem(cfg);
    const Index n = 500;
    const std::uint64_t seed = 77;
    const GnnModel m = init_model({1, 2}, 3, 1, Activation::Relu, Task::Node, 4);
    const double eps = cfg.graph.epsilon(n, 1);
    const auto s = node_sample(prob, Mismatch::none(), n, eps, seed);
    const auto diff = ChebyshevDiffusion::from_graph(s.graph);
    const double emp = empirical_risk(m, diff, s.x, s.y, cfg.model.loss);
    const auto est = statistical_risk_mc(m, prob, Mismatch::none(), cfg.model.loss, n, seed, 1, cfg.graph);
    EXPECT_NEAR(est.mean, emp, 1e-12);
    EXPECT_THROW((void)statistical_risk_mc(m, prob, Mismatch::none(), cfg.model.loss, 100, seed), ConfigError);
}

// Zero taps give a zero output, so the l1 risk is E|g(tau(x))| for x uniform on the circle.
TEST(StatisticalRisk, ZeroModelMatchesQuadrature) {
    auto cfg = small_config();
    cfg.model.loss = Loss{LossKind::L1};
    cfg.mismatch.kind = MismatchKind::Deformation;
    const NodeProblem prob = make_problem(cfg);
    const Mismatch mm = make_mismatch(cfg, prob.manifold, 0.1);
    ASSERT_TRUE(mm.tau.has_value());
    const auto est = statistical_risk_mc(zero_model(cfg), prob, mm, cfg.model.loss, 2000, 5, 8, cfg.graph);

    const int q = 20000;
    double quad = 0.0;
    for (int i = 0; i < q; ++i) {
        const double t = 2.0 * kPi * (i + 0.5) / q;
        Vector p(2);
        p << std::cos(t), std::sin(t);
        quad += std::abs(prob.target((*mm.tau)(p))) / q;
    }
    EXPECT_GT(quad, 0.1);
    EXPECT_NEAR(est.mean, quad, 4.0 * est.std_error + 1e-3);
}

TEST(StatisticalRisk, StderrShrinksLikeInverseSqrtReplicates) {
    const auto cfg = small_config();
    const NodeProblem prob = make_problem(cfg);
    const GnnModel m = init_model({1, 1}, 2, 1, Activation::Relu, Task::Node, 8);
    std::vector<double> lr, lse;
    for (int r : {8, 16, 32, 64, 128, 256}) {
        const auto est = statistical_risk_mc(m, prob, Mismatch::none(), cfg.model.loss, 500, 1000 + r, r, cfg.graph);
        lr.push_back(std::log(r));
        lse.push_back(std::log(est.std_error));
    }
    EXPECT_NEAR(fit_line(lr, lse).slope, -0.5, 0.1);
}

TEST(Mismatch, FeatureDropZeroesFloorFraction) {
    auto cfg = small_config();
    cfg.mismatch.kind = MismatchKind::Feature;
    const NodeProblem prob = make_problem(cfg);
    const auto clean = node_sample(prob, Mismatch::none(), 101, 0.3, 4);
    const auto dropped = node_sample(prob, make_mismatch(cfg, prob.manifold, 0.25), 101, 0.3, 4);
    Index zeroed = 0;
    for (Index i = 0; i < 101; ++i) {
        if (dropped.x(i, 0) == 0.0 && clean.x(i, 0) != 0.0) ++zeroed;
        else EXPECT_EQ(dropped.x(i, 0), clean.x(i, 0));
    }
    EXPECT_EQ(zeroed, 25);
    EXPECT_EQ(dropped.y, clean.y);
}

TEST(Mismatch, DeformationMovesGraphAndTargetNotFeatures) {
    auto cfg = small_config();
    cfg.mismatch.kind = MismatchKind::Deformation;
    const NodeProblem prob = make_problem(cfg);
    const Mismatch mm = make_mismatch(cfg, prob.manifold, 0.2);
    EXPECT_NEAR(mm.certified, 0.2, 0.02);
    const auto clean = node_sample(prob, Mismatch::none(), 200, 0.3, 6);
    const auto moved = node_sample(prob, mm, 200, 0.3, 6);
    EXPECT_EQ(moved.x, clean.x);
    EXPECT_GT((moved.y - clean.y).cwiseAbs().maxCoeff(), 1e-3);
    const auto pts = sample_points(prob.manifold, 200, 6);
    for (Index i = 0; i < 200; i += 17) EXPECT_NEAR(moved.y(i, 0), prob.target((*mm.tau)(pts.point(i))), 1e-12);
}

TEST(MeasureGap, SameSampleWithoutMismatchHasNoGap) {
    auto cfg = small_config();
    cfg.graph.n = {125};
    cfg.eval.n_eval = 500;
    const auto rec = measure_gap(cfg, Cell{125, 0.0, std::nullopt, 1, 2}, 0);
    ASSERT_TRUE(rec.ok()) << rec.error;
    EXPECT_GE(rec.gap, 0.0);
    // Both risks estimate the same quantity; the gap is sampling error only.
    EXPECT_LT(rec.gap, 5.0 * rec.statistical_stderr + 0.05 * rec.statistical_risk);
}

TEST(Sweep, SingletonEqualsMeasureGap) {
    auto cfg = small_config();
    cfg.mismatch.kind = MismatchKind::Deformation;
    cfg.mismatch.gamma = {0.1};
    const auto records = sweep(cfg);
    ASSERT_EQ(records.size(), 1u);
    expect_same(records[0], measure_gap(cfg, Cell{60, 0.1, std::nullopt, 1, 2}, 0));
}

TEST(Sweep, RowCountOrderingAndArithmetic) {
    auto cfg = small_config();
    cfg.mismatch.kind = MismatchKind::Jitter;
    cfg.graph.n = {50, 40};
    cfg.mismatch.gamma = {0.05, 0.0};
    cfg.model.c_l = {std::nullopt, 0.5};
    cfg.eval.trials = 2;
    const auto records = sweep(cfg);
    ASSERT_EQ(records.size(), 2u * 2u * 2u * 2u);
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& a = records[i - 1];
        const auto& b = records[i];
        EXPECT_TRUE(a.cell < b.cell || (a.cell == b.cell && a.trial < b.trial));
    }
    for (const auto& r : records) {
        ASSERT_TRUE(r.ok()) << r.error;
        EXPECT_EQ(r.gap, std::abs(r.statistical_risk - r.empirical_risk));
        EXPECT_GE(r.gap, 0.0);
        EXPECT_EQ(r.config_fingerprint, config_fingerprint(cfg));
        // Jitter with variance 2 gamma tears the eval graph; the flag counts affected replicates.
        if (r.cell.gamma == 0.0) {
            EXPECT_EQ(r.eval_disconnected, 0);
        }
        EXPECT_LE(r.eval_disconnected, cfg.eval.replicates);
    }
    EXPECT_FALSE(records.front().cell.c_l.has_value());
}

TEST(Sweep, PerCellStdOverTenTrialsIsFinite) {
    auto cfg = small_config();
    cfg.graph.n = {40};
    cfg.eval.trials = 10;
    cfg.train.epochs = 2;
    const auto summary = summarize(sweep(cfg));
    ASSERT_EQ(summary.size(), 1u);
    EXPECT_EQ(summary[0].count, 10);
    EXPECT_TRUE(std::isfinite(summary[0].std_gap));
    EXPECT_GT(summary[0].std_gap, 0.0);
}

TEST(Sweep, TrialOrderAndWorkerCountDoNotChangeRecords) {
    auto cfg = small_config();
    cfg.graph.n = {40};
    cfg.eval.trials = 3;
    cfg.train.epochs = 2;
    const auto serial = sweep(cfg, 1);
    const auto pooled = sweep(cfg, 3);
    ASSERT_EQ(serial.size(), 3u);
    for (std::size_t i = 0; i < serial.size(); ++i) expect_same(serial[i], pooled[i]);
    // Trials run alone, last first.
    for (int t = 2; t >= 0; --t) expect_same(measure_gap(cfg, Cell{40, 0.0, std::nullopt, 1, 2}, t), serial[static_cast<std::size_t>(t)]);
    EXPECT_NE(serial[0].seed, serial[1].seed);
}

TEST(Sweep, FailuresAreRecordedAndTheSweepContinues) {
    auto cfg = small_config();
    cfg.graph.n = {40, 50};
    cfg.model.loss = Loss{LossKind::CrossEntropy};  // real-valued targets are not probabilities
    const auto records = sweep(cfg);
    ASSERT_EQ(records.size(), 2u);
    for (const auto& r : records) {
        EXPECT_FALSE(r.ok());
        EXPECT_NE(r.error.find("training failed"), std::string::npos) << r.error;
    }
    EXPECT_EQ(summarize(records)[0].failures, 1);
}

TEST(WorkerCount, EnvironmentOverride) {
    ::setenv("GENLAB_WORKERS", "3", 1);
    EXPECT_EQ(worker_count(1), 3);
    ::setenv("GENLAB_WORKERS", "zero", 1);
    EXPECT_THROW((void)worker_count(1), ConfigError);
    ::unsetenv("GENLAB_WORKERS");
    EXPECT_EQ(worker_count(2), 2);
}

TEST(Spearman, Examples) {
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
    // One adjacent swap over four points: 1 - 6 * 2 / (4 * 15).
    EXPECT_NEAR(spearman({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8, 1e-15);
    EXPECT_NEAR(spearman({1, 2, 2, 3}, {1, 2, 3, 4}), std::sqrt(0.9), 1e-12);
    EXPECT_THROW((void)spearman({1}, {1}), ConfigError);
}

namespace {

std::vector<std::tuple<Index, double, double>> planted(const std::array<double, 4>& coef, double delta) {
    std::vector<std::tuple<Index, double, double>> cells;
    for (Index n : {100, 200, 400, 800})
        for (double g : {0.0, 0.05, 0.1, 0.2}) {
            const auto r = bound_regressors(n, g, 1, delta);
            double gap = 0.0;
            for (std::size_t j = 0; j < 4; ++j) gap += coef[j] * r[j];
            cells.emplace_back(n, g, gap);
        }
    return cells;
}

}  // namespace

TEST(BoundFit, PlantedCoefficientsRecovered) {
    const std::array<double, 4> coef{0.8, 3.0, 0.25, 0.4};
    const auto fit = bound_shape_fit(planted(coef, 0.1), 1, 0.1);
    EXPECT_GT(fit.r2, 0.999);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(fit.coefficients[j], coef[j], 0.01 * coef[j]) << "term " << j;
    EXPECT_FALSE(fit.rank_deficient);
    EXPECT_EQ(fit.cells, 16u);
    EXPECT_NEAR(fit.predict(300, 0.15, bound_regressors(300, 0.15, 1, 0.1)[0] * std::sqrt(300.0)),
                [&] {
                    const auto r = bound_regressors(300, 0.15, 1, 0.1);
                    return coef[0] * r[0] + coef[1] * r[1] + coef[2] * r[2] + coef[3] * r[3];
                }(),
                1e-3);
}

TEST(BoundFit, GammaOnlyData) {
    const auto fit = bound_shape_fit(planted({0.0, 0.0, 0.0, 0.4}, 0.1), 1, 0.1);
    EXPECT_NEAR(fit.coefficients[3], 0.4, 1e-9);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(fit.coefficients[j], 0.0, 1e-9);
    EXPECT_NEAR(fit.r2, 1.0, 1e-12);
}

TEST(BoundFit, RankDeficiencyAndTooFewCells) {
    std::vector<std::tuple<Index, double, double>> flat;
    for (Index n : {100, 150, 200, 300, 400, 600, 800, 1200}) flat.emplace_back(n, 0.0, 1.0 / n);
    const auto fit = bound_shape_fit(flat, 1, 0.1);
    EXPECT_TRUE(fit.rank_deficient);
    EXPECT_EQ(fit.rank, 3);
    EXPECT_EQ(fit.coefficients[3], 0.0);
    flat.pop_back();
    EXPECT_THROW((void)bound_shape_fit(flat, 1, 0.1), ConfigError);
}

// Active-set enumeration must satisfy the KKT conditions of min |Ax - b|^2, x >= 0.
TEST(BoundFit, NnlsSatisfiesKkt) {
    Rng rng(4);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 30; ++trial) {
        Matrix a(12, 4);
        Vector b(12);
        for (Index i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
        for (Index i = 0; i < b.size(); ++i) b[i] = nd(rng);
        const Vector x = nnls_small(a, b);
        const Vector grad = a.transpose() * (a * x - b);
        for (Index j = 0; j < 4; ++j) {
            EXPECT_GE(x[j], 0.0);
            if (x[j] > 0.0) EXPECT_NEAR(grad[j], 0.0, 1e-9);
            else EXPECT_GE(grad[j], -1e-9);
        }
    }
}

namespace {

ExperimentConfig graph_config() {
    ExperimentConfig cfg;
    cfg.experiment = ExperimentKind::Graph;
    ClassSpec sphere{"sphere", ManifoldSpec{ManifoldKind::Sphere}, std::nullopt, 2};
    ClassSpec torus{"torus", ManifoldSpec{ManifoldKind::FlatTorus}, std::nullopt, 2};
    cfg.graph_level.classes = {sphere, torus};
    cfg.graph_level.n_per_graph = 30;
    cfg.graph_level.train_graphs_per_class = 6;
    cfg.graph_level.test_graphs_per_class = 3;
    cfg.mismatch.kind = MismatchKind::Jitter;
    cfg.mismatch.gamma = {0.02};
    cfg.model.width = {4};
    cfg.model.loss = Loss{LossKind::CrossEntropy};
    cfg.train.learning_rate = 0.02;
    cfg.train.epochs = 40;
    cfg.eval.workers = 1;
    return cfg;
}

}  // namespace

TEST(GraphLevel, SphereVersusTorusLearns) {
    const auto cfg = graph_config();
    const auto recs = graph_level_gap(cfg);
    ASSERT_EQ(recs.size(), 1u);
    const auto& r = recs[0];
    EXPECT_GT(r.train_accuracy, 0.5);
    EXPECT_EQ(r.class_names, (std::vector<std::string>{"sphere", "torus"}));
    EXPECT_NEAR(r.empirical_risk, r.class_empirical[0] + r.class_empirical[1], 1e-12);
    EXPECT_NEAR(r.statistical_risk, r.class_statistical[0] + r.class_statistical[1], 1e-12);
    EXPECT_EQ(r.gap, std::abs(r.statistical_risk - r.empirical_risk));
    EXPECT_TRUE(r.warnings.empty());
}

TEST(GraphLevel, SingleClassIsTriviallyPerfect) {
    auto cfg = graph_config();
    cfg.graph_level.classes.pop_back();
    cfg.model.metric = RiskMetric::ZeroOne;
    const auto r = graph_level_gap(cfg).front();
    EXPECT_EQ(r.train_accuracy, 1.0);
    EXPECT_EQ(r.test_accuracy, 1.0);
    EXPECT_EQ(r.gap, 0.0);
}

TEST(GraphLevel, CollisionWarnsAndMissingFileNamesPath) {
    auto cfg = graph_config();
    cfg.graph_level.classes[1].manifold = ManifoldSpec{ManifoldKind::Sphere};
    cfg.mismatch.gamma = {0.0};
    cfg.train.epochs = 1;
    const auto r = graph_level_gap(cfg).front();
    ASSERT_FALSE(r.warnings.empty());
    EXPECT_NE(r.warnings.front().find("same model"), std::string::npos);

    auto missing = graph_config();
    missing.graph_level.classes[1] = ClassSpec{"cube", std::nullopt, std::string("/nonexistent/cube.off"), 2};
    try {
        (void)graph_level_gap(missing);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/cube.off"), std::string::npos);
    }
}

TEST(GraphLevel, FileClassesRunEndToEnd) {
    auto cfg = graph_config();
    cfg.graph_level.classes = {ClassSpec{"cube", std::nullopt, std::string(MANIGAP_FIXTURES "/cube_cloud.off"), 2},
                               ClassSpec{"sphere", std::nullopt, std::string(MANIGAP_FIXTURES "/sphere_cloud.off"), 2}};
    const auto r = graph_level_gap(cfg).front();
    EXPECT_TRUE(std::isfinite(r.gap));
    EXPECT_GE(r.train_accuracy, 0.0);
    cfg.mismatch.kind = MismatchKind::Deformation;
    EXPECT_THROW((void)graph_level_gap(cfg), ConfigError);
}

TEST(Ood, SameManifoldReducesToInDistributionGap) {
    auto cfg = small_config();
    const auto ood = ood_gap(cfg, {cfg.manifold}, 10);
    ASSERT_EQ(ood.size(), 1u);
    expect_same(ood[0].records[0], measure_gap(cfg, Cell{60, 0.0, std::nullopt, 1, 2}, 0));
    EXPECT_EQ(ood[0].spectral_distance, 0.0);
    ManifoldSpec sphere;
    sphere.kind = ManifoldKind::Sphere;
    EXPECT_THROW((void)ood_gap(cfg, {sphere}), ConfigError);
}

// A radius-r circle is the unit circle scaled by r; evaluating on it by hand must agree.
TEST(Ood, ScaledCircleMatchesDirectEvaluation) {
    auto cfg = small_config();
    ManifoldSpec wide;
    wide.radius = 1.1;
    const auto ood = ood_gap(cfg, {wide}, 10);
    const auto& rec = ood[0].records[0];
    ASSERT_TRUE(rec.ok()) << rec.error;

    const NodeProblem prob = make_problem(cfg);
    const std::uint64_t seed = trial_seed(cfg.eval.master_seed, 0);
    const auto trained = detail::train_node(cfg, prob, detail::TrainKey{60, std::nullopt, 1, 2}, seed);
    std::vector<double> risks;
    for (int r = 0; r < cfg.eval.replicates; ++r) {
        const auto unit = sample_points(prob.manifold, 500, replicate_seed(derive_seed(seed, "eval"), r));
        PointCloud scaled = unit;
        scaled.points *= 1.1;
        Matrix x(500, 1), y(500, 1);
        for (Index i = 0; i < 500; ++i) {
            x(i, 0) = prob.f(unit.point(i));
            y(i, 0) = prob.target(unit.point(i));
        }
        const auto diff = ChebyshevDiffusion::from_graph(build_graph(scaled, cfg.graph.epsilon(500, 1), 1));
        risks.push_back(empirical_risk(trained.model, diff, x, y, cfg.model.loss));
    }
    const auto direct = summarize_replicates(risks);
    EXPECT_NEAR(rec.statistical_risk, direct.mean, 1e-9 + 0.1 * direct.std_error);
    EXPECT_GT(ood[0].spectral_distance, 0.0);
}

TEST(Config, ParsesAndRoundTrips) {
    const auto j = nlohmann::json::parse(R"({
        "experiment": "node",
        "manifold": {"kind": "circle"},
        "signal": {"coefficients": {"2": 1.0, "4": 0.5}},
        "mismatch": {"kind": "deformation", "gamma": [0, 0.1], "field": {"kind": "gradient", "terms": [[2, 1.0]]}},
        "graph": {"n": [100, 200]},
        "model": {"depth": [2], "width": [4], "c_l": [null, 0.1], "loss": {"kind": "l1"}},
        "train": {"learning_rate": 0.01, "epochs": 10},
        "eval": {"n_eval": 800, "replicates": 8, "trials": 2, "seed": 5}
    })");
    const auto cfg = config_from_json(j);
    EXPECT_EQ(cfg.graph.n, (std::vector<Index>{100, 200}));
    ASSERT_EQ(cfg.model.c_l.size(), 2u);
    EXPECT_FALSE(cfg.model.c_l[0].has_value());
    EXPECT_EQ(*cfg.model.c_l[1], 0.1);
    EXPECT_EQ(cfg.model.loss.kind, LossKind::L1);
    EXPECT_EQ(cfg.eval.master_seed, 5u);
    const auto again = config_from_json(config_to_json(cfg));
    EXPECT_EQ(config_fingerprint(again), config_fingerprint(cfg));
    EXPECT_EQ(config_to_json(again).dump(), config_to_json(cfg).dump());
}

TEST(Config, ErrorsNameTheKey) {
    auto expect_key = [](const std::string& text, const std::string& key) {
        try {
            (void)config_from_json(nlohmann::json::parse(text)).validate();
            FAIL() << "expected ConfigError for " << text;
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
        }
    };
    expect_key(R"({"graph": {"n": [100], "bogus": 1}})", "graph.bogus");
    expect_key(R"({"graph": {"n": [1000]}})", "eval.n_eval");
    expect_key(R"({"eval": {"replicates": 4}})", "eval.replicates");
    expect_key(R"({"model": {"activation": "tanh"}})", "tanh");
    expect_key(R"({"mismatch": {"kind": "edge", "gamma": [1.5]}})", "mismatch.gamma");
    expect_key(R"({"graph": {"n": []}})", "graph.n");
}

TEST(Config, LoadReportsLineOfSyntaxError) {
    const auto path = std::filesystem::temp_directory_path() / "manigap_bad_config.json";
    {
        std::ofstream out(path);
        out << "{\n  \"graph\": {\n    \"n\": [100,]\n  }\n}\n";
    }
    try {
        (void)load_config(path);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    std::filesystem::remove(path);
}
