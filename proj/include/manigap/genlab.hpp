#pragma once

#include "manigap/config.hpp"
#include "manigap/deformation.hpp"
#include "manigap/diffusion.hpp"
#include "manigap/geograph.hpp"
#include "manigap/gnn.hpp"
#include "manigap/pointcloud_io.hpp"
#include "manigap/signal.hpp"
#include "manigap/spectral.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <thread>
#include <tuple>
#include <vector>

namespace manigap {

// ---------------------------------------------------------------------------------------------
// Risks

/// Per-row risk: the configured loss, or 0/1 misclassification (logit > 0 for one column, argmax otherwise).
[[nodiscard]] inline Vector risk_rows(RiskMetric metric, const Loss& spec, const Matrix& pred, const Matrix& target) {
    if (metric == RiskMetric::Loss) return loss(spec, pred, target).rows;
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ConfigError("prediction and target shapes differ");
    Vector out(pred.rows());
    for (Index i = 0; i < pred.rows(); ++i) {
        if (pred.cols() == 1) {
            out[i] = (pred(i, 0) > 0.0) == (target(i, 0) > 0.5) ? 0.0 : 1.0;
        } else {
            Index p = 0, t = 0;
            pred.row(i).maxCoeff(&p);
            target.row(i).maxCoeff(&t);
            out[i] = p == t ? 0.0 : 1.0;
        }
    }
    return out;
}

/// (1/N) sum_i l([Phi]_i, [y]_i).
template <Diffusion D>
[[nodiscard]] double empirical_risk(const GnnModel& model, const D& diffusion, const Matrix& x, const Matrix& y,
                                    const Loss& spec, RiskMetric metric = RiskMetric::Loss) {
    const Matrix out = forward(model, diffusion, x);
    if (out.rows() != y.rows() || out.cols() != y.cols()) throw ConfigError("target shape does not match the model output");
    return risk_rows(metric, spec, out, y).mean();
}

[[nodiscard]] inline std::uint64_t replicate_seed(std::uint64_t seed, int replicate) {
    return replicate == 0 ? seed : derive_seed(seed, static_cast<std::uint64_t>(replicate));
}

[[nodiscard]] inline McEstimate summarize_replicates(const std::vector<double>& values) {
    McEstimate out{0.0, 0.0};
    if (values.empty()) return out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.std_error = std::sqrt(ss / static_cast<double>(values.size() - 1) / static_cast<double>(values.size()));
    }
    if (!std::isfinite(out.mean) || !std::isfinite(out.std_error)) throw Error("replicate risks are not finite");
    return out;
}

// ---------------------------------------------------------------------------------------------
// Node-level problem: input f, teacher target g, and the mismatch applied at evaluation

struct NodeProblem {
    ManifoldModel manifold;
    BandlimitedSignal f;
    LipschitzTarget g;

    [[nodiscard]] int d() const { return manifold.intrinsic_dim(); }
    [[nodiscard]] double target(const Vector& x) const { return g.threshold() ? g.label(x) : g(x); }
};

[[nodiscard]] inline NodeProblem make_problem(const ExperimentConfig& cfg) {
    const ManifoldModel m = cfg.manifold.build();
    TeacherSpec teacher;
    teacher.coefficients = cfg.signal.coefficients;
    teacher.cutoff = cfg.signal.cutoff;
    teacher.filter = FilterCoefficients(cfg.target.taps);
    teacher.threshold = cfg.target.threshold;
    teacher.n_pairs = cfg.target.n_pairs;
    teacher.seed = derive_seed(cfg.eval.master_seed, "teacher");
    return NodeProblem{m, BandlimitedSignal(m, cfg.signal.coefficients, cfg.signal.cutoff),
                       lipschitz_target(m, cfg.target.c_g, teacher)};
}

/// One evaluation-time perturbation. Deformation moves the points (features stay at the latent
/// points, targets follow the moved points); jitter moves only the graph; feature and edge
/// perturbations act on the graph signal and the edge set.
struct Mismatch {
    MismatchKind kind = MismatchKind::None;
    double nominal = 0.0;
    double certified = 0.0;
    std::optional<DeformationMap> tau;
    std::optional<ManifoldModel> domain;  // cross-manifold evaluation: sample here instead of the source

    [[nodiscard]] static Mismatch none() { return {}; }
};

[[nodiscard]] inline Mismatch make_mismatch(const ExperimentConfig& cfg, const ManifoldModel& m, double gamma) {
    Mismatch out;
    out.kind = cfg.mismatch.kind;
    out.nominal = gamma;
    out.certified = gamma;
    if (cfg.mismatch.kind == MismatchKind::Deformation) {
        out.tau = deform(m, cfg.mismatch.field, gamma, cfg.mismatch.n_check, derive_seed(cfg.eval.master_seed, "certify"));
        out.certified = out.tau->certificate().max();
    }
    return out;
}

struct EvalSample {
    GeometricGraph graph;
    Matrix x;
    Matrix y;
};

// Maps a point of `from` onto the same intrinsic coordinates of `to` (identity when equal).
inline Vector transfer_point(const ManifoldModel& from, const ManifoldModel& to, const Vector& p) {
    if (from == to) return p;
    if (from.kind() != to.kind()) throw ConfigError("cross-manifold evaluation needs manifolds of the same kind");
    return to.embed(from.coords(p));
}

[[nodiscard]] inline EvalSample node_sample(const NodeProblem& prob, const Mismatch& mm, Index n, double epsilon,
                                            std::uint64_t seed) {
    const ManifoldModel& domain = mm.domain ? *mm.domain : prob.manifold;
    PointCloud latent = sample_points(domain, static_cast<std::size_t>(n), seed);
    PointCloud graph_points = latent;
    PointCloud target_points = latent;
    if (mm.tau && !mm.tau->is_identity()) {
        graph_points = mm.tau->apply(latent);
        target_points = graph_points;
    } else if (mm.kind == MismatchKind::Jitter && mm.nominal > 0.0) {
        graph_points = gaussian_jitter(latent, mm.nominal, derive_seed(seed, "jitter"));
    }
    Matrix x(n, 1), y(n, 1);
    for (Index i = 0; i < n; ++i) {
        x(i, 0) = prob.f(transfer_point(domain, prob.manifold, latent.point(i)));
        y(i, 0) = prob.target(transfer_point(domain, prob.manifold, target_points.point(i)));
    }
    GeometricGraph graph = build_graph(graph_points, epsilon, prob.d());
    if (mm.kind == MismatchKind::Edge && mm.nominal > 0.0) graph = perturb_edges(graph, mm.nominal, derive_seed(seed, "edges"));
    if (mm.kind == MismatchKind::Feature && mm.nominal > 0.0) {
        // Zero a uniformly random fraction of node entries (the signal has one channel).
        Rng rng(derive_seed(seed, "features"));
        std::vector<Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Index{0});
        std::shuffle(order.begin(), order.end(), rng);
        const auto drop = static_cast<Index>(std::floor(mm.nominal * static_cast<double>(n)));
        for (Index k = 0; k < drop; ++k) x(order[static_cast<std::size_t>(k)], 0) = 0.0;
    }
    return {std::move(graph), std::move(x), std::move(y)};
}

struct EvalSummary {
    McEstimate risk;
    int disconnected = 0;  // replicates whose evaluation graph was disconnected
};

/// MC estimate of the statistical risk: fresh n_eval-point graphs, taps transferred unchanged.
[[nodiscard]] inline std::vector<EvalSummary> evaluate_models(const std::vector<const GnnModel*>& models,
                                                              const NodeProblem& prob, const Mismatch& mm, Index n_eval,
                                                              double epsilon, std::uint64_t seed, int replicates,
                                                              const Loss& spec, RiskMetric metric) {
    if (replicates < 1) throw ConfigError("need at least one replicate");
    std::vector<std::vector<double>> values(models.size());
    std::vector<EvalSummary> out(models.size());
    for (int r = 0; r < replicates; ++r) {
        const EvalSample s = node_sample(prob, mm, n_eval, epsilon, replicate_seed(seed, r));
        const ChebyshevDiffusion diff = ChebyshevDiffusion::from_graph(s.graph);
        const bool disconnected = !s.graph.connected();
        for (std::size_t m = 0; m < models.size(); ++m) {
            values[m].push_back(empirical_risk(*models[m], diff, s.x, s.y, spec, metric));
            if (disconnected) ++out[m].disconnected;
        }
    }
    for (std::size_t m = 0; m < models.size(); ++m) out[m].risk = summarize_replicates(values[m]);
    return out;
}

[[nodiscard]] inline McEstimate statistical_risk_mc(const GnnModel& model, const NodeProblem& prob, const Mismatch& mm,
                                                    const Loss& spec, Index n_eval, std::uint64_t seed,
                                                    int replicates = 8, const GraphSpec& graph = {},
                                                    RiskMetric metric = RiskMetric::Loss) {
    if (n_eval < 500) throw ConfigError("statistical_risk_mc requires n_eval >= 500");
    return evaluate_models({&model}, prob, mm, n_eval, graph.epsilon(n_eval, prob.d()), seed, replicates, spec, metric)
        .front()
        .risk;
}

// ---------------------------------------------------------------------------------------------
// Gap records

struct Cell {
    Index n = 0;
    double gamma = 0.0;               // nominal mismatch
    std::optional<double> c_l;        // nullopt = unconstrained
    int depth = 1;
    Index width = 1;

    [[nodiscard]] auto key() const {
        return std::make_tuple(n, gamma, c_l.has_value(), c_l.value_or(0.0), depth, width);
    }
    friend bool operator<(const Cell& a, const Cell& b) { return a.key() < b.key(); }
    friend bool operator==(const Cell& a, const Cell& b) { return a.key() == b.key(); }
};

struct GapRecord {
    std::uint64_t config_fingerprint = 0;
    Cell cell;
    Index n = 0;
    double gamma = 0.0;  // certified mismatch size
    double empirical_risk = std::numeric_limits<double>::quiet_NaN();
    double statistical_risk = std::numeric_limits<double>::quiet_NaN();
    double statistical_stderr = std::numeric_limits<double>::quiet_NaN();
    double gap = std::numeric_limits<double>::quiet_NaN();
    double max_over_checkpoints = std::numeric_limits<double>::quiet_NaN();  // reserved
    std::uint64_t seed = 0;
    int trial = 0;
    double realized_c_l = std::numeric_limits<double>::quiet_NaN();
    double realized_c_h = std::numeric_limits<double>::quiet_NaN();
    int eval_disconnected = 0;
    std::string error;

    [[nodiscard]] bool ok() const noexcept { return error.empty(); }
};

[[nodiscard]] inline std::uint64_t trial_seed(std::uint64_t master, int trial) {
    return derive_seed(master, "trial", static_cast<std::uint64_t>(trial));
}

[[nodiscard]] inline int worker_count(int configured) {
    if (const char* env = std::getenv("GENLAB_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw ConfigError("GENLAB_WORKERS must be a positive integer");
        return static_cast<int>(v);
    }
    if (configured > 0) return configured;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs job(i) for i in [0, count) on up to `workers` threads; exceptions propagate from the first failure.
inline void parallel_for(int count, int workers, const std::function<void(int)>& job) {
    workers = std::max(1, std::min(workers, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

namespace detail {

struct TrainKey {
    Index n;
    std::optional<double> c_l;
    int depth;
    Index width;
    [[nodiscard]] auto key() const { return std::make_tuple(n, c_l.has_value(), c_l.value_or(0.0), depth, width); }
    friend bool operator<(const TrainKey& a, const TrainKey& b) { return a.key() < b.key(); }
};

struct Trained {
    GnnModel model;
    double empirical_risk = 0.0;
    ModelCertificate certificate;
    std::string error;
};

inline GnnModel node_model(const ExperimentConfig& cfg, const TrainKey& key, int d, std::uint64_t seed) {
    std::vector<Index> widths{1};
    for (int l = 0; l < key.depth; ++l) widths.push_back(key.width);
    GnnModel m = init_model(widths, cfg.model.k, 1, cfg.model.activation, Task::Node, derive_seed(seed, "init"));
    if (key.c_l) m.budget = LipschitzBudget{*key.c_l, d, cfg.model.grid, cfg.model.penalty_weight};
    return m;
}

inline Trained train_node(const ExperimentConfig& cfg, const NodeProblem& prob, const TrainKey& key, std::uint64_t seed) {
    Trained out;
    try {
        const EvalSample s = node_sample(prob, Mismatch::none(), key.n, cfg.graph.epsilon(key.n, prob.d()),
                                         derive_seed(seed, "train-cloud"));
        const ChebyshevDiffusion diff = ChebyshevDiffusion::from_graph(s.graph);
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(seed, "train");
        auto result = train(node_model(cfg, key, prob.d(), seed), std::vector<Example<ChebyshevDiffusion>>{{&diff, s.x, s.y}},
                            tc, cfg.model.loss, prob.d(), cfg.model.grid);
        out.model = std::move(result.model);
        out.certificate = std::move(result.certificate);
        out.empirical_risk = empirical_risk(out.model, diff, s.x, s.y, cfg.model.loss, cfg.model.metric);
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

inline std::vector<Cell> cells_of(const ExperimentConfig& cfg) {
    std::vector<Cell> cells;
    for (Index n : cfg.graph.n)
        for (double g : cfg.mismatch.gamma)
            for (const auto& c : cfg.model.c_l)
                for (int depth : cfg.model.depth)
                    for (Index width : cfg.model.width) cells.push_back(Cell{n, g, c, depth, width});
    std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    return cells;
}

// One trial over a set of cells: each distinct architecture/N is trained once, then every trained
// model is scored on shared evaluation graphs for each mismatch level.
inline std::vector<GapRecord> run_trial(const ExperimentConfig& cfg, const NodeProblem& prob, const std::vector<Cell>& cells,
                                        const std::map<double, Mismatch>& mismatches, int trial, std::uint64_t fingerprint) {
    const std::uint64_t seed = trial_seed(cfg.eval.master_seed, trial);
    std::map<TrainKey, Trained> trained;
    for (const auto& c : cells) {
        const TrainKey key{c.n, c.c_l, c.depth, c.width};
        if (!trained.count(key)) trained.emplace(key, train_node(cfg, prob, key, seed));
    }
    std::vector<GapRecord> out;
    const double eps_eval = cfg.graph.epsilon(cfg.eval.n_eval, prob.d());
    for (const auto& [gamma, mm] : mismatches) {
        std::vector<const GnnModel*> models;
        std::vector<TrainKey> keys;
        for (const auto& [key, t] : trained)
            if (t.error.empty()) {
                models.push_back(&t.model);
                keys.push_back(key);
            }
        std::vector<EvalSummary> evals;
        std::string eval_error;
        if (!models.empty()) {
            try {
                evals = evaluate_models(models, prob, mm, cfg.eval.n_eval, eps_eval, derive_seed(seed, "eval"),
                                        cfg.eval.replicates, cfg.model.loss, cfg.model.metric);
            } catch (const std::exception& e) {
                eval_error = e.what();
            }
        }
        for (const auto& c : cells) {
            if (c.gamma != gamma) continue;
            const TrainKey key{c.n, c.c_l, c.depth, c.width};
            const Trained& t = trained.at(key);
            GapRecord rec;
            rec.config_fingerprint = fingerprint;
            rec.cell = c;
            rec.n = c.n;
            rec.gamma = mm.certified;
            rec.seed = seed;
            rec.trial = trial;
            if (!t.error.empty()) {
                rec.error = "training failed: " + t.error;
            } else if (!eval_error.empty()) {
                rec.error = "evaluation failed: " + eval_error;
            } else {
                const auto idx = static_cast<std::size_t>(std::find_if(keys.begin(), keys.end(), [&](const TrainKey& k) {
                                                              return !(k < key) && !(key < k);
                                                          }) - keys.begin());
                rec.empirical_risk = t.empirical_risk;
                rec.statistical_risk = evals[idx].risk.mean;
                rec.statistical_stderr = evals[idx].risk.std_error;
                rec.gap = std::abs(rec.statistical_risk - rec.empirical_risk);
                rec.eval_disconnected = evals[idx].disconnected;
                rec.realized_c_l = t.certificate.max_c_l;
                rec.realized_c_h = t.certificate.max_c_h;
            }
            out.push_back(std::move(rec));
        }
    }
    return out;
}

inline std::map<double, Mismatch> mismatches_of(const ExperimentConfig& cfg, const ManifoldModel& m,
                                                const std::vector<Cell>& cells) {
    std::map<double, Mismatch> out;
    for (const auto& c : cells)
        if (!out.count(c.gamma)) out.emplace(c.gamma, make_mismatch(cfg, m, c.gamma));
    return out;
}

inline void sort_records(std::vector<GapRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const GapRecord& a, const GapRecord& b) {
        if (a.cell < b.cell) return true;
        if (b.cell < a.cell) return false;
        return a.trial < b.trial;
    });
}

}  // namespace detail

/// Trains on a fresh N-point graph and scores the trained model; deterministic per (config, trial).
[[nodiscard]] inline GapRecord measure_gap(const ExperimentConfig& cfg, const Cell& cell, int trial) {
    cfg.validate();
    const NodeProblem prob = make_problem(cfg);
    const std::vector<Cell> cells{cell};
    auto recs = detail::run_trial(cfg, prob, cells, detail::mismatches_of(cfg, prob.manifold, cells), trial,
                                  config_fingerprint(cfg));
    return recs.front();
}

/// Full factorial over the config lists x trials; records sorted by cell key then trial.
[[nodiscard]] inline std::vector<GapRecord> sweep(const ExperimentConfig& cfg, int workers = 0) {
    cfg.validate();
    const NodeProblem prob = make_problem(cfg);
    const auto cells = detail::cells_of(cfg);
    const auto mismatches = detail::mismatches_of(cfg, prob.manifold, cells);
    const std::uint64_t fp = config_fingerprint(cfg);
    std::vector<std::vector<GapRecord>> per_trial(static_cast<std::size_t>(cfg.eval.trials));
    parallel_for(cfg.eval.trials, worker_count(workers > 0 ? workers : cfg.eval.workers), [&](int t) {
        per_trial[static_cast<std::size_t>(t)] = detail::run_trial(cfg, prob, cells, mismatches, t, fp);
    });
    std::vector<GapRecord> out;
    for (auto& v : per_trial) out.insert(out.end(), v.begin(), v.end());
    detail::sort_records(out);
    return out;
}

struct CellSummary {
    Cell cell;
    double mean_gap = 0.0;
    double std_gap = 0.0;
    double mean_gamma = 0.0;
    int count = 0;
    int failures = 0;
};

[[nodiscard]] inline std::vector<CellSummary> summarize(const std::vector<GapRecord>& records) {
    std::map<Cell, std::vector<const GapRecord*>> groups;
    for (const auto& r : records) groups[r.cell].push_back(&r);
    std::vector<CellSummary> out;
    for (const auto& [cell, recs] : groups) {
        CellSummary s{cell, 0.0, 0.0, 0.0, 0, 0};
        for (const auto* r : recs) {
            if (!r->ok()) {
                ++s.failures;
                continue;
            }
            s.mean_gap += r->gap;
            s.mean_gamma += r->gamma;
            ++s.count;
        }
        if (s.count > 0) {
            s.mean_gap /= s.count;
            s.mean_gamma /= s.count;
            double ss = 0.0;
            for (const auto* r : recs)
                if (r->ok()) ss += (r->gap - s.mean_gap) * (r->gap - s.mean_gap);
            s.std_gap = s.count > 1 ? std::sqrt(ss / (s.count - 1)) : 0.0;
        } else {
            s.mean_gap = s.std_gap = s.mean_gamma = std::numeric_limits<double>::quiet_NaN();
        }
        out.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Rank statistics and bound-shape fit

[[nodiscard]] inline std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
        i = j + 1;
    }
    return r;
}

/// Spearman rank correlation with average ranks for ties.
[[nodiscard]] inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw ConfigError("spearman needs two equal-length samples of size >= 2");
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i] / n;
        mb += rb[i] / n;
    }
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

struct BoundFit {
    std::array<double, 4> coefficients{};  // a: eps/sqrt(N), b: sqrt(log(1/delta))/N, c: (log N/N)^(1/d), e: gamma
    double r2 = 0.0;
    int d = 1;
    double delta = 0.1;
    double condition = 0.0;  // 2-norm condition number of the column-scaled design
    int rank = 0;
    bool rank_deficient = false;
    std::size_t cells = 0;

    [[nodiscard]] double predict(Index n, double gamma, double epsilon) const {
        const double nn = static_cast<double>(n);
        return coefficients[0] * epsilon / std::sqrt(nn) + coefficients[1] * std::sqrt(std::log(1.0 / delta)) / nn +
               coefficients[2] * std::pow(std::log(nn) / nn, 1.0 / d) + coefficients[3] * gamma;
    }
};

/// Regressor row for one (N, gamma) cell.
[[nodiscard]] inline std::array<double, 4> bound_regressors(Index n, double gamma, int d, double delta, double c = 1.0) {
    const double nn = static_cast<double>(n);
    const double eps = std::pow(std::log(c / delta) / nn, 1.0 / (d + 4));
    return {eps / std::sqrt(nn), std::sqrt(std::log(1.0 / delta)) / nn, std::pow(std::log(nn) / nn, 1.0 / d), gamma};
}

/// Exact nonnegative least squares for few columns: best feasible solution over all active sets.
[[nodiscard]] inline Vector nnls_small(const Matrix& a, const Vector& b) {
    const Index p = a.cols();
    if (p > 20) throw ConfigError("nnls_small supports at most 20 columns");
    Vector best = Vector::Zero(p);
    double best_res = b.squaredNorm();
    for (std::uint32_t mask = 1; mask < (1u << p); ++mask) {
        std::vector<Index> cols;
        for (Index j = 0; j < p; ++j)
            if (mask & (1u << j)) cols.push_back(j);
        Matrix sub(a.rows(), static_cast<Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Index>(k)) = a.col(cols[k]);
        const Vector x = sub.colPivHouseholderQr().solve(b);
        if ((x.array() < 0.0).any() || !x.allFinite()) continue;
        const double res = (sub * x - b).squaredNorm();
        if (res < best_res * (1.0 - 1e-14)) {
            best_res = res;
            best.setZero();
            for (std::size_t k = 0; k < cols.size(); ++k) best[cols[k]] = x[static_cast<Index>(k)];
        }
    }
    return best;
}

/// NNLS fit of mean gaps per (N, gamma) cell on the four bound terms.
[[nodiscard]] inline BoundFit bound_shape_fit(const std::vector<std::tuple<Index, double, double>>& cells, int d,
                                              double delta, double c = 1.0) {
    std::set<std::pair<Index, double>> distinct;
    for (const auto& [n, g, gap] : cells) distinct.insert({n, g});
    if (distinct.size() < 8)
        throw ConfigError("bound_shape_fit needs >= 8 distinct (N, gamma) cells, got " + std::to_string(distinct.size()));
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    const auto rows = static_cast<Index>(cells.size());
    Matrix a(rows, 4);
    Vector b(rows);
    for (Index i = 0; i < rows; ++i) {
        const auto& [n, g, gap] = cells[static_cast<std::size_t>(i)];
        const auto r = bound_regressors(n, g, d, delta, c);
        for (Index j = 0; j < 4; ++j) a(i, j) = r[static_cast<std::size_t>(j)];
        b[i] = gap;
    }
    // Column scaling keeps the active-set solves well conditioned; coefficients are unscaled after.
    Vector scale(4);
    for (Index j = 0; j < 4; ++j) scale[j] = a.col(j).norm() > 0.0 ? a.col(j).norm() : 1.0;
    const Matrix as = a * scale.cwiseInverse().asDiagonal();
    BoundFit fit;
    fit.d = d;
    fit.delta = delta;
    fit.cells = distinct.size();
    Eigen::JacobiSVD<Matrix> svd(as);
    const Vector sv = svd.singularValues();
    fit.rank = static_cast<int>((sv.array() > sv[0] * 1e-12).count());
    fit.condition = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1] : std::numeric_limits<double>::infinity();
    fit.rank_deficient = fit.rank < 4;
    const Vector xs = nnls_small(as, b);
    for (Index j = 0; j < 4; ++j) fit.coefficients[static_cast<std::size_t>(j)] = xs[j] / scale[j];
    const double mean = b.mean();
    const double ss_tot = (b.array() - mean).square().sum();
    const double ss_res = (as * xs - b).squaredNorm();
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
    return fit;
}

[[nodiscard]] inline BoundFit bound_shape_fit(const std::vector<GapRecord>& records, int d, double delta, double c = 1.0) {
    std::map<std::pair<Index, double>, std::pair<double, int>> acc;
    for (const auto& r : records) {
        if (!r.ok()) continue;
        auto& a = acc[{r.n, r.cell.gamma}];
        a.first += r.gap;
        ++a.second;
    }
    std::vector<std::tuple<Index, double, double>> cells;
    for (const auto& [key, v] : acc) {
        // Regress on the certified mismatch size averaged over the cell.
        double gamma = 0.0;
        int count = 0;
        for (const auto& r : records)
            if (r.ok() && r.n == key.first && r.cell.gamma == key.second) {
                gamma += r.gamma;
                ++count;
            }
        cells.emplace_back(key.first, gamma / count, v.first / v.second);
    }
    return bound_shape_fit(cells, d, delta, c);
}

// ---------------------------------------------------------------------------------------------
// Graph level

struct ClassSource {
    std::string name;
    std::optional<ManifoldModel> manifold;
    PointCloud cloud;  // file classes
    int d = 2;
};

struct GraphLevelRecord {
    std::uint64_t config_fingerprint = 0;
    double nominal_gamma = 0.0;
    double gamma = 0.0;
    int trial = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> class_names;
    std::vector<double> class_empirical;    // per-class mean risk on training graphs
    std::vector<double> class_statistical;  // per-class mean risk on fresh mismatched graphs
    double empirical_risk = 0.0;            // sum over classes
    double statistical_risk = 0.0;
    double statistical_stderr = 0.0;
    double gap = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double realized_c_l = 0.0;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<ClassSource> class_sources(const ExperimentConfig& cfg) {
    std::vector<ClassSource> out;
    for (const auto& c : cfg.graph_level.classes) {
        ClassSource s;
        s.name = c.name;
        s.d = c.intrinsic_dim;
        if (c.manifold) {
            s.manifold = c.manifold->build();
        } else {
            if (!std::filesystem::exists(*c.file)) throw ConfigError("class '" + c.name + "': file not found: " + *c.file);
            s.cloud = load_point_cloud(*c.file);
            if (s.cloud.size() < cfg.graph_level.n_per_graph)
                throw ConfigError("class '" + c.name + "': " + *c.file + " has fewer than n_per_graph points");
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline Index feature_width(const std::vector<ClassSource>& classes) {
    Index w = 0;
    for (const auto& c : classes) w = std::max(w, c.manifold ? static_cast<Index>(c.manifold->ambient_dim()) : c.cloud.ambient_dim());
    return w;
}

struct GraphItem {
    ChebyshevDiffusion diffusion;
    Matrix x;
    Matrix y;
    int label;
};

inline GraphItem graph_item(const ClassSource& c, int label, int classes, Index width, Index n, const GraphSpec& spec,
                            const Mismatch& mm, std::uint64_t seed) {
    PointCloud cloud = c.manifold ? sample_points(*c.manifold, static_cast<std::size_t>(n), seed) : subsample(c.cloud, n, seed);
    if (mm.tau && !mm.tau->is_identity() && c.manifold) cloud = mm.tau->apply(cloud);
    if (mm.kind == MismatchKind::Jitter && mm.nominal > 0.0) cloud = gaussian_jitter(cloud, mm.nominal, derive_seed(seed, "jitter"));
    GeometricGraph g = build_graph(cloud, spec.epsilon(n, c.d), c.d);
    if (mm.kind == MismatchKind::Edge && mm.nominal > 0.0) g = perturb_edges(g, mm.nominal, derive_seed(seed, "edges"));
    Matrix x = pad_columns(cloud.points, width);
    if (mm.kind == MismatchKind::Feature && mm.nominal > 0.0) x = perturb_features(x, mm.nominal, derive_seed(seed, "features"));
    Matrix y = Matrix::Zero(1, classes);
    y(0, label) = 1.0;
    return {ChebyshevDiffusion::from_graph(g), std::move(x), std::move(y), label};
}

}  // namespace detail

/// Graph classification over K classes with node-mean pooling; one record per (gamma, trial).
[[nodiscard]] inline std::vector<GraphLevelRecord> graph_level_gap(const ExperimentConfig& cfg, int workers = 0) {
    cfg.validate();
    if (cfg.experiment != ExperimentKind::Graph) throw ConfigError("graph_level_gap needs experiment = graph");
    if (cfg.model.depth.size() != 1 || cfg.model.width.size() != 1 || cfg.model.c_l.size() != 1)
        throw ConfigError("graph-level runs take a single architecture");
    const auto classes = detail::class_sources(cfg);
    const int k = static_cast<int>(classes.size());
    const Index width = detail::feature_width(classes);
    const Index n = cfg.graph_level.n_per_graph;
    const std::uint64_t fp = config_fingerprint(cfg);

    std::vector<std::string> warnings;
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) {
            const auto& ca = cfg.graph_level.classes[static_cast<std::size_t>(a)];
            const auto& cb = cfg.graph_level.classes[static_cast<std::size_t>(b)];
            const bool same = (ca.manifold && cb.manifold && ca.manifold->build() == cb.manifold->build()) ||
                              (ca.file && cb.file && *ca.file == *cb.file);
            if (same) warnings.push_back("classes '" + ca.name + "' and '" + cb.name + "' are generated by the same model");
        }

    // Per-class deformations need a manifold; file classes only support jitter, feature and edge mismatch.
    std::vector<std::map<double, Mismatch>> mismatch(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c)
        for (double g : cfg.mismatch.gamma) {
            if (cfg.mismatch.kind == MismatchKind::Deformation && !classes[static_cast<std::size_t>(c)].manifold)
                throw ConfigError("class '" + classes[static_cast<std::size_t>(c)].name + "': deformation needs a manifold class");
            mismatch[static_cast<std::size_t>(c)].emplace(
                g, cfg.mismatch.kind == MismatchKind::Deformation ? make_mismatch(cfg, *classes[static_cast<std::size_t>(c)].manifold, g)
                                                                  : Mismatch{cfg.mismatch.kind, g, g, std::nullopt, std::nullopt});
        }

    std::vector<std::vector<GraphLevelRecord>> per_trial(static_cast<std::size_t>(cfg.eval.trials));
    parallel_for(cfg.eval.trials, worker_count(workers > 0 ? workers : cfg.eval.workers), [&](int trial) {
        const std::uint64_t seed = trial_seed(cfg.eval.master_seed, trial);
        std::vector<detail::GraphItem> train_items;
        for (int c = 0; c < k; ++c)
            for (int gi = 0; gi < cfg.graph_level.train_graphs_per_class; ++gi)
                train_items.push_back(detail::graph_item(classes[static_cast<std::size_t>(c)], c, k, width, n, cfg.graph,
                                                         Mismatch::none(),
                                                         derive_seed(seed, "train-graph", static_cast<std::uint64_t>(c * 100003 + gi))));
        std::vector<Example<ChebyshevDiffusion>> data;
        for (const auto& it : train_items) data.push_back({&it.diffusion, it.x, it.y});
        std::vector<Index> widths{width};
        for (int l = 0; l < cfg.model.depth.front(); ++l) widths.push_back(cfg.model.width.front());
        GnnModel model = init_model(widths, cfg.model.k, k, cfg.model.activation, Task::Graph, derive_seed(seed, "init"));
        if (cfg.model.c_l.front()) model.budget = LipschitzBudget{*cfg.model.c_l.front(), classes.front().d, cfg.model.grid, cfg.model.penalty_weight};
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(seed, "train");
        const auto result = train(model, data, tc, cfg.model.loss, classes.front().d, cfg.model.grid);

        auto score = [&](const detail::GraphItem& it, double& correct) {
            const Matrix out = forward(result.model, it.diffusion, it.x);
            correct += risk_rows(RiskMetric::ZeroOne, cfg.model.loss, out, it.y)[0] == 0.0 ? 1.0 : 0.0;
            return risk_rows(cfg.model.metric, cfg.model.loss, out, it.y)[0];
        };
        std::vector<double> class_emp(static_cast<std::size_t>(k), 0.0);
        double train_correct = 0.0;
        for (const auto& it : train_items) class_emp[static_cast<std::size_t>(it.label)] += score(it, train_correct);
        for (auto& v : class_emp) v /= cfg.graph_level.train_graphs_per_class;
        double emp = 0.0;
        for (double v : class_emp) emp += v;

        for (double g : cfg.mismatch.gamma) {
            GraphLevelRecord rec;
            rec.config_fingerprint = fp;
            rec.nominal_gamma = g;
            rec.trial = trial;
            rec.seed = seed;
            rec.warnings = warnings;
            if (g == 0.0 && k > 1 && !warnings.empty()) rec.warnings.push_back("class collision at gamma = 0");
            for (const auto& c : classes) rec.class_names.push_back(c.name);
            rec.class_empirical = class_emp;
            rec.empirical_risk = emp;
            rec.train_accuracy = train_correct / static_cast<double>(train_items.size());
            rec.realized_c_l = result.certificate.max_c_l;
            std::vector<double> class_stat(static_cast<std::size_t>(k), 0.0);
            std::vector<double> rep_totals;
            double test_correct = 0.0;
            int test_count = 0;
            for (int r = 0; r < cfg.eval.replicates; ++r) {
                double total = 0.0;
                for (int c = 0; c < k; ++c) {
                    const Mismatch& mm = mismatch[static_cast<std::size_t>(c)].at(g);
                    rec.gamma = std::max(rec.gamma, mm.certified);
                    double class_sum = 0.0;
                    for (int gi = 0; gi < cfg.graph_level.test_graphs_per_class; ++gi) {
                        // Test clouds are shared across gamma so mismatch levels are compared on the same draws.
                        const auto item = detail::graph_item(
                            classes[static_cast<std::size_t>(c)], c, k, width, n, cfg.graph, mm,
                            derive_seed(seed, "test-graph", static_cast<std::uint64_t>((r * 1009 + c) * 100003 + gi)));
                        class_sum += score(item, test_correct);
                        ++test_count;
                    }
                    const double class_mean = class_sum / cfg.graph_level.test_graphs_per_class;
                    class_stat[static_cast<std::size_t>(c)] += class_mean / cfg.eval.replicates;
                    total += class_mean;
                }
                rep_totals.push_back(total);
            }
            const McEstimate est = summarize_replicates(rep_totals);
            rec.class_statistical = class_stat;
            rec.statistical_risk = est.mean;
            rec.statistical_stderr = est.std_error;
            rec.gap = std::abs(rec.statistical_risk - rec.empirical_risk);
            rec.test_accuracy = test_correct / test_count;
            per_trial[static_cast<std::size_t>(trial)].push_back(std::move(rec));
        }
    });
    std::vector<GraphLevelRecord> out;
    for (auto& v : per_trial) out.insert(out.end(), v.begin(), v.end());
    std::stable_sort(out.begin(), out.end(), [](const GraphLevelRecord& a, const GraphLevelRecord& b) {
        return std::tie(a.nominal_gamma, a.trial) < std::tie(b.nominal_gamma, b.trial);
    });
    return out;
}

// ---------------------------------------------------------------------------------------------
// Out-of-distribution

struct OodResult {
    ManifoldSpec target;
    std::vector<GapRecord> records;  // one per trial
    double mean_gap = 0.0;
    double spectral_distance = 0.0;  // between training-size graphs of source and target
};

/// Trains on the config manifold and scores on each target manifold of the same kind.
[[nodiscard]] inline std::vector<OodResult> ood_gap(const ExperimentConfig& cfg, const std::vector<ManifoldSpec>& targets,
                                                    Index spectral_modes = 20, int workers = 0) {
    cfg.validate();
    if (cfg.graph.n.size() != 1 || cfg.model.depth.size() != 1 || cfg.model.width.size() != 1 || cfg.model.c_l.size() != 1)
        throw ConfigError("ood runs take a single N and architecture");
    const NodeProblem prob = make_problem(cfg);
    const Cell cell{cfg.graph.n.front(), cfg.mismatch.gamma.front(), cfg.model.c_l.front(), cfg.model.depth.front(),
                    cfg.model.width.front()};
    const std::uint64_t fp = config_fingerprint(cfg);
    std::vector<OodResult> out;
    std::vector<Mismatch> mms;
    for (const auto& t : targets) {
        const ManifoldModel tm = t.build();
        if (tm.kind() != prob.manifold.kind()) throw ConfigError("ood target must be the same manifold kind as the source");
        Mismatch mm = make_mismatch(cfg, prob.manifold, cell.gamma);
        mm.domain = tm;
        mms.push_back(std::move(mm));
        out.push_back(OodResult{t, {}, 0.0, 0.0});
    }
    std::vector<std::vector<GapRecord>> per_trial(static_cast<std::size_t>(cfg.eval.trials));
    parallel_for(cfg.eval.trials, worker_count(workers > 0 ? workers : cfg.eval.workers), [&](int trial) {
        auto& recs = per_trial[static_cast<std::size_t>(trial)];
        const std::uint64_t seed = trial_seed(cfg.eval.master_seed, trial);
        const detail::TrainKey key{cell.n, cell.c_l, cell.depth, cell.width};
        const auto t = detail::train_node(cfg, prob, key, seed);
        std::vector<const GnnModel*> models{&t.model};
        for (const auto& mm : mms) {
            GapRecord rec;
            rec.config_fingerprint = fp;
            rec.cell = cell;
            rec.n = cell.n;
            rec.gamma = mm.certified;
            rec.seed = seed;
            rec.trial = trial;
            if (!t.error.empty()) {
                rec.error = "training failed: " + t.error;
            } else {
                const auto ev = evaluate_models(models, prob, mm, cfg.eval.n_eval, cfg.graph.epsilon(cfg.eval.n_eval, prob.d()),
                                                derive_seed(seed, "eval"), cfg.eval.replicates, cfg.model.loss, cfg.model.metric)
                                    .front();
                rec.empirical_risk = t.empirical_risk;
                rec.statistical_risk = ev.risk.mean;
                rec.statistical_stderr = ev.risk.std_error;
                rec.gap = std::abs(rec.statistical_risk - rec.empirical_risk);
                rec.eval_disconnected = ev.disconnected;
                rec.realized_c_l = t.certificate.max_c_l;
                rec.realized_c_h = t.certificate.max_c_h;
            }
            recs.push_back(std::move(rec));
        }
    });
    for (std::size_t i = 0; i < out.size(); ++i) {
        int ok = 0;
        for (const auto& trial : per_trial) {
            out[i].records.push_back(trial[i]);
            if (trial[i].ok()) {
                out[i].mean_gap += trial[i].gap;
                ++ok;
            }
        }
        out[i].mean_gap = ok ? out[i].mean_gap / ok : std::numeric_limits<double>::quiet_NaN();
        // Proxy for the operator distance: eigenvalue gap between training-size graphs.
        const std::uint64_t s = derive_seed(cfg.eval.master_seed, "ood-spectrum");
        const Index n = cell.n;
        const double eps = cfg.graph.epsilon(n, prob.d());
        const auto ga = build_graph(sample_points(prob.manifold, static_cast<std::size_t>(n), s), eps, prob.d());
        const auto gb = build_graph(sample_points(targets[i].build(), static_cast<std::size_t>(n), s), eps, prob.d());
        out[i].spectral_distance = spectral_distance(graph_eigenvalues(ga, spectral_modes), graph_eigenvalues(gb, spectral_modes),
                                                     spectral_modes);
    }
    return out;
}

}  // namespace manigap
