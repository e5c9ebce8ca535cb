#pragma once

#include "manigap/checkpoint.hpp"
#include "manigap/deformation.hpp"
#include "manigap/geograph.hpp"
#include "manigap/gnn.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace manigap {

enum class MismatchKind { None, Deformation, Feature, Edge, Jitter };
enum class RiskMetric { Loss, ZeroOne };

struct ManifoldSpec {
    ManifoldKind kind = ManifoldKind::Circle;
    double radius = 1.0;
    double side_u = 2.0 * kPi;
    double side_v = 2.0 * kPi;
    double tilt = 0.0;

    [[nodiscard]] ManifoldModel build() const {
        switch (kind) {
            case ManifoldKind::Circle: return ManifoldModel::circle(radius, tilt);
            case ManifoldKind::Sphere: return ManifoldModel::sphere(radius, tilt);
            case ManifoldKind::FlatTorus: return ManifoldModel::flat_torus(side_u, side_v, tilt);
        }
        throw ConfigError("unknown manifold kind");
    }
};

struct SignalSpec {
    std::map<std::size_t, double> coefficients{{2, 1.0}};  // 1-based eigen-index -> coefficient
    double cutoff = 1e300;
};

struct TargetSpec {
    std::vector<double> taps{1.0};  // teacher filter on the continuum operator
    double c_g = 10.0;
    std::optional<double> threshold;  // binary labels g > threshold
    std::size_t n_pairs = 2000;
};

struct MismatchSpec {
    MismatchKind kind = MismatchKind::None;
    std::vector<double> gamma{0.0};
    DeformationField field{FieldKind::Gradient, {{2, 1.0}}};
    std::size_t n_check = 1000;
};

struct GraphSpec {
    std::vector<Index> n{200};
    double epsilon_scale = 1.0;
    double delta = 0.1;
    double c = 1.0;

    [[nodiscard]] double epsilon(Index nodes, int d) const { return default_epsilon(nodes, d, delta, c, epsilon_scale); }
};

struct ModelSpec {
    std::vector<int> depth{2};
    std::vector<Index> width{8};
    int k = 4;
    Activation activation = Activation::Relu;
    std::vector<std::optional<double>> c_l{std::nullopt};  // nullopt = unconstrained
    double penalty_weight = 1.0;
    LambdaGrid grid{};
    Loss loss{LossKind::Huber, 0.1};
    RiskMetric metric = RiskMetric::Loss;
};

struct EvalSpec {
    Index n_eval = 3200;
    int replicates = 8;
    double delta = 0.1;
    int trials = 1;
    std::uint64_t master_seed = 0;
    int workers = 0;  // 0 = hardware concurrency
};

struct ClassSpec {
    std::string name;
    std::optional<ManifoldSpec> manifold;
    std::optional<std::string> file;  // OFF or XYZ-CSV cloud; resolved relative to the config
    int intrinsic_dim = 2;
};

struct GraphLevelSpec {
    std::vector<ClassSpec> classes;
    Index n_per_graph = 40;
    int train_graphs_per_class = 20;
    int test_graphs_per_class = 20;
};

enum class ExperimentKind { Node, Graph };

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::Node;
    ManifoldSpec manifold;
    SignalSpec signal;
    TargetSpec target;
    MismatchSpec mismatch;
    GraphSpec graph;
    ModelSpec model;
    TrainConfig train;
    EvalSpec eval;
    GraphLevelSpec graph_level;
    std::vector<ManifoldSpec> ood_targets;

    void validate() const {
        auto bad = [](const std::string& key, const std::string& what) { throw ConfigError("config key '" + key + "': " + what); };
        if (graph.n.empty()) bad("graph.n", "list must be nonempty");
        for (Index n : graph.n)
            if (n < 2) bad("graph.n", "node counts must be >= 2");
        if (!(graph.delta > 0.0 && graph.delta < 1.0)) bad("graph.delta", "must lie in (0, 1)");
        if (!(graph.c > graph.delta)) bad("graph.c", "must exceed delta");
        if (!(graph.epsilon_scale > 0.0)) bad("graph.epsilon_scale", "must be > 0");
        if (mismatch.gamma.empty()) bad("mismatch.gamma", "list must be nonempty");
        for (double g : mismatch.gamma)
            if (!(g >= 0.0) || !std::isfinite(g)) bad("mismatch.gamma", "values must be finite and >= 0");
        if (mismatch.kind == MismatchKind::Feature || mismatch.kind == MismatchKind::Edge)
            for (double g : mismatch.gamma)
                if (g > 1.0) bad("mismatch.gamma", "perturbation fractions must lie in [0, 1]");
        if (model.depth.empty() || model.width.empty() || model.c_l.empty())
            bad("model", "depth, width and c_l lists must be nonempty");
        for (int d : model.depth)
            if (d < 1) bad("model.depth", "must be >= 1");
        for (Index w : model.width)
            if (w < 1) bad("model.width", "must be >= 1");
        for (const auto& c : model.c_l)
            if (c && !(*c > 0.0)) bad("model.c_l", "constraints must be > 0 (null = unconstrained)");
        if (model.k < 1) bad("model.k", "must be >= 1");
        if (!(model.penalty_weight >= 0.0)) bad("model.penalty_weight", "must be >= 0");
        try {
            model.grid.validate();
        } catch (const ConfigError& e) {
            bad("model.lambda_min", e.what());
        }
        if (model.loss.kind == LossKind::Huber && !(model.loss.delta > 0.0)) bad("model.loss.delta", "must be > 0");
        if (!(train.learning_rate > 0.0)) bad("train.learning_rate", "must be > 0");
        if (train.epochs < 1) bad("train.epochs", "must be >= 1");
        if (eval.trials < 1) bad("eval.trials", "must be >= 1");
        if (eval.replicates < 8) bad("eval.replicates", "must be >= 8");
        if (!(eval.delta > 0.0 && eval.delta < 1.0)) bad("eval.delta", "must lie in (0, 1)");
        if (eval.workers < 0) bad("eval.workers", "must be >= 0");
        if (experiment == ExperimentKind::Node) {
            const Index max_n = *std::max_element(graph.n.begin(), graph.n.end());
            if (eval.n_eval < 4 * max_n) bad("eval.n_eval", "must be >= 4 * max(graph.n) = " + std::to_string(4 * max_n));
            if (eval.n_eval < 500) bad("eval.n_eval", "must be >= 500");
            if (signal.coefficients.empty()) bad("signal.coefficients", "must be nonempty");
            if (target.taps.empty()) bad("target.taps", "must be nonempty");
            if (!(target.c_g > 0.0)) bad("target.c_g", "must be > 0");
        } else {
            if (graph_level.classes.empty()) bad("classes", "need at least one class");
            for (std::size_t i = 0; i < graph_level.classes.size(); ++i) {
                const auto& c = graph_level.classes[i];
                if (c.manifold.has_value() == c.file.has_value())
                    bad("classes[" + std::to_string(i) + "]", "give exactly one of 'manifold' or 'file'");
                if (c.intrinsic_dim < 1) bad("classes[" + std::to_string(i) + "].intrinsic_dim", "must be >= 1");
            }
            if (graph_level.n_per_graph < 2) bad("graph.n_per_graph", "must be >= 2");
            if (graph_level.train_graphs_per_class < 1) bad("train_graphs_per_class", "must be >= 1");
            if (graph_level.test_graphs_per_class < 1) bad("test_graphs_per_class", "must be >= 1");
        }
    }
};

// ---------------------------------------------------------------------------------------------
// JSON

namespace detail {

using nlohmann::json;

inline std::string to_string(MismatchKind k) {
    switch (k) {
        case MismatchKind::None: return "none";
        case MismatchKind::Deformation: return "deformation";
        case MismatchKind::Feature: return "feature";
        case MismatchKind::Edge: return "edge";
        case MismatchKind::Jitter: return "jitter";
    }
    return "?";
}

inline std::string loss_name(LossKind k) {
    switch (k) {
        case LossKind::L1: return "l1";
        case LossKind::Huber: return "huber";
        case LossKind::CrossEntropy: return "cross_entropy";
    }
    return "?";
}

// Strict object reader: every key must be consumed, errors name the full key path.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config key '" + label() + "': expected an object");
    }
    ~Reader() = default;

    [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }
    [[nodiscard]] std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    const json& at(const std::string& k) {
        seen_.insert(k);
        if (!j_.contains(k)) throw ConfigError("config key '" + key(k) + "': missing");
        return j_.at(k);
    }

    template <class T>
    T get(const std::string& k, T fallback) {
        if (!j_.contains(k)) return fallback;
        return as<T>(at(k), key(k));
    }

    template <class T>
    static T as(const json& v, const std::string& where) {
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError("expected a number");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer() && !(v.is_number() && v.get<double>() == std::floor(v.get<double>())))
                    throw ConfigError("expected an integer");
                if constexpr (std::is_unsigned_v<T>)
                    if (v.get<double>() < 0) throw ConfigError("expected a nonnegative integer");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError("expected a string");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError("expected true or false");
            }
            return v.get<T>();
        } catch (const ConfigError& e) {
            throw ConfigError("config key '" + where + "': " + e.what());
        } catch (const json::exception& e) {
            throw ConfigError("config key '" + where + "': " + e.what());
        }
    }

    template <class T>
    std::vector<T> list(const std::string& k, std::vector<T> fallback) {
        if (!j_.contains(k)) return fallback;
        const json& v = at(k);
        std::vector<T> out;
        if (!v.is_array()) {
            out.push_back(as<T>(v, key(k)));
            return out;
        }
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as<T>(v[i], key(k) + "[" + std::to_string(i) + "]"));
        return out;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("config key '" + key(it.key()) + "': unknown key");
    }

private:
    [[nodiscard]] std::string label() const { return path_.empty() ? "<root>" : path_; }
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline ManifoldKind manifold_kind(const std::string& s, const std::string& where) {
    if (s == "circle") return ManifoldKind::Circle;
    if (s == "sphere") return ManifoldKind::Sphere;
    if (s == "torus" || s == "flat_torus") return ManifoldKind::FlatTorus;
    throw ConfigError("config key '" + where + "': unknown manifold '" + s + "' (circle, sphere, torus)");
}

inline ManifoldSpec read_manifold(const json& j, const std::string& path) {
    Reader r(j, path);
    ManifoldSpec m;
    m.kind = manifold_kind(r.get<std::string>("kind", "circle"), r.key("kind"));
    m.radius = r.get<double>("radius", 1.0);
    m.side_u = r.get<double>("side_u", 2.0 * kPi);
    m.side_v = r.get<double>("side_v", 2.0 * kPi);
    m.tilt = r.get<double>("tilt", 0.0);
    r.finish();
    try {
        (void)m.build();
    } catch (const ConfigError& e) {
        throw ConfigError("config key '" + path + "': " + e.what());
    }
    return m;
}

inline json manifold_json(const ManifoldSpec& m) {
    json j{{"kind", m.kind == ManifoldKind::FlatTorus ? "torus" : std::string(manigap::to_string(m.kind))}, {"tilt", m.tilt}};
    if (m.kind == ManifoldKind::FlatTorus) {
        j["side_u"] = m.side_u;
        j["side_v"] = m.side_v;
    } else {
        j["radius"] = m.radius;
    }
    return j;
}

inline std::optional<double> optional_number(const json& v, const std::string& where) {
    if (v.is_null()) return std::nullopt;
    return Reader::as<double>(v, where);
}

}  // namespace detail

/// Parses a config tree; relative class files resolve against base_dir.
[[nodiscard]] inline ExperimentConfig config_from_json(const nlohmann::json& root, const std::filesystem::path& base_dir = {}) {
    using detail::Reader;
    ExperimentConfig cfg;
    Reader r(root, "");
    const std::string experiment = r.get<std::string>("experiment", "node");
    if (experiment == "node")
        cfg.experiment = ExperimentKind::Node;
    else if (experiment == "graph")
        cfg.experiment = ExperimentKind::Graph;
    else
        throw ConfigError("config key 'experiment': expected 'node' or 'graph'");

    if (r.has("manifold")) cfg.manifold = detail::read_manifold(r.at("manifold"), "manifold");

    if (r.has("signal")) {
        Reader s(r.at("signal"), "signal");
        if (s.has("coefficients")) {
            const auto& c = s.at("coefficients");
            if (!c.is_object()) throw ConfigError("config key 'signal.coefficients': expected an object of index -> value");
            cfg.signal.coefficients.clear();
            for (auto it = c.begin(); it != c.end(); ++it) {
                std::size_t idx = 0;
                try {
                    idx = static_cast<std::size_t>(std::stoul(it.key()));
                } catch (...) {
                    throw ConfigError("config key 'signal.coefficients." + it.key() + "': index must be a positive integer");
                }
                if (idx < 1) throw ConfigError("config key 'signal.coefficients." + it.key() + "': indices are 1-based");
                cfg.signal.coefficients[idx] = Reader::as<double>(it.value(), "signal.coefficients." + it.key());
            }
        }
        cfg.signal.cutoff = s.get<double>("cutoff", cfg.signal.cutoff);
        s.finish();
    }

    if (r.has("target")) {
        Reader t(r.at("target"), "target");
        cfg.target.taps = t.list<double>("taps", cfg.target.taps);
        cfg.target.c_g = t.get<double>("c_g", cfg.target.c_g);
        if (t.has("threshold")) cfg.target.threshold = detail::optional_number(t.at("threshold"), "target.threshold");
        cfg.target.n_pairs = t.get<std::size_t>("n_pairs", cfg.target.n_pairs);
        t.finish();
    }

    if (r.has("mismatch")) {
        Reader m(r.at("mismatch"), "mismatch");
        const std::string kind = m.get<std::string>("kind", "none");
        if (kind == "none") cfg.mismatch.kind = MismatchKind::None;
        else if (kind == "deformation") cfg.mismatch.kind = MismatchKind::Deformation;
        else if (kind == "feature") cfg.mismatch.kind = MismatchKind::Feature;
        else if (kind == "edge") cfg.mismatch.kind = MismatchKind::Edge;
        else if (kind == "jitter") cfg.mismatch.kind = MismatchKind::Jitter;
        else throw ConfigError("config key 'mismatch.kind': expected none, deformation, feature, edge or jitter");
        cfg.mismatch.gamma = m.list<double>("gamma", cfg.mismatch.gamma);
        cfg.mismatch.n_check = m.get<std::size_t>("n_check", cfg.mismatch.n_check);
        if (m.has("field")) {
            Reader f(m.at("field"), "mismatch.field");
            const std::string fk = f.get<std::string>("kind", "gradient");
            if (fk == "gradient") cfg.mismatch.field.kind = FieldKind::Gradient;
            else if (fk == "rotation") cfg.mismatch.field.kind = FieldKind::Rotation;
            else throw ConfigError("config key 'mismatch.field.kind': expected gradient or rotation");
            if (f.has("terms")) {
                const auto& terms = f.at("terms");
                if (!terms.is_array()) throw ConfigError("config key 'mismatch.field.terms': expected [[index, weight], ...]");
                cfg.mismatch.field.terms.clear();
                for (std::size_t i = 0; i < terms.size(); ++i) {
                    const std::string where = "mismatch.field.terms[" + std::to_string(i) + "]";
                    if (!terms[i].is_array() || terms[i].size() != 2) throw ConfigError("config key '" + where + "': expected [index, weight]");
                    cfg.mismatch.field.terms.emplace_back(Reader::as<std::size_t>(terms[i][0], where),
                                                          Reader::as<double>(terms[i][1], where));
                }
            }
            f.finish();
        }
        m.finish();
    }

    if (r.has("graph")) {
        Reader g(r.at("graph"), "graph");
        cfg.graph.n = g.list<Index>("n", cfg.graph.n);
        cfg.graph.epsilon_scale = g.get<double>("epsilon_scale", cfg.graph.epsilon_scale);
        cfg.graph.delta = g.get<double>("delta", cfg.graph.delta);
        cfg.graph.c = g.get<double>("c", cfg.graph.c);
        cfg.graph_level.n_per_graph = g.get<Index>("n_per_graph", cfg.graph_level.n_per_graph);
        g.finish();
    }

    if (r.has("model")) {
        Reader m(r.at("model"), "model");
        cfg.model.depth = m.list<int>("depth", cfg.model.depth);
        cfg.model.width = m.list<Index>("width", cfg.model.width);
        cfg.model.k = m.get<int>("k", cfg.model.k);
        try {
            cfg.model.activation = activation_from_string(m.get<std::string>("activation", "relu"));
        } catch (const ConfigError& e) {
            throw ConfigError("config key 'model.activation': " + std::string(e.what()));
        }
        if (m.has("c_l")) {
            const auto& v = m.at("c_l");
            cfg.model.c_l.clear();
            if (v.is_array())
                for (std::size_t i = 0; i < v.size(); ++i)
                    cfg.model.c_l.push_back(detail::optional_number(v[i], "model.c_l[" + std::to_string(i) + "]"));
            else
                cfg.model.c_l.push_back(detail::optional_number(v, "model.c_l"));
        }
        cfg.model.penalty_weight = m.get<double>("penalty_weight", cfg.model.penalty_weight);
        cfg.model.grid.lo = m.get<double>("lambda_min", cfg.model.grid.lo);
        cfg.model.grid.hi = m.get<double>("lambda_max", cfg.model.grid.hi);
        cfg.model.grid.steps = m.get<std::size_t>("lambda_steps", cfg.model.grid.steps);
        if (m.has("loss")) {
            Reader l(m.at("loss"), "model.loss");
            const std::string kind = l.get<std::string>("kind", "huber");
            if (kind == "l1") cfg.model.loss.kind = LossKind::L1;
            else if (kind == "huber") cfg.model.loss.kind = LossKind::Huber;
            else if (kind == "cross_entropy") cfg.model.loss.kind = LossKind::CrossEntropy;
            else throw ConfigError("config key 'model.loss.kind': expected l1, huber or cross_entropy");
            cfg.model.loss.delta = l.get<double>("delta", cfg.model.loss.delta);
            l.finish();
        }
        const std::string metric = m.get<std::string>("metric", "loss");
        if (metric == "loss") cfg.model.metric = RiskMetric::Loss;
        else if (metric == "zero_one") cfg.model.metric = RiskMetric::ZeroOne;
        else throw ConfigError("config key 'model.metric': expected loss or zero_one");
        m.finish();
    }

    if (r.has("train")) {
        Reader t(r.at("train"), "train");
        cfg.train.learning_rate = t.get<double>("learning_rate", cfg.train.learning_rate);
        cfg.train.epochs = t.get<int>("epochs", cfg.train.epochs);
        cfg.train.batch_size = t.get<std::size_t>("batch_size", cfg.train.batch_size);
        cfg.train.beta1 = t.get<double>("beta1", cfg.train.beta1);
        cfg.train.beta2 = t.get<double>("beta2", cfg.train.beta2);
        t.finish();
    }

    if (r.has("eval")) {
        Reader e(r.at("eval"), "eval");
        cfg.eval.n_eval = e.get<Index>("n_eval", cfg.eval.n_eval);
        cfg.eval.replicates = e.get<int>("replicates", cfg.eval.replicates);
        cfg.eval.delta = e.get<double>("delta", cfg.eval.delta);
        cfg.eval.trials = e.get<int>("trials", cfg.eval.trials);
        cfg.eval.master_seed = e.get<std::uint64_t>("seed", cfg.eval.master_seed);
        cfg.eval.workers = e.get<int>("workers", cfg.eval.workers);
        e.finish();
    }

    if (r.has("classes")) {
        const auto& classes = r.at("classes");
        if (!classes.is_array()) throw ConfigError("config key 'classes': expected a list");
        for (std::size_t i = 0; i < classes.size(); ++i) {
            const std::string path = "classes[" + std::to_string(i) + "]";
            Reader c(classes[i], path);
            ClassSpec spec;
            spec.name = c.get<std::string>("name", "class" + std::to_string(i));
            if (c.has("manifold")) spec.manifold = detail::read_manifold(c.at("manifold"), path + ".manifold");
            if (c.has("file")) {
                std::filesystem::path p = c.get<std::string>("file", "");
                if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
                spec.file = p.string();
            }
            spec.intrinsic_dim = c.get<int>("intrinsic_dim", spec.manifold ? spec.manifold->build().intrinsic_dim() : 2);
            c.finish();
            cfg.graph_level.classes.push_back(std::move(spec));
        }
    }
    cfg.graph_level.train_graphs_per_class = r.get<int>("train_graphs_per_class", cfg.graph_level.train_graphs_per_class);
    cfg.graph_level.test_graphs_per_class = r.get<int>("test_graphs_per_class", cfg.graph_level.test_graphs_per_class);

    if (r.has("ood_targets")) {
        const auto& t = r.at("ood_targets");
        if (!t.is_array()) throw ConfigError("config key 'ood_targets': expected a list of manifolds");
        for (std::size_t i = 0; i < t.size(); ++i)
            cfg.ood_targets.push_back(detail::read_manifold(t[i], "ood_targets[" + std::to_string(i) + "]"));
    }
    r.finish();
    cfg.validate();
    return cfg;
}

/// Canonical tree; fingerprints hash its compact dump.
[[nodiscard]] inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    using nlohmann::json;
    json j;
    j["experiment"] = cfg.experiment == ExperimentKind::Node ? "node" : "graph";
    j["manifold"] = detail::manifold_json(cfg.manifold);
    json coeffs = json::object();
    for (const auto& [i, c] : cfg.signal.coefficients) coeffs[std::to_string(i)] = c;
    j["signal"] = {{"coefficients", coeffs}, {"cutoff", cfg.signal.cutoff}};
    j["target"] = {{"taps", cfg.target.taps}, {"c_g", cfg.target.c_g}, {"n_pairs", cfg.target.n_pairs},
                   {"threshold", cfg.target.threshold ? json(*cfg.target.threshold) : json(nullptr)}};
    json terms = json::array();
    for (const auto& [i, w] : cfg.mismatch.field.terms) terms.push_back({i, w});
    j["mismatch"] = {{"kind", detail::to_string(cfg.mismatch.kind)},
                     {"gamma", cfg.mismatch.gamma},
                     {"n_check", cfg.mismatch.n_check},
                     {"field", {{"kind", cfg.mismatch.field.kind == FieldKind::Gradient ? "gradient" : "rotation"}, {"terms", terms}}}};
    j["graph"] = {{"n", cfg.graph.n}, {"epsilon_scale", cfg.graph.epsilon_scale}, {"delta", cfg.graph.delta},
                  {"c", cfg.graph.c}, {"n_per_graph", cfg.graph_level.n_per_graph}};
    json c_l = json::array();
    for (const auto& c : cfg.model.c_l) c_l.push_back(c ? json(*c) : json(nullptr));
    j["model"] = {{"depth", cfg.model.depth},
                  {"width", cfg.model.width},
                  {"k", cfg.model.k},
                  {"activation", to_string(cfg.model.activation)},
                  {"c_l", c_l},
                  {"penalty_weight", cfg.model.penalty_weight},
                  {"lambda_min", cfg.model.grid.lo},
                  {"lambda_max", cfg.model.grid.hi},
                  {"lambda_steps", cfg.model.grid.steps},
                  {"loss", {{"kind", detail::loss_name(cfg.model.loss.kind)}, {"delta", cfg.model.loss.delta}}},
                  {"metric", cfg.model.metric == RiskMetric::Loss ? "loss" : "zero_one"}};
    j["train"] = {{"learning_rate", cfg.train.learning_rate}, {"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size}, {"beta1", cfg.train.beta1}, {"beta2", cfg.train.beta2}};
    // Worker count does not affect results, so it stays out of the fingerprint.
    j["eval"] = {{"n_eval", cfg.eval.n_eval}, {"replicates", cfg.eval.replicates}, {"delta", cfg.eval.delta},
                 {"trials", cfg.eval.trials}, {"seed", cfg.eval.master_seed}};
    if (cfg.experiment == ExperimentKind::Graph) {
        json classes = json::array();
        for (const auto& c : cfg.graph_level.classes) {
            json cj{{"name", c.name}, {"intrinsic_dim", c.intrinsic_dim}};
            if (c.manifold) cj["manifold"] = detail::manifold_json(*c.manifold);
            if (c.file) cj["file"] = *c.file;
            classes.push_back(cj);
        }
        j["classes"] = classes;
        j["train_graphs_per_class"] = cfg.graph_level.train_graphs_per_class;
        j["test_graphs_per_class"] = cfg.graph_level.test_graphs_per_class;
    }
    if (!cfg.ood_targets.empty()) {
        json t = json::array();
        for (const auto& m : cfg.ood_targets) t.push_back(detail::manifold_json(m));
        j["ood_targets"] = t;
    }
    return j;
}

[[nodiscard]] inline std::uint64_t config_fingerprint(const ExperimentConfig& cfg) {
    return fnv1a(config_to_json(cfg).dump());
}

/// Parse errors carry the 1-based line of the offending byte.
[[nodiscard]] inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        const auto line = static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n')) + 1;
        throw ParseError(path.string(), line, "invalid JSON");
    }
    return config_from_json(j, path.parent_path());
}

}  // namespace manigap
