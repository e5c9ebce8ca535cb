#pragma once

#include "manigap/diffusion.hpp"
#include "manigap/filter.hpp"

#include <cmath>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

namespace manigap {

enum class Activation { Relu, Abs, Identity };
enum class Task { Node, Graph };

[[nodiscard]] inline double activate(Activation a, double v) {
    switch (a) {
        case Activation::Relu: return v > 0.0 ? v : 0.0;
        case Activation::Abs: return std::abs(v);
        case Activation::Identity: return v;
    }
    return v;
}

// Subgradient 0 at the kink for both relu and abs.
[[nodiscard]] inline double activate_deriv(Activation a, double v) {
    switch (a) {
        case Activation::Relu: return v > 0.0 ? 1.0 : 0.0;
        case Activation::Abs: return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

/// One heat-kernel filter bank: output channel o = sum_i sum_k taps[k](o, i) exp(-k L) x_i.
struct GnnLayer {
    std::vector<Matrix> taps;  // K matrices of shape f_out x f_in

    [[nodiscard]] Index f_in() const { return taps.empty() ? 0 : taps.front().cols(); }
    [[nodiscard]] Index f_out() const { return taps.empty() ? 0 : taps.front().rows(); }
    [[nodiscard]] int k() const { return static_cast<int>(taps.size()); }
    [[nodiscard]] std::vector<double> filter(Index o, Index i) const {
        std::vector<double> h(taps.size());
        for (std::size_t k = 0; k < taps.size(); ++k) h[k] = taps[k](o, i);
        return h;
    }
};

struct Readout {
    Matrix weight;  // out x f_last
    Vector bias;    // out
};

/// Soft integral-Lipschitz budget: weight * sum over filters and grid of max(0, lambda^(d+1)|h'| - c_l)^2.
struct LipschitzBudget {
    double c_l = 1.0;
    int d = 1;
    LambdaGrid grid{};
    double weight = 1.0;
};

struct GnnModel {
    std::vector<GnnLayer> layers;
    Activation activation = Activation::Relu;
    Readout readout;
    Task task = Task::Node;
    std::optional<LipschitzBudget> budget;

    /// Filter-layer count; the readout is not counted.
    [[nodiscard]] int depth() const noexcept { return static_cast<int>(layers.size()); }
    [[nodiscard]] Index input_width() const { return layers.empty() ? readout.weight.cols() : layers.front().f_in(); }
    [[nodiscard]] Index output_width() const { return readout.weight.rows(); }
    [[nodiscard]] Index hidden_width() const {
        Index w = 0;
        for (const auto& l : layers) w = std::max(w, l.f_out());
        return w;
    }

    void validate() const {
        Index width = input_width();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& layer = layers[l];
            if (layer.taps.empty()) throw ConfigError("layer " + std::to_string(l) + " has no taps");
            for (const auto& t : layer.taps) {
                if (t.rows() != layer.f_out() || t.cols() != layer.f_in())
                    throw ConfigError("layer " + std::to_string(l) + " has inconsistent tap shapes");
                if (!t.allFinite()) throw ConfigError("layer " + std::to_string(l) + " has non-finite taps");
            }
            if (layer.f_in() != width) throw ConfigError("layer " + std::to_string(l) + " width does not chain");
            width = layer.f_out();
        }
        if (readout.weight.cols() != width) throw ConfigError("readout width does not match the last layer");
        if (readout.bias.size() != readout.weight.rows()) throw ConfigError("readout bias has the wrong size");
        if (!readout.weight.allFinite() || !readout.bias.allFinite()) throw ConfigError("readout is not finite");
    }

    [[nodiscard]] Index parameter_count() const {
        Index n = readout.weight.size() + readout.bias.size();
        for (const auto& l : layers)
            for (const auto& t : l.taps) n += t.size();
        return n;
    }

    /// Layer taps (layer, k, column-major) then readout weight and bias.
    [[nodiscard]] Vector flatten() const {
        Vector v(parameter_count());
        Index pos = 0;
        auto put = [&](const auto& m) {
            v.segment(pos, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
            pos += m.size();
        };
        for (const auto& l : layers)
            for (const auto& t : l.taps) put(t);
        put(readout.weight);
        put(readout.bias);
        return v;
    }

    void assign(const Vector& v) {
        if (v.size() != parameter_count()) throw ConfigError("parameter vector has the wrong length");
        Index pos = 0;
        auto take = [&](auto& m) {
            Eigen::Map<Vector>(m.data(), m.size()) = v.segment(pos, m.size());
            pos += m.size();
        };
        for (auto& l : layers)
            for (auto& t : l.taps) take(t);
        take(readout.weight);
        take(readout.bias);
    }

    /// Hash of every parameter bit plus the architecture; used to detect stale caches.
    [[nodiscard]] std::uint64_t fingerprint() const {
        std::uint64_t h = fnv1a("gnn");
        auto mix = [&](double x) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, &x, sizeof bits);
            h = mix64(h ^ bits);
        };
        mix(static_cast<double>(static_cast<int>(activation)));
        mix(static_cast<double>(static_cast<int>(task)));
        for (const auto& l : layers) {
            mix(static_cast<double>(l.k()));
            mix(static_cast<double>(l.f_in()));
            mix(static_cast<double>(l.f_out()));
        }
        const Vector p = flatten();
        for (Index i = 0; i < p.size(); ++i) mix(p[i]);
        return h;
    }
};

/// widths = {F0, F1, ..., FL}; taps and readout weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), bias 0.
[[nodiscard]] inline GnnModel init_model(const std::vector<Index>& widths, int k, Index out, Activation activation,
                                         Task task, std::uint64_t seed) {
    if (widths.empty()) throw ConfigError("model needs at least the input width");
    if (k < 1) throw ConfigError("tap count K must be >= 1");
    if (out < 1) throw ConfigError("output width must be >= 1");
    for (Index w : widths)
        if (w < 1) throw ConfigError("layer widths must be >= 1");
    Rng rng(seed);
    GnnModel m;
    m.activation = activation;
    m.task = task;
    auto fill = [&](Matrix& mat, double fan_in) {
        std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
        for (Index i = 0; i < mat.size(); ++i) mat.data()[i] = u(rng);
    };
    for (std::size_t l = 1; l < widths.size(); ++l) {
        GnnLayer layer;
        for (int j = 0; j < k; ++j) {
            Matrix t(widths[l], widths[l - 1]);
            fill(t, static_cast<double>(widths[l - 1] * k));
            layer.taps.push_back(std::move(t));
        }
        m.layers.push_back(std::move(layer));
    }
    m.readout.weight.resize(out, widths.back());
    fill(m.readout.weight, static_cast<double>(widths.back()));
    m.readout.bias = Vector::Zero(out);
    return m;
}

/// Intermediates retained by forward for backward.
struct ForwardCache {
    std::uint64_t fingerprint = 0;
    Index nodes = 0;
    std::vector<std::vector<Matrix>> stacks;  // per layer: exp(-k L) x_{l-1} for each k
    std::vector<Matrix> pre;                  // per layer pre-activation
    Matrix last;                              // final layer output (n x F_L)
};

/// Output is n x out for node tasks and 1 x out for graph tasks.
template <Diffusion D>
[[nodiscard]] Matrix forward(const GnnModel& model, const D& diffusion, const Matrix& x, ForwardCache* cache = nullptr) {
    if (x.rows() != diffusion.nodes()) throw ConfigError("signal rows do not match the graph");
    if (x.cols() != model.input_width())
        throw ConfigError("input width " + std::to_string(x.cols()) + " does not match model width " +
                          std::to_string(model.input_width()));
    if (cache) {
        *cache = ForwardCache{};
        cache->fingerprint = model.fingerprint();
        cache->nodes = x.rows();
    }
    Matrix h = x;
    for (const auto& layer : model.layers) {
        std::vector<Matrix> s = diffusion.stack(h, layer.k());
        Matrix z = Matrix::Zero(h.rows(), layer.f_out());
        for (int k = 0; k < layer.k(); ++k) z.noalias() += s[static_cast<std::size_t>(k)] * layer.taps[static_cast<std::size_t>(k)].transpose();
        Matrix y = z.unaryExpr([a = model.activation](double v) { return activate(a, v); });
        if (cache) {
            cache->stacks.push_back(std::move(s));
            cache->pre.push_back(std::move(z));
        }
        h = std::move(y);
    }
    if (cache) cache->last = h;
    if (model.task == Task::Graph) {
        const Matrix pooled = h.colwise().mean();
        return (pooled * model.readout.weight.transpose()).rowwise() + model.readout.bias.transpose();
    }
    return (h * model.readout.weight.transpose()).rowwise() + model.readout.bias.transpose();
}

/// Gradients in the same layout as GnnModel.
struct Gradients {
    std::vector<std::vector<Matrix>> taps;
    Matrix readout_weight;
    Vector readout_bias;
    Matrix input;  // d loss / d x

    [[nodiscard]] Vector flatten() const {
        Index n = readout_weight.size() + readout_bias.size();
        for (const auto& l : taps)
            for (const auto& t : l) n += t.size();
        Vector v(n);
        Index pos = 0;
        auto put = [&](const auto& m) {
            v.segment(pos, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
            pos += m.size();
        };
        for (const auto& l : taps)
            for (const auto& t : l) put(t);
        put(readout_weight);
        put(readout_bias);
        return v;
    }
};

/// Exact reverse pass. upstream has the shape of the forward output.
template <Diffusion D>
[[nodiscard]] Gradients backward(const GnnModel& model, const D& diffusion, const ForwardCache& cache,
                                 const Matrix& upstream) {
    if (cache.fingerprint != model.fingerprint() || cache.nodes != diffusion.nodes() ||
        cache.stacks.size() != model.layers.size())
        throw Error("stale forward cache: model or graph changed since the forward pass");
    const Index n = cache.nodes;
    const Index rows = model.task == Task::Graph ? 1 : n;
    if (upstream.rows() != rows || upstream.cols() != model.output_width())
        throw ConfigError("upstream gradient has the wrong shape");

    Gradients g;
    Matrix dh;
    if (model.task == Task::Graph) {
        const Matrix pooled = cache.last.colwise().mean();
        g.readout_weight = upstream.transpose() * pooled;
        g.readout_bias = upstream.transpose().rowwise().sum();
        const Matrix dpooled = upstream * model.readout.weight;
        dh = Matrix::Ones(n, 1) * (dpooled / static_cast<double>(n));
    } else {
        g.readout_weight = upstream.transpose() * cache.last;
        g.readout_bias = upstream.colwise().sum().transpose();
        dh = upstream * model.readout.weight;
    }

    g.taps.resize(model.layers.size());
    for (std::size_t l = model.layers.size(); l-- > 0;) {
        const auto& layer = model.layers[l];
        const Matrix& z = cache.pre[l];
        const Matrix dz = dh.cwiseProduct(z.unaryExpr([a = model.activation](double v) { return activate_deriv(a, v); }));
        auto& gl = g.taps[l];
        gl.resize(static_cast<std::size_t>(layer.k()));
        for (int k = 0; k < layer.k(); ++k)
            gl[static_cast<std::size_t>(k)] = dz.transpose() * cache.stacks[l][static_cast<std::size_t>(k)];
        // d x_{l-1} = sum_k exp(-k L) (dz H_k), evaluated by Horner in exp(-L).
        Matrix acc = dz * layer.taps.back();
        for (int k = layer.k() - 2; k >= 0; --k)
            acc = diffusion.heat(acc, 1) + dz * layer.taps[static_cast<std::size_t>(k)];
        dh = std::move(acc);
    }
    g.input = std::move(dh);
    return g;
}

// ---------------------------------------------------------------------------------------------
// Losses

enum class LossKind { L1, Huber, CrossEntropy };

struct Loss {
    LossKind kind = LossKind::L1;
    double delta = 1.0;  // huber transition

    /// l1 and huber are normalized Lipschitz with l(y, y) = 0; cross-entropy is neither.
    [[nodiscard]] bool within_assumptions() const noexcept { return kind != LossKind::CrossEntropy; }
};

struct LossValue {
    Vector rows;  // per-sample loss
    Matrix grad;  // d(sum of rows) / d prediction
    [[nodiscard]] double sum() const { return rows.sum(); }
    [[nodiscard]] double mean() const { return rows.size() ? rows.mean() : 0.0; }
};

[[nodiscard]] inline LossValue loss(const Loss& spec, const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw ConfigError("prediction and target shapes differ");
    LossValue out{Vector::Zero(pred.rows()), Matrix::Zero(pred.rows(), pred.cols())};
    switch (spec.kind) {
        case LossKind::L1:
            for (Index i = 0; i < pred.rows(); ++i)
                for (Index c = 0; c < pred.cols(); ++c) {
                    const double r = pred(i, c) - target(i, c);
                    out.rows[i] += std::abs(r);
                    out.grad(i, c) = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
                }
            break;
        case LossKind::Huber: {
            if (!(spec.delta > 0.0)) throw ConfigError("huber delta must be > 0");
            const double d = spec.delta;
            for (Index i = 0; i < pred.rows(); ++i)
                for (Index c = 0; c < pred.cols(); ++c) {
                    const double r = pred(i, c) - target(i, c);
                    if (std::abs(r) <= d) {
                        out.rows[i] += 0.5 * r * r / d;
                        out.grad(i, c) = r / d;
                    } else {
                        out.rows[i] += std::abs(r) - 0.5 * d;
                        out.grad(i, c) = r > 0.0 ? 1.0 : -1.0;
                    }
                }
            break;
        }
        case LossKind::CrossEntropy: {
            const double tol = 1e-9;
            for (Index i = 0; i < pred.rows(); ++i) {
                if (pred.cols() == 1) {
                    const double y = target(i, 0), z = pred(i, 0);
                    if (!(y >= -tol && y <= 1.0 + tol))
                        throw ConfigError("cross_entropy target must be a probability in [0, 1]");
                    // softplus(z) - y z, evaluated stably.
                    out.rows[i] = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - y * z;
                    out.grad(i, 0) = 1.0 / (1.0 + std::exp(-z)) - y;
                    continue;
                }
                const auto t = target.row(i);
                if ((t.array() < -tol).any() || std::abs(t.sum() - 1.0) > 1e-6)
                    throw ConfigError("cross_entropy target rows must be probability vectors");
                const double mx = pred.row(i).maxCoeff();
                const Eigen::RowVectorXd e = (pred.row(i).array() - mx).exp();
                const double lse = mx + std::log(e.sum());
                out.rows[i] = -(t.array() * (pred.row(i).array() - lse)).sum();
                out.grad.row(i) = e / e.sum() - t;
            }
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Integral-Lipschitz penalty

namespace detail {

struct PenaltyTable {
    std::vector<double> lam_pow;           // lambda^(d+1)
    std::vector<std::vector<double>> ek;   // ek[k][g] = exp(-k lambda_g)
};

inline PenaltyTable penalty_table(const LipschitzBudget& b, int k_max) {
    b.grid.validate();
    PenaltyTable t;
    const auto pts = b.grid.points();
    for (double lam : pts) t.lam_pow.push_back(std::pow(lam, b.d + 1));
    t.ek.resize(static_cast<std::size_t>(k_max));
    for (int k = 0; k < k_max; ++k)
        for (double lam : pts) t.ek[static_cast<std::size_t>(k)].push_back(std::exp(-k * lam));
    return t;
}

}  // namespace detail

struct PenaltyValue {
    double value = 0.0;
    std::vector<std::vector<Matrix>> taps;  // gradient per layer and k
};

[[nodiscard]] inline PenaltyValue lipschitz_penalty(const GnnModel& model, const LipschitzBudget& budget) {
    PenaltyValue out;
    int k_max = 0;
    for (const auto& l : model.layers) k_max = std::max(k_max, l.k());
    const auto table = detail::penalty_table(budget, k_max);
    const std::size_t grid = table.lam_pow.size();
    out.taps.resize(model.layers.size());
    std::vector<double> deriv(grid);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        auto& gl = out.taps[l];
        for (int k = 0; k < layer.k(); ++k) gl.push_back(Matrix::Zero(layer.f_out(), layer.f_in()));
        for (Index o = 0; o < layer.f_out(); ++o) {
            for (Index i = 0; i < layer.f_in(); ++i) {
                std::fill(deriv.begin(), deriv.end(), 0.0);
                for (int k = 1; k < layer.k(); ++k) {
                    const double hk = layer.taps[static_cast<std::size_t>(k)](o, i);
                    const auto& ek = table.ek[static_cast<std::size_t>(k)];
                    for (std::size_t g = 0; g < grid; ++g) deriv[g] -= k * hk * ek[g];
                }
                for (std::size_t g = 0; g < grid; ++g) {
                    const double excess = table.lam_pow[g] * std::abs(deriv[g]) - budget.c_l;
                    if (excess <= 0.0) continue;
                    out.value += budget.weight * excess * excess;
                    const double sign = deriv[g] > 0.0 ? 1.0 : (deriv[g] < 0.0 ? -1.0 : 0.0);
                    const double common = 2.0 * budget.weight * excess * table.lam_pow[g] * sign;
                    for (int k = 1; k < layer.k(); ++k)
                        gl[static_cast<std::size_t>(k)](o, i) += common * (-k * table.ek[static_cast<std::size_t>(k)][g]);
                }
            }
        }
    }
    return out;
}

struct ModelCertificate {
    std::vector<FilterCertificate> filters;  // layer-major, then output, then input channel
    double max_c_h = 0.0;
    double max_c_l = 0.0;
};

[[nodiscard]] inline ModelCertificate certify_model(const GnnModel& model, int d, const LambdaGrid& grid) {
    ModelCertificate out;
    for (const auto& layer : model.layers)
        for (Index o = 0; o < layer.f_out(); ++o)
            for (Index i = 0; i < layer.f_in(); ++i) {
                const auto h = layer.filter(o, i);
                auto c = certify_filter(h, d, grid);
                out.max_c_h = std::max(out.max_c_h, c.c_h);
                out.max_c_l = std::max(out.max_c_l, c.c_l);
                out.filters.push_back(c);
            }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Training

struct TrainConfig {
    double learning_rate = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs = 100;
    std::size_t batch_size = 0;  // graphs per step; 0 = all
    std::uint64_t seed = 0;
    bool freeze_readout = false;  // train filter taps only

    void validate() const {
        if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
    }
};

template <Diffusion D>
struct Example {
    const D* diffusion = nullptr;
    Matrix x;
    Matrix y;  // n x out (node) or 1 x out (graph)
};

/// Mean loss of one example: node task averages over nodes.
template <Diffusion D>
[[nodiscard]] double example_risk(const GnnModel& model, const Example<D>& ex, const Loss& spec) {
    return loss(spec, forward(model, *ex.diffusion, ex.x), ex.y).mean();
}

/// Objective = mean over examples of the per-example mean loss (+ penalty when a budget is set).
template <Diffusion D>
[[nodiscard]] std::pair<double, Vector> objective_and_gradient(const GnnModel& model, const std::vector<Example<D>>& batch,
                                                               const Loss& spec, bool with_penalty = true,
                                                               double* risk_out = nullptr) {
    Vector grad = Vector::Zero(model.parameter_count());
    double risk = 0.0;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
        ForwardCache cache;
        const Matrix out = forward(model, *ex.diffusion, ex.x, &cache);
        const LossValue lv = loss(spec, out, ex.y);
        const double rows = static_cast<double>(out.rows());
        risk += scale * lv.sum() / rows;
        grad += backward(model, *ex.diffusion, cache, lv.grad * (scale / rows)).flatten();
    }
    double value = risk;
    if (with_penalty && model.budget) {
        const PenaltyValue p = lipschitz_penalty(model, *model.budget);
        value += p.value;
        Index pos = 0;
        for (const auto& l : p.taps)
            for (const auto& t : l) {
                grad.segment(pos, t.size()) += Eigen::Map<const Vector>(t.data(), t.size());
                pos += t.size();
            }
    }
    if (risk_out) *risk_out = risk;
    return {value, grad};
}

struct TrainResult {
    GnnModel model;
    std::vector<double> curve;  // training risk at the start of each epoch
    ModelCertificate certificate;
};

template <Diffusion D>
[[nodiscard]] TrainResult train(GnnModel model, const std::vector<Example<D>>& data, const TrainConfig& config,
                                const Loss& spec, int cert_d = 1, const LambdaGrid& cert_grid = {}) {
    config.validate();
    model.validate();
    if (data.empty()) throw ConfigError("training data is empty");
    for (const auto& ex : data) {
        if (!ex.diffusion) throw ConfigError("training example without a graph");
        const Index rows = model.task == Task::Graph ? 1 : ex.x.rows();
        if (ex.y.rows() != rows || ex.y.cols() != model.output_width())
            throw ConfigError("training target shape does not match the model output");
    }
    const std::size_t batch = config.batch_size == 0 ? data.size() : std::min(config.batch_size, data.size());
    Vector theta = model.flatten();
    Vector m1 = Vector::Zero(theta.size()), m2 = Vector::Zero(theta.size());
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(config.seed);
    TrainResult result;
    long step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (batch < data.size()) std::shuffle(order.begin(), order.end(), rng);
        double epoch_risk = 0.0;
        for (std::size_t start = 0; start < data.size(); start += batch) {
            std::vector<Example<D>> mb;
            for (std::size_t j = start; j < std::min(start + batch, data.size()); ++j) mb.push_back(data[order[j]]);
            double risk = 0.0;
            model.assign(theta);
            auto [value, grad] = objective_and_gradient(model, mb, spec, true, &risk);
            if (!std::isfinite(value) || !grad.allFinite())
                throw Error("training diverged at epoch " + std::to_string(epoch));
            epoch_risk += risk * static_cast<double>(mb.size());
            if (config.freeze_readout) {
                const Index tail = model.readout.weight.size() + model.readout.bias.size();
                grad.tail(tail).setZero();
            }
            ++step;
            m1 = config.beta1 * m1 + (1.0 - config.beta1) * grad;
            m2 = config.beta2 * m2 + (1.0 - config.beta2) * grad.cwiseProduct(grad);
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            if (config.learning_rate > 0.0)
                theta.array() -= config.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + config.adam_eps);
        }
        result.curve.push_back(epoch_risk / static_cast<double>(data.size()));
    }
    model.assign(theta);
    result.model = std::move(model);
    const int d = result.model.budget ? result.model.budget->d : cert_d;
    const LambdaGrid grid = result.model.budget ? result.model.budget->grid : cert_grid;
    result.certificate = certify_model(result.model, d, grid);
    return result;
}

/// Max over parameters of |analytic - central difference| / max(|analytic|, |fd|, 1e-3 * max|fd|).
template <Diffusion D>
[[nodiscard]] double gradcheck(const GnnModel& model, const std::vector<Example<D>>& batch, const Loss& spec,
                               bool with_penalty = true, double step = 1e-6) {
    const Vector analytic = objective_and_gradient(model, batch, spec, with_penalty).second;
    GnnModel probe = model;
    const Vector theta = model.flatten();
    Vector fd(theta.size());
    for (Index i = 0; i < theta.size(); ++i) {
        Vector t = theta;
        t[i] += step;
        probe.assign(t);
        const double up = objective_and_gradient(probe, batch, spec, with_penalty).first;
        t[i] = theta[i] - step;
        probe.assign(t);
        const double down = objective_and_gradient(probe, batch, spec, with_penalty).first;
        fd[i] = (up - down) / (2.0 * step);
    }
    const double floor = 1e-3 * fd.cwiseAbs().maxCoeff();
    double worst = 0.0;
    for (Index i = 0; i < theta.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), floor});
        if (denom > 0.0) worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
    }
    return worst;
}

}  // namespace manigap
