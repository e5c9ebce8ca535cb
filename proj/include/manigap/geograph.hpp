#pragma once

#include "manigap/core.hpp"
#include "manigap/pointcloud.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <vector>

namespace manigap {

/// n x F node signal.
using GraphSignal = Matrix;

struct Edge {
    Index i = 0;  // i < j
    Index j = 0;
    double weight = 0.0;

    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Epsilon-graph weight for every edge: alpha_d / ((d + 2) N eps^(d + 2)).
[[nodiscard]] inline double epsilon_graph_weight(Index n, double epsilon, int d) {
    return unit_ball_volume(d) / ((d + 2.0) * static_cast<double>(n) * std::pow(epsilon, d + 2));
}

class GeometricGraph {
public:
    GeometricGraph(PointCloud cloud, double epsilon, int d, std::vector<Edge> edges)
        : cloud_(std::move(cloud)), epsilon_(epsilon), d_(d), edges_(std::move(edges)) {
        std::sort(edges_.begin(), edges_.end(),
                  [](const Edge& a, const Edge& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; });
        assemble();
    }

    [[nodiscard]] const PointCloud& cloud() const noexcept { return cloud_; }
    [[nodiscard]] Index size() const noexcept { return cloud_.size(); }
    [[nodiscard]] double epsilon() const noexcept { return epsilon_; }
    [[nodiscard]] int intrinsic_dim() const noexcept { return d_; }
    [[nodiscard]] const std::vector<Edge>& edges() const noexcept { return edges_; }
    [[nodiscard]] std::size_t edge_count() const noexcept { return edges_.size(); }
    [[nodiscard]] const SparseMatrix& weights() const noexcept { return w_; }
    [[nodiscard]] const SparseMatrix& laplacian() const noexcept { return l_; }
    [[nodiscard]] const Vector& degrees() const noexcept { return degree_; }
    [[nodiscard]] Index isolated_count() const noexcept { return isolated_; }
    [[nodiscard]] bool has_isolated_nodes() const noexcept { return isolated_ > 0; }
    [[nodiscard]] Index component_count() const noexcept { return components_; }
    [[nodiscard]] bool connected() const noexcept { return components_ == 1; }
    [[nodiscard]] const std::vector<Index>& component_labels() const noexcept { return labels_; }

    /// Gershgorin upper bound on the Laplacian spectrum.
    [[nodiscard]] double spectral_bound() const { return 2.0 * (degree_.size() ? degree_.maxCoeff() : 0.0); }

    [[nodiscard]] Matrix dense_laplacian() const { return Matrix(l_); }

private:
    void assemble() {
        const Index n = size();
        std::vector<Eigen::Triplet<double>> wt;
        wt.reserve(2 * edges_.size());
        degree_ = Vector::Zero(n);
        std::vector<Index> parent(static_cast<std::size_t>(n));
        std::iota(parent.begin(), parent.end(), Index{0});
        auto find = [&](Index a) {
            while (parent[static_cast<std::size_t>(a)] != a) {
                auto& p = parent[static_cast<std::size_t>(a)];
                p = parent[static_cast<std::size_t>(p)];
                a = p;
            }
            return a;
        };
        for (const Edge& e : edges_) {
            wt.emplace_back(e.i, e.j, e.weight);
            wt.emplace_back(e.j, e.i, e.weight);
            degree_[e.i] += e.weight;
            degree_[e.j] += e.weight;
            const Index a = find(e.i), b = find(e.j);
            if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
        }
        w_.resize(n, n);
        w_.setFromTriplets(wt.begin(), wt.end());
        std::vector<Eigen::Triplet<double>> lt;
        lt.reserve(wt.size() + static_cast<std::size_t>(n));
        for (const auto& t : wt) lt.emplace_back(t.row(), t.col(), -t.value());
        for (Index i = 0; i < n; ++i) lt.emplace_back(i, i, degree_[i]);
        l_.resize(n, n);
        l_.setFromTriplets(lt.begin(), lt.end());
        // Recompute diagonals so each row sums to zero in the same summation order as the off-diagonals.
        for (Index r = 0; r < n; ++r) {
            double off = 0.0;
            double* diag = nullptr;
            for (SparseMatrix::InnerIterator it(l_, r); it; ++it) {
                if (it.col() == r)
                    diag = &it.valueRef();
                else
                    off += it.value();
            }
            if (diag) *diag = -off;
        }

        isolated_ = 0;
        std::vector<bool> touched(static_cast<std::size_t>(n), false);
        for (const Edge& e : edges_) touched[static_cast<std::size_t>(e.i)] = touched[static_cast<std::size_t>(e.j)] = true;
        for (bool t : touched) isolated_ += t ? 0 : 1;

        labels_.assign(static_cast<std::size_t>(n), 0);
        std::vector<Index> remap(static_cast<std::size_t>(n), -1);
        components_ = 0;
        for (Index i = 0; i < n; ++i) {
            const Index root = find(i);
            auto& slot = remap[static_cast<std::size_t>(root)];
            if (slot < 0) slot = components_++;
            labels_[static_cast<std::size_t>(i)] = slot;
        }
    }

    PointCloud cloud_;
    double epsilon_;
    int d_;
    std::vector<Edge> edges_;
    SparseMatrix w_;
    SparseMatrix l_;
    Vector degree_;
    Index isolated_ = 0;
    Index components_ = 0;
    std::vector<Index> labels_;
};

namespace detail {

inline void check_graph_args(const PointCloud& cloud, double epsilon, int d) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("build_graph requires epsilon > 0");
    if (d < 1) throw ConfigError("build_graph requires d >= 1");
    if (cloud.size() < 1) throw ConfigError("build_graph requires a nonempty cloud");
    if (!cloud.all_finite()) throw ConfigError("point cloud has non-finite coordinates");
}

struct CellHash {
    std::size_t operator()(const std::vector<std::int64_t>& key) const noexcept {
        std::uint64_t h = 0x9e3779b97f4a7c15ULL;
        for (auto k : key) h = mix64(h ^ static_cast<std::uint64_t>(k));
        return static_cast<std::size_t>(h);
    }
};

}  // namespace detail

/// Reference construction over all unordered pairs; the correctness oracle for build_graph.
[[nodiscard]] inline GeometricGraph build_graph_bruteforce(const PointCloud& cloud, double epsilon, int d) {
    detail::check_graph_args(cloud, epsilon, d);
    const double w = epsilon_graph_weight(cloud.size(), epsilon, d);
    std::vector<Edge> edges;
    for (Index i = 0; i < cloud.size(); ++i) {
        for (Index j = i + 1; j < cloud.size(); ++j) {
            const double dist = (cloud.points.row(i) - cloud.points.row(j)).norm();
            if (dist > 0.0 && dist <= epsilon) edges.push_back({i, j, w});
        }
    }
    return GeometricGraph(cloud, epsilon, d, std::move(edges));
}

/// Epsilon-graph via uniform spatial hashing with cell side epsilon.
[[nodiscard]] inline GeometricGraph build_graph(const PointCloud& cloud, double epsilon, int d) {
    detail::check_graph_args(cloud, epsilon, d);
    const Index n = cloud.size();
    const Index dim = cloud.ambient_dim();
    const double w = epsilon_graph_weight(n, epsilon, d);

    std::unordered_map<std::vector<std::int64_t>, std::vector<Index>, detail::CellHash> grid;
    std::vector<std::vector<std::int64_t>> keys(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        auto& key = keys[static_cast<std::size_t>(i)];
        key.resize(static_cast<std::size_t>(dim));
        for (Index c = 0; c < dim; ++c)
            key[static_cast<std::size_t>(c)] = static_cast<std::int64_t>(std::floor(cloud.points(i, c) / epsilon));
        grid[key].push_back(i);
    }

    std::size_t offsets = 1;
    for (Index c = 0; c < dim; ++c) offsets *= 3;

    std::vector<Edge> edges;
    std::vector<std::int64_t> probe(static_cast<std::size_t>(dim));
    for (Index i = 0; i < n; ++i) {
        const auto& key = keys[static_cast<std::size_t>(i)];
        for (std::size_t o = 0; o < offsets; ++o) {
            std::size_t code = o;
            for (Index c = 0; c < dim; ++c) {
                probe[static_cast<std::size_t>(c)] = key[static_cast<std::size_t>(c)] + static_cast<std::int64_t>(code % 3) - 1;
                code /= 3;
            }
            const auto it = grid.find(probe);
            if (it == grid.end()) continue;
            for (Index j : it->second) {
                if (j <= i) continue;
                const double dist = (cloud.points.row(i) - cloud.points.row(j)).norm();
                if (dist > 0.0 && dist <= epsilon) edges.push_back({i, j, w});
            }
        }
    }
    return GeometricGraph(cloud, epsilon, d, std::move(edges));
}

/// scale * (log(c / delta) / n)^(1 / (d + 4)).
[[nodiscard]] inline double default_epsilon(Index n, int d, double delta = 0.1, double c = 1.0, double scale = 1.0) {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("default_epsilon requires 0 < delta < 1");
    if (n < 2) throw ConfigError("default_epsilon requires n >= 2");
    if (!(c > 0.0)) throw ConfigError("default_epsilon requires c > 0");
    if (!(c > delta)) throw ConfigError("default_epsilon requires c > delta so that log(c/delta) > 0");
    if (!(scale > 0.0)) throw ConfigError("default_epsilon requires scale > 0");
    if (d < 1) throw ConfigError("default_epsilon requires d >= 1");
    return scale * std::pow(std::log(c / delta) / static_cast<double>(n), 1.0 / (d + 4.0));
}

namespace detail {
inline void check_fraction(double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in [0, 1]");
}
}  // namespace detail

/// Zeroes a uniformly random subset of floor(fraction * F) channels.
[[nodiscard]] inline GraphSignal perturb_features(const GraphSignal& x, double fraction, std::uint64_t seed) {
    detail::check_fraction(fraction);
    const Index f = x.cols();
    const auto drop = static_cast<Index>(std::floor(fraction * static_cast<double>(f)));
    std::vector<Index> order(static_cast<std::size_t>(f));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    GraphSignal out = x;
    for (Index k = 0; k < drop; ++k) out.col(order[static_cast<std::size_t>(k)]).setZero();
    return out;
}

/// Removes floor(fraction * E) undirected edges chosen uniformly at random.
[[nodiscard]] inline GeometricGraph perturb_edges(const GeometricGraph& g, double fraction, std::uint64_t seed) {
    detail::check_fraction(fraction);
    const std::size_t e = g.edge_count();
    const auto drop = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(e)));
    std::vector<std::size_t> order(e);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> keep(e, true);
    for (std::size_t k = 0; k < drop; ++k) keep[order[k]] = false;
    std::vector<Edge> edges;
    edges.reserve(e - drop);
    for (std::size_t k = 0; k < e; ++k)
        if (keep[k]) edges.push_back(g.edges()[k]);
    return GeometricGraph(g.cloud(), g.epsilon(), g.intrinsic_dim(), std::move(edges));
}

/// Adds an independent Normal(mean gamma, variance 2 gamma) shift to every coordinate.
[[nodiscard]] inline PointCloud gaussian_jitter(const PointCloud& cloud, double gamma, std::uint64_t seed) {
    if (!(gamma >= 0.0)) throw ConfigError("gaussian_jitter requires gamma >= 0");
    if (gamma == 0.0) return cloud;
    Rng rng(seed);
    std::normal_distribution<double> shift(gamma, std::sqrt(2.0 * gamma));
    PointCloud out = cloud;
    for (Index i = 0; i < out.size(); ++i)
        for (Index c = 0; c < out.ambient_dim(); ++c) out.points(i, c) += shift(rng);
    out.source = cloud.source + ":jitter";
    return out;
}

}  // namespace manigap
