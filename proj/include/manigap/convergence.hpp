#pragma once

#include "manigap/geograph.hpp"
#include "manigap/manifold.hpp"
#include "manigap/spectral.hpp"

#include <vector>

namespace manigap {

/// Graph-vs-manifold eigenvalue ratios over the nontrivial eigenspaces contained in modes 2..modes
/// (1-based; mode 1 is the constant; a trailing partial eigenspace is dropped). Each eigenspace is
/// represented by its mean graph eigenvalue: sampling splits degenerate eigenvalues at first order
/// in the density fluctuation, while the eigenspace mean only moves at second order. Ratios are
/// taken against the first nontrivial eigenspace, which cancels the kernel normalization.
struct RatioReport {
    std::vector<Index> multiplicity;
    std::vector<double> graph_ratio;
    std::vector<double> manifold_ratio;
    std::vector<double> rel_error;
    std::vector<double> split;  // (max - min) / mean inside each graph eigenspace
    double max_rel_error = 0.0;
};

[[nodiscard]] inline RatioReport eigen_ratio_report(const Vector& graph_eigs, const ManifoldModel& m, Index modes) {
    if (modes < 3) throw ConfigError("eigen_ratio_report needs at least 3 modes");
    if (graph_eigs.size() < modes) throw ConfigError("eigen_ratio_report: too few graph eigenvalues");
    if (!(graph_eigs[1] > 0.0)) throw Error("graph is disconnected: second eigenvalue is " + std::to_string(graph_eigs[1]));
    // One extra analytic mode tells whether the last eigenspace is complete.
    const auto pairs = eigenpairs(m, static_cast<std::size_t>(modes) + 1);
    auto mu = [&](Index i) { return pairs[static_cast<std::size_t>(i)].eigenvalue(); };
    struct Space { Index begin, end; };
    std::vector<Space> spaces;
    for (Index i = 1; i < modes;) {
        Index j = i + 1;
        while (j <= modes && std::abs(mu(j) - mu(i)) <= 1e-12 * mu(i)) ++j;
        if (j > modes) break;
        spaces.push_back({i, j});
        i = j;
    }
    if (spaces.size() < 2) throw ConfigError("eigen_ratio_report: modes cover fewer than two complete eigenspaces");
    auto mean = [&](const Space& s) { return graph_eigs.segment(s.begin, s.end - s.begin).mean(); };
    const double g1 = mean(spaces.front()), m1 = mu(spaces.front().begin);
    RatioReport r;
    for (const auto& s : spaces) {
        const auto seg = graph_eigs.segment(s.begin, s.end - s.begin);
        const double gm = seg.mean();
        r.multiplicity.push_back(s.end - s.begin);
        r.graph_ratio.push_back(gm / g1);
        r.manifold_ratio.push_back(mu(s.begin) / m1);
        r.rel_error.push_back(std::abs(r.graph_ratio.back() - r.manifold_ratio.back()) / r.manifold_ratio.back());
        r.split.push_back((seg.maxCoeff() - seg.minCoeff()) / gm);
        r.max_rel_error = std::max(r.max_rel_error, r.rel_error.back());
    }
    return r;
}

struct ConvergenceRow {
    Index n = 0;
    double epsilon = 0.0;
    double mean_max_rel_error = 0.0;  // over seeds
    std::vector<double> per_seed;
};

/// Ratio errors of default-epsilon graphs over a list of sizes; seeds are shared across sizes.
[[nodiscard]] inline std::vector<ConvergenceRow> convergence_table(const ManifoldModel& m, const std::vector<Index>& ns,
                                                                   const std::vector<std::uint64_t>& seeds, Index modes,
                                                                   double delta = 0.1, double c = 1.0, double scale = 1.0) {
    if (ns.empty()) throw ConfigError("convergence_table: empty N list");
    if (seeds.empty()) throw ConfigError("convergence_table: empty seed list");
    const int d = m.intrinsic_dim();
    std::vector<ConvergenceRow> rows;
    for (Index n : ns) {
        ConvergenceRow row;
        row.n = n;
        row.epsilon = default_epsilon(n, d, delta, c, scale);
        for (auto s : seeds) {
            const auto g = build_graph(sample_points(m, static_cast<std::size_t>(n), s), row.epsilon, d);
            row.per_seed.push_back(eigen_ratio_report(graph_eigenvalues(g, modes), m, modes).max_rel_error);
            row.mean_max_rel_error += row.per_seed.back() / static_cast<double>(seeds.size());
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace manigap
