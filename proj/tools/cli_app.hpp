#pragma once

#include "manigap/checkpoint.hpp"
#include "manigap/config.hpp"
#include "manigap/convergence.hpp"
#include "manigap/genlab.hpp"
#include "manigap/pointcloud_io.hpp"
#include "manigap/report.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <optional>

namespace manigap::cli {

enum ExitCode { kOk = 0, kRuntime = 1, kConfig = 2 };

struct RunFlags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool svg = false;
    bool overwrite = false;
};

inline ExperimentConfig load_with_overrides(const RunFlags& f) {
    ExperimentConfig cfg = load_config(f.config);
    if (f.seed) cfg.eval.master_seed = *f.seed;
    if (f.workers) {
        if (*f.workers < 1) throw ConfigError("--workers must be >= 1");
        cfg.eval.workers = *f.workers;
    }
    cfg.validate();
    return cfg;
}

inline std::size_t distinct_cells(const std::vector<GapRecord>& records) {
    std::set<std::pair<Index, double>> s;
    for (const auto& r : records)
        if (r.ok()) s.insert({r.n, r.cell.gamma});
    return s.size();
}

inline int node_run(const RunFlags& f, bool full_sweep, std::ostream& out, std::ostream& err) {
    const ExperimentConfig cfg = load_with_overrides(f);
    if (cfg.experiment != ExperimentKind::Node) throw ConfigError("config key 'experiment': this command needs \"node\"");
    const int d = cfg.manifold.build().intrinsic_dim();
    const std::set<Index> ns(cfg.graph.n.begin(), cfg.graph.n.end());
    const std::set<double> gammas(cfg.mismatch.gamma.begin(), cfg.mismatch.gamma.end());
    if (full_sweep && ns.size() * gammas.size() < 8)
        throw ConfigError("sweep needs >= 8 distinct (N, gamma) cells for the bound fit");
    OutputDir dir(f.out, f.overwrite);

    const auto records = sweep(cfg);
    const auto cells = summarize(records);
    std::optional<BoundFit> fit;
    if (distinct_cells(records) >= 8) fit = bound_shape_fit(records, d, cfg.eval.delta, cfg.graph.c);
    std::vector<OodResult> ood;
    if (full_sweep && !cfg.ood_targets.empty()) ood = ood_gap(cfg, cfg.ood_targets);
    const std::size_t failed = static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const GapRecord& r) { return !r.ok(); }));

    RunManifest manifest = make_manifest(cfg, full_sweep ? "sweep" : "gap-node");
    manifest.outputs = {"results.csv", "summary.csv"};
    if (failed) manifest.outputs.push_back("failures.csv");
    if (fit) manifest.outputs.push_back("bound_fit.txt");
    if (!ood.empty()) manifest.outputs.push_back("ood.csv");
    if (f.svg) manifest.outputs.push_back("gap.svg");
    dir.write_manifest(manifest);
    dir.write("results.csv", results_csv(records));
    dir.write("summary.csv", summary_csv(cells));
    if (failed) dir.write("failures.csv", failures_csv(records));
    if (fit) dir.write("bound_fit.txt", bound_fit_report(*fit));
    if (!ood.empty()) {
        std::ostringstream o;
        o << "# manigap ood schema v" << kResultsSchema << "\nkind,radius,side_u,side_v,tilt,mean_gap,spectral_distance\n";
        for (const auto& r : ood)
            o << to_string(r.target.kind) << ',' << detail::num(r.target.radius) << ',' << detail::num(r.target.side_u) << ','
              << detail::num(r.target.side_v) << ',' << detail::num(r.target.tilt) << ',' << detail::num(r.mean_gap) << ','
              << detail::num(r.spectral_distance) << '\n';
        dir.write("ood.csv", o.str());
    }
    if (f.svg) dir.write("gap.svg", gap_svg(cells));
    dir.commit();

    out << records.size() - failed << " records, " << failed << " failures -> " << f.out << '\n';
    for (const auto& c : cells)
        out << "  N=" << c.cell.n << " gamma=" << c.cell.gamma << " c_l=" << detail::cl_field(c.cell.c_l) << " depth=" << c.cell.depth
            << " width=" << c.cell.width << "  gap " << detail::num(c.mean_gap) << " +- " << detail::num(c.std_gap) << '\n';
    if (fit) out << bound_fit_report(*fit);
    if (failed) err << "warning: " << failed << " records failed; see failures.csv\n";
    return failed == records.size() ? kRuntime : kOk;
}

inline int graph_run(const RunFlags& f, std::ostream& out, std::ostream&) {
    const ExperimentConfig cfg = load_with_overrides(f);
    if (cfg.experiment != ExperimentKind::Graph) throw ConfigError("config key 'experiment': gap-graph needs \"graph\"");
    OutputDir dir(f.out, f.overwrite);
    const auto records = graph_level_gap(cfg);
    RunManifest manifest = make_manifest(cfg, "gap-graph");
    manifest.outputs = {"graph_results.csv"};
    dir.write_manifest(manifest);
    dir.write("graph_results.csv", graph_results_csv(records));
    dir.commit();
    std::set<std::string> warned;
    for (const auto& r : records) {
        out << "gamma=" << r.nominal_gamma << " trial=" << r.trial << "  train acc " << r.train_accuracy << "  test acc "
            << r.test_accuracy << "  gap " << detail::num(r.gap) << '\n';
        for (const auto& w : r.warnings)
            if (warned.insert(w).second) out << "warning: " << w << '\n';
    }
    return kOk;
}

inline int certify_run(const std::string& path, int d, double lo, double hi, std::size_t steps, bool as_json, std::ostream& out) {
    const LambdaGrid grid{lo, hi, steps};
    grid.validate();
    if (d < 1) throw ConfigError("--d must be >= 1");
    const GnnModel model = load_checkpoint(path);
    const ModelCertificate cert = certify_model(model, d, grid);
    if (as_json) {
        out << checkpoint_json(model, &cert)["certificate"].dump(2) << '\n';
        return kOk;
    }
    std::size_t idx = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        for (Index o = 0; o < model.layers[l].f_out(); ++o)
            for (Index i = 0; i < model.layers[l].f_in(); ++i, ++idx)
                out << "layer " << l << " filter (" << o << ", " << i << ")  c_h " << detail::num(cert.filters[idx].c_h) << "  c_l "
                    << detail::num(cert.filters[idx].c_l) << '\n';
    out << "max c_h " << detail::num(cert.max_c_h) << "\nmax c_l " << detail::num(cert.max_c_l) << '\n';
    return kOk;
}

inline int converge_run(const std::string& kind, const std::vector<Index>& ns, int seeds, std::uint64_t base_seed, Index modes,
                        Index weyl_lo, Index weyl_hi, std::ostream& out) {
    if (ns.empty()) throw ConfigError("--n needs at least one node count");
    if (seeds < 1) throw ConfigError("--seeds must be >= 1");
    ManifoldSpec spec;
    spec.kind = detail::manifold_kind(kind, "--manifold");
    const ManifoldModel m = spec.build();
    std::vector<std::uint64_t> seed_list;
    for (int s = 0; s < seeds; ++s) seed_list.push_back(derive_seed(base_seed, static_cast<std::uint64_t>(s)));
    const auto rows = convergence_table(m, ns, seed_list, modes);
    out << "N,epsilon,mean_max_ratio_error\n";
    for (const auto& r : rows) out << r.n << ',' << detail::num(r.epsilon) << ',' << detail::num(r.mean_max_rel_error) << '\n';
    const Index n = *std::max_element(ns.begin(), ns.end());
    const int d = m.intrinsic_dim();
    const auto g = build_graph(sample_points(m, static_cast<std::size_t>(n), seed_list.front()), default_epsilon(n, d), d);
    const auto fit = weyl_check(graph_eigenvalues(g, weyl_hi + 1), d, weyl_lo, weyl_hi);
    out << "weyl slope at N=" << n << " over [" << weyl_lo << ", " << weyl_hi << "]: " << detail::num(fit.slope)
        << " (expected " << detail::num(2.0 / d) << ", r2 " << detail::num(fit.r2) << ")\n";
    return kOk;
}

inline int gradcheck_run(const std::string& config_path, double tol, std::ostream& out) {
    ExperimentConfig cfg;
    cfg.graph.n = {60};
    if (!config_path.empty()) cfg = load_config(config_path);
    const ManifoldModel m = cfg.manifold.build();
    const Index n = std::min<Index>(cfg.graph.n.front(), 200);
    const int d = m.intrinsic_dim();
    const auto g = build_graph(sample_points(m, static_cast<std::size_t>(n), derive_seed(cfg.eval.master_seed, "gradcheck")),
                               cfg.graph.epsilon(n, d), d);
    const auto diff = ChebyshevDiffusion::from_graph(g);
    Rng rng(derive_seed(cfg.eval.master_seed, "gradcheck-data"));
    std::normal_distribution<double> nd;
    Matrix x(n, 1), y(n, 1);
    for (Index i = 0; i < n; ++i) {
        x(i, 0) = nd(rng);
        y(i, 0) = nd(rng);
    }
    std::vector<Index> widths{1};
    for (int l = 0; l < cfg.model.depth.front(); ++l) widths.push_back(cfg.model.width.front());
    GnnModel model = init_model(widths, cfg.model.k, 1, cfg.model.activation, Task::Node, derive_seed(cfg.eval.master_seed, "init"));
    if (cfg.model.c_l.front()) model.budget = LipschitzBudget{*cfg.model.c_l.front(), d, cfg.model.grid, cfg.model.penalty_weight};
    Loss loss = cfg.model.loss;
    if (loss.kind == LossKind::CrossEntropy) {
        for (Index i = 0; i < n; ++i) y(i, 0) = y(i, 0) > 0.0 ? 1.0 : 0.0;
    }
    const double err = gradcheck(model, std::vector<Example<ChebyshevDiffusion>>{{&diff, x, y}}, loss);
    out << "parameters " << model.parameter_count() << "\nmax relative error " << detail::num(err) << " (tolerance "
        << detail::num(tol) << ")\n";
    return err <= tol ? kOk : kRuntime;
}

inline int ingest_run(const std::string& input, const std::string& output, std::optional<Index> sub, std::uint64_t seed,
                      std::ostream& out) {
    PointCloud cloud = load_point_cloud(input);
    if (sub) cloud = subsample(cloud, *sub, seed);
    out << "points " << cloud.size() << "\nambient_dim " << cloud.ambient_dim() << '\n';
    if (cloud.size() > 0) {
        const Vector lo = cloud.points.colwise().minCoeff(), hi = cloud.points.colwise().maxCoeff();
        for (Index c = 0; c < cloud.ambient_dim(); ++c)
            out << "axis " << c << " [" << detail::num(lo[c]) << ", " << detail::num(hi[c]) << "]\n";
    }
    if (!output.empty()) {
        save_point_cloud(output, cloud, format_from_path(output));
        out << "wrote " << output << '\n';
    }
    return kOk;
}

/// Parses argv and dispatches; never throws.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"manigap: generalization gaps of graph filters on manifold-sampled graphs"};
    app.require_subcommand(1);
    RunFlags flags;
    auto run_flags = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "experiment config (JSON)")->required();
        sub->add_option("--out", flags.out, "output directory")->required();
        sub->add_option("--seed", flags.seed, "master seed override");
        sub->add_option("--workers", flags.workers, "worker threads (GENLAB_WORKERS overrides)");
        sub->add_flag("--svg", flags.svg, "also write a gap-vs-log-N plot");
        sub->add_flag("--overwrite", flags.overwrite, "replace an existing output directory");
    };
    auto* gap_node = app.add_subcommand("gap-node", "node-level gap for every cell of a config");
    run_flags(gap_node);
    auto* sweep_cmd = app.add_subcommand("sweep", "node-level sweep with bound-shape fit and OOD targets");
    run_flags(sweep_cmd);
    auto* gap_graph = app.add_subcommand("gap-graph", "graph-classification gap");
    run_flags(gap_graph);

    std::string checkpoint;
    int cert_d = 1;
    double lam_lo = 0.01, lam_hi = 10.0;
    std::size_t lam_steps = 1000;
    bool as_json = false;
    auto* certify = app.add_subcommand("certify", "filter certificates of a checkpoint");
    certify->add_option("checkpoint", checkpoint, "checkpoint file")->required();
    certify->add_option("--d", cert_d, "intrinsic dimension");
    certify->add_option("--lambda-min", lam_lo, "grid lower end (> 0)");
    certify->add_option("--lambda-max", lam_hi, "grid upper end");
    certify->add_option("--steps", lam_steps, "grid points");
    certify->add_flag("--json", as_json, "machine-readable output");

    std::string kind = "circle";
    std::vector<Index> ns;
    int seeds = 3;
    std::uint64_t base_seed = 0;
    Index modes = 7, weyl_lo = 10, weyl_hi = 60;
    auto* converge = app.add_subcommand("converge", "graph-vs-manifold eigenvalue convergence");
    converge->add_option("--manifold", kind, "circle, sphere or torus");
    converge->add_option("--n", ns, "node counts")->required()->delimiter(',');
    converge->add_option("--seeds", seeds, "clouds per node count");
    converge->add_option("--seed", base_seed, "base seed");
    converge->add_option("--modes", modes, "leading eigenvalues compared");
    converge->add_option("--weyl-lo", weyl_lo, "first index of the Weyl fit");
    converge->add_option("--weyl-hi", weyl_hi, "last index of the Weyl fit");

    std::string grad_config;
    double grad_tol = 1e-5;
    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the analytic gradient");
    grad->add_option("--config", grad_config, "config supplying the architecture");
    grad->add_option("--tolerance", grad_tol, "max relative error");

    std::string input, output;
    std::optional<Index> sub;
    std::uint64_t ingest_seed = 0;
    auto* ingest = app.add_subcommand("ingest", "parse a point-cloud file (OFF or XYZ-CSV)");
    ingest->add_option("input", input, "point-cloud file")->required();
    ingest->add_option("--out", output, "re-emit as .off or .csv");
    ingest->add_option("--subsample", sub, "draw this many points without replacement");
    ingest->add_option("--seed", ingest_seed, "subsample seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kConfig;
    }

    try {
        if (*gap_node) return node_run(flags, false, out, err);
        if (*sweep_cmd) return node_run(flags, true, out, err);
        if (*gap_graph) return graph_run(flags, out, err);
        if (*certify) return certify_run(checkpoint, cert_d, lam_lo, lam_hi, lam_steps, as_json, out);
        if (*converge) return converge_run(kind, ns, seeds, base_seed, modes, weyl_lo, weyl_hi, out);
        if (*grad) return gradcheck_run(grad_config, grad_tol, out);
        if (*ingest) return ingest_run(input, output, sub, ingest_seed, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kConfig;
}

}  // namespace manigap::cli
