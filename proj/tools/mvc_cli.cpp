// mvc: command-line front end for the contraction toolkit.
#include "mvc/config.hpp"
#include "mvc/constants.hpp"
#include "mvc/experiments.hpp"
#include "mvc/simulate.hpp"
#include "mvc/transport.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

using namespace mvc;
using nlohmann::json;

namespace {

struct Overrides {
    std::optional<int> n, replicates, workers, pipeline;
    std::optional<double> h, T, delta;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint32_t> stride;
    std::optional<std::string> mode;

    void attach(CLI::App* app) {
        app->add_option("--n", n, "particles per ensemble");
        app->add_option("--h", h, "step size");
        app->add_option("--T", T, "horizon");
        app->add_option("--stride", stride, "record every k steps");
        app->add_option("--seed", seed, "RNG seed");
        app->add_option("--replicates", replicates, "independent replicates");
        app->add_option("--workers", workers, "worker threads");
        app->add_option("--mode", mode, "mixed | synchronous | reflection | independent");
        app->add_option("--delta", delta, "mixed-coupling transition width");
        app->add_option("--pipeline", pipeline, "1 or 2");
    }

    void apply(ExperimentConfig& c) const {
        if (n) c.n = *n;
        if (h) c.h = *h;
        if (T) c.T = *T;
        if (stride) c.stride = *stride;
        if (seed) c.seed = *seed;
        if (replicates) c.replicates = *replicates;
        if (workers) c.workers = *workers;
        if (mode) c.mode = coupling_mode_from_string(*mode);
        if (delta) c.delta = *delta;
        if (pipeline) c.pipeline = *pipeline;
    }
};

struct Outputs {
    std::string csv, json_path, svg;

    void attach(CLI::App* app) {
        app->add_option("--csv", csv, "series CSV");
        app->add_option("--json", json_path, "JSON summary (stdout when absent)");
        app->add_option("--svg", svg, "SVG plot");
    }
};

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    return out;
}

json root_config(const std::string& path) { return path.empty() ? json::object() : load_json_file(path); }

template <class Result>
int emit(const Result& r, const Outputs& o, const std::function<std::vector<PlotSeries>()>& plot, bool log_y,
         const std::string& title, const std::string& x_label) {
    if (!o.csv.empty()) {
        auto out = open_out(o.csv);
        write_csv(out, r);
    }
    if (!o.svg.empty()) {
        auto out = open_out(o.svg);
        write_svg(out, title, plot(), log_y, x_label);
    }
    const json j = to_json(r);
    if (!o.json_path.empty()) {
        auto out = open_out(o.json_path);
        out << j.dump(2) << '\n';
    } else {
        std::cout << j.dump(2) << '\n';
    }
    bool ok = true;
    for (const auto& a : r.assertions) {
        std::fprintf(stderr, "%s %s (worst margin %.6g)\n", a.passed ? "PASS" : "FAIL", a.name.c_str(), a.worst_margin);
        ok = ok && a.passed;
    }
    return ok ? 0 : 2;
}

PlotSeries series(const std::string& label, const std::vector<SeriesRow>& rows) {
    PlotSeries s{label, {}, {}};
    for (const auto& r : rows) {
        s.x.push_back(r.t);
        s.y.push_back(r.mean);
    }
    return s;
}

void write_table(const std::string& path, const Tabulation& t) {
    auto out = open_out(path);
    out << "r,phi,Phi,g,f,df\n";
    char buf[160];
    for (std::size_t k = 0; k < t.r.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", t.r[k], t.phi[k], t.Phi[k], t.g[k], t.f[k],
                      t.df[k]);
        out << buf;
    }
}

json validation_json(const ValidationReport& rep) {
    json checks = json::array();
    for (const auto& c : rep.checks) {
        checks.push_back({{"name", c.name}, {"applicable", c.applicable}, {"passed", c.passed},
                          {"worst_margin", c.worst_margin}, {"detail", c.detail}});
    }
    return {{"passed", rep.passed()}, {"checks", checks}};
}

PointCloud read_cloud(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_point_cloud_csv(in);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"McKean-Vlasov contraction toolkit"};
    app.require_subcommand(1);
    // --h is the step size, so help is long-form only.
    app.set_help_flag("--help", "print help");

    std::string config;
    int pipeline = 1;
    double quad_tol = 1e-10;
    std::string table;
    auto* constants = app.add_subcommand("constants", "contraction constants for a model");
    constants->add_option("--config", config, "JSON config")->check(CLI::ExistingFile);
    constants->add_option("--pipeline", pipeline, "1 or 2");
    constants->add_option("--quad-tol", quad_tol, "quadrature tolerance");
    constants->add_option("--table", table, "write the r, phi, Phi, g, f, f' table as CSV");

    int probes = 1000;
    auto* validate = app.add_subcommand("validate", "probe the declared assumptions");
    validate->add_option("--config", config, "JSON config")->check(CLI::ExistingFile);
    validate->add_option("--probes", probes, "probe count");
    validate->add_option("--pipeline", pipeline, "1 or 2");

    Overrides ov;
    std::string traj_out, format = "csv";
    auto* simulate = app.add_subcommand("simulate", "n-particle system from mu0");
    simulate->add_option("--config", config, "JSON config")->check(CLI::ExistingFile);
    simulate->add_option("--out", traj_out, "trajectory file")->required();
    simulate->add_option("--format", format, "csv | binary")->check(CLI::IsMember({"csv", "binary"}));
    ov.attach(simulate);

    std::string cloud_a, cloud_b, metric = "euclidean";
    double power = 1.0;
    auto* transport = app.add_subcommand("transport", "Wasserstein distance between two CSV clouds");
    transport->add_option("a", cloud_a, "first cloud")->required()->check(CLI::ExistingFile);
    transport->add_option("b", cloud_b, "second cloud")->required()->check(CLI::ExistingFile);
    transport->add_option("--p", power, "ground cost |x - y|^p");
    transport->add_option("--metric", metric, "euclidean | rho | rho1")->check(CLI::IsMember({"euclidean", "rho", "rho1"}));
    transport->add_option("--config", config, "model config for rho metrics")->check(CLI::ExistingFile);

    Outputs outs;
    auto experiment = [&](const char* name, const char* help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "JSON config")->check(CLI::ExistingFile);
        ov.attach(sub);
        outs.attach(sub);
        return sub;
    };
    auto* contract = experiment("contract", "coupled contraction experiment");
    auto* chaos = experiment("chaos", "propagation of chaos experiment");
    auto* ergodic = experiment("ergodic", "long-run convergence to the invariant law");
    auto* moments = experiment("moments", "sup-in-time first moment from X0 = 0");

    CLI11_PARSE(app, argc, argv);

    try {
        const json root = root_config(config);
        if (*constants || *validate) {
            const BuiltinModel bm = model_from_json(root.contains("model") ? root : json{{"model", {{"name", "mean_field_ou"}}}});
            if (root.contains("pipeline") && constants->count("--pipeline") == 0 && validate->count("--pipeline") == 0) {
                pipeline = root["pipeline"].get<int>();
            }
            if (*validate) {
                ProbePlan plan;
                plan.n_probe = probes;
                plan.pipeline1 = pipeline == 1;
                plan.pipeline2 = pipeline == 2;
                const ValidationReport rep = validate_bundle(bm.model, bm.assumptions, plan);
                std::cout << validation_json(rep).dump(2) << '\n';
                return rep.passed() ? 0 : 2;
            }
            ConstantsOptions opt;
            opt.quad_tol = quad_tol;
            json j;
            if (pipeline == 1) {
                const Pipeline1Report rep = build_pipeline1(bm.model, bm.assumptions, opt);
                j = to_json(rep);
                if (!table.empty()) write_table(table, rep.table);
            } else if (pipeline == 2) {
                const Pipeline2Report rep = build_pipeline2(bm.model, bm.assumptions, opt);
                j = to_json(rep);
                if (!table.empty()) write_table(table, rep.table);
            } else {
                throw Error("pipeline must be 1 or 2");
            }
            std::cout << j.dump(2) << '\n';
            return 0;
        }

        if (*transport) {
            const PointCloud a = read_cloud(cloud_a), b = read_cloud(cloud_b);
            TransportResult r;
            if (metric == "euclidean") {
                r = power == 1.0 ? w1(a, b) : w_power(a, b, power);
            } else {
                const BuiltinModel bm = model_from_json(root);
                if (metric == "rho" && root.value("pipeline", 1) == 1) {
                    r = w_cost(a, b, MetricEvaluator::rho(build_pipeline1(bm.model, bm.assumptions)).as_cost());
                } else {
                    const Pipeline2Report rep = build_pipeline2(bm.model, bm.assumptions);
                    const MetricEvaluator m = metric == "rho" ? MetricEvaluator::rho(rep) : MetricEvaluator::rho1(rep);
                    r = w_cost(a, b, m.as_cost());
                }
            }
            std::cout << json{{"value", r.value}, {"method", to_string(r.method)}, {"std_error", r.std_error},
                              {"subsamples", r.subsamples}}
                             .dump(2)
                      << '\n';
            return 0;
        }

        ExperimentConfig cfg = experiment_config_from_json(root);
        ov.apply(cfg);

        if (*simulate) {
            const BuiltinModel bm = resolve_model(cfg);
            ParticleEnsemble pe;
            pe.states = cfg.mu0.sample(cfg.n, bm.model.dim, cfg.seed, 0);
            StepPlan plan;
            plan.h = cfg.h;
            plan.steps = static_cast<std::uint32_t>(std::llround(cfg.T / cfg.h));
            plan.stride = cfg.stride;
            plan.seed = cfg.seed;
            plan.workers = cfg.workers;
            auto out = open_out(traj_out);
            TrajectoryWriter w(out, format == "csv" ? TrajectoryWriter::Format::csv : TrajectoryWriter::Format::binary,
                               cfg.n, bm.model.dim, cfg.h);
            run_particle_system(pe, bm.model, plan, [&](const ParticleEnsemble& e) { w.write(e); });
            return 0;
        }
        if (*contract) {
            const ContractionResult r = run_contraction(cfg);
            return emit(
                r, outs,
                [&] {
                    PlotSeries b{"bound", {}, r.bound};
                    for (const auto& row : r.w1) b.x.push_back(row.t);
                    std::vector<PlotSeries> s{series("W1", r.w1), b, series("W_rho", r.w_rho)};
                    if (!r.bound_applicable) s.erase(s.begin() + 1);
                    if (!r.w_rho1.empty()) s.push_back(series("W_rho1", r.w_rho1));
                    return s;
                },
                true, "coupled contraction", "t");
        }
        if (*chaos) {
            const ChaosResult r = run_chaos(cfg);
            for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
            return emit(
                r, outs,
                [&] {
                    PlotSeries m{"mean W1 to reference", {}, {}}, b{"fitted bound", {}, {}};
                    for (const auto& row : r.rows) {
                        m.x.push_back(row.n);
                        m.y.push_back(row.mean);
                        b.x.push_back(row.n);
                        b.y.push_back(row.bound);
                    }
                    return std::vector<PlotSeries>{m, b};
                },
                true, "propagation of chaos", "n");
        }
        if (*ergodic) {
            const ErgodicityResult r = run_ergodicity(cfg);
            return emit(
                r, outs, [&] { return std::vector<PlotSeries>{series("mean", r.mean_series), series("variance", r.variance_series)}; },
                false, "ergodicity", "t");
        }
        if (*moments) {
            const MomentResult r = run_moment_bound(cfg);
            return emit(
                r, outs,
                [&] {
                    PlotSeries c{"ceiling", {}, {}};
                    for (const auto& row : r.abs_moment) {
                        c.x.push_back(row.t);
                        c.y.push_back(r.ceiling.ceiling);
                    }
                    return std::vector<PlotSeries>{series("E|X_t|", r.abs_moment), c};
                },
                false, "first absolute moment", "t");
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "mvc: %s\n", e.what());
        return 1;
    }
    return 0;
}
