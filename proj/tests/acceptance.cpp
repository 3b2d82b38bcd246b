// Acceptance run: one PASS/FAIL line per criterion 1-11.
#include "mvc/config.hpp"
#include "mvc/constants.hpp"
#include "mvc/experiments.hpp"
#include "mvc/rng.hpp"
#include "mvc/simulate.hpp"
#include "mvc/transport.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace mvc;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& title, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < budget_s;
    const bool ok = o.passed && in_time;
    if (!ok) ++failures;
    std::printf("%s criterion %d: %s | %s | %.2fs (budget %.0fs)%s\n", ok ? "PASS" : "FAIL", id, title.c_str(),
                o.detail.c_str(), secs, budget_s, in_time ? "" : " OVER BUDGET");
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

ModelParams ou_params(double L1, int dim = 1) {
    ModelParams p;
    p.scalars = {{"L1", L1}, {"dim", dim}};
    return p;
}

/// sigma(x) = I + 0.3/d sum_k sin(w_k.x + p_k) M_k, ||M_k|| = 1.
struct RandomSigmaField {
    int d;
    std::vector<Vector> w;
    std::vector<double> phase;
    std::vector<Matrix> M;
    double L2 = 0.0;

    RandomSigmaField(int dim, CounterStream& rng) : d(dim) {
        double lip = 0.0;
        for (int k = 0; k < d; ++k) {
            Vector wk(d);
            for (int i = 0; i < d; ++i) wk(i) = rng.normal();
            Matrix mk(d, d);
            for (int i = 0; i < d * d; ++i) mk.data()[i] = rng.normal();
            mk /= operator_norm(mk);
            lip += 0.3 / d * wk.norm();
            w.push_back(wk);
            phase.push_back(6.283 * rng.uniform());
            M.push_back(mk);
        }
        L2 = lip * lip;
    }

    Matrix operator()(const Vector& x) const {
        Matrix s = Matrix::Identity(d, d);
        for (int k = 0; k < d; ++k) s += 0.3 / d * std::sin(w[k].dot(x) + phase[k]) * M[k];
        return s;
    }
};

PointCloud random_cloud(CounterStream& rng, int n, int d, double shift) {
    PointCloud pc(n, d);
    for (double& v : pc.data()) v = rng.normal() + shift;
    return pc;
}

bool all_passed(const std::vector<Assertion>& as, std::string& detail) {
    bool ok = !as.empty();
    for (const auto& a : as) {
        detail += " " + a.name + (a.passed ? "=ok" : "=FAILED") + fmt("(margin %.3g)", a.worst_margin);
        ok = ok && a.passed;
    }
    return ok;
}

ExperimentConfig load_config(const std::string& dir, const std::string& name) {
    return experiment_config_from_json(load_json_file(dir + "/" + name));
}

template <class R>
std::string csv_of(const R& r) {
    std::ostringstream s;
    write_csv(s, r);
    return s.str();
}

} // namespace

int main(int argc, char** argv) {
    std::string out_dir = "acceptance_out";
    std::string config_dir = MVC_CONFIG_DIR;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--out") out_dir = argv[i + 1];
        if (std::string(argv[i]) == "--configs") config_dir = argv[i + 1];
    }
    std::filesystem::create_directories(out_dir);
    auto save = [&](const std::string& name, const std::string& text) {
        std::ofstream(out_dir + "/" + name, std::ios::binary) << text;
    };

    criterion(1, "pipeline-1 constants on mean_field_ou(L1=0.1)", 1.0, [] {
        const BuiltinModel bm = builtin_model("mean_field_ou", ou_params(0.1));
        const Pipeline1Report rep = build_pipeline1(bm.model, bm.assumptions);
        const double R2 = (1 + std::sqrt(17.0)) / 2, c = 2 / (R2 * R2);
        const double err = std::max({std::abs(rep.R1 - 1), std::abs(rep.R2 - R2), std::abs(rep.c - c),
                                     std::abs(rep.gamma - (c - 0.2)), std::abs(rep.C - 2)});
        return Outcome{err <= 1e-6, fmt("R1=%.12g R2=%.12g gamma=%.12g max err %.2e", rep.R1, rep.R2, rep.gamma, err)};
    });

    criterion(2, "pipeline-2 quadrature with h(r)=4r", 1.0, [] {
        const BuiltinModel bm = builtin_model("mean_field_ou", ou_params(0.1));
        const Pipeline2Report rep = build_pipeline2(bm.model, bm.assumptions);
        const double R3 = 4.0;
        const double closed = (std::exp(4 * R3) - 1) / 16 - R3 / 4;
        const double rel = std::abs(rep.xi_inv() / closed - 1);
        const double e3 = std::abs(rep.R3 - 4), e4 = std::abs(rep.R4 - std::sqrt(76.0));
        return Outcome{rel <= 1e-8 && e3 <= 1e-12 && e4 <= 1e-12,
                       fmt("xi^-1 rel err %.2e, |R3-4| %.1e, |R4-sqrt76| %.1e", rel, e3, e4)};
    });

    criterion(3, "trace identity on 10^4 random (x, y, sigma)", 5.0, [] {
        CounterStream rng(2024, 3);
        double worst_rel = 0, worst_bound = -1e300;
        int probes = 0;
        for (int field_id = 0; field_id < 100; ++field_id) {
            const int d = 2 + field_id % 4;
            const RandomSigmaField field(d, rng);
            for (int k = 0; k < 100; ++k, ++probes) {
                Vector x(d), y(d);
                for (int i = 0; i < d; ++i) x(i) = 2 * rng.normal(), y(i) = 2 * rng.normal();
                const CouplingMatrices m = coupling_matrices(field(x), field(y), x - y);
                const double lhs = (m.alpha * m.alpha.transpose()).trace() - (m.alpha.transpose() * m.e).squaredNorm();
                const double rhs = (m.Delta * m.Delta.transpose()).trace() - (m.Delta.transpose() * m.e).squaredNorm();
                const double scale = std::max(std::abs(rhs), (m.alpha * m.alpha.transpose()).trace());
                worst_rel = std::max(worst_rel, std::abs(lhs - rhs) / scale);
                worst_bound = std::max(worst_bound, std::abs(rhs) - 2.0 * d * field.L2 * (x - y).squaredNorm());
            }
        }
        return Outcome{probes == 10000 && worst_rel <= 1e-10 && worst_bound <= 0,
                       fmt("%g probes, worst rel diff %.2e, worst bound margin %.3g", probes, worst_rel, worst_bound)};
    });

    criterion(4, "metric triangle inequality, rc^2+sc^2=1, reflection matrix", 5.0, [] {
        const BuiltinModel bm = builtin_model("double_well_attraction");
        const Pipeline1Report rep = build_pipeline1(bm.model, bm.assumptions);
        const MetricEvaluator rho = MetricEvaluator::rho(rep);
        CounterStream rng(4, 4);
        double tri = 0, rcsc = 0, hdev = 0;
        for (int k = 0; k < 10000; ++k) {
            double x[2], y[2], z[2];
            const double s = k % 2 ? 0.5 : 4.0;
            for (int i = 0; i < 2; ++i) x[i] = s * rng.normal(), y[i] = s * rng.normal(), z[i] = s * rng.normal();
            tri = std::min(tri, rho(x, y) + rho(y, z) - rho(x, z));
            const auto [rc, sc] = transition_rc_sc(2e-3 * rng.uniform(), 1e-3);
            rcsc = std::max(rcsc, std::abs(rc * rc + sc * sc - 1));
        }
        const RandomSigmaField field(3, rng);
        for (int k = 0; k < 10000; ++k) {
            Vector y(3), zv(3);
            for (int i = 0; i < 3; ++i) y(i) = 2 * rng.normal(), zv(i) = rng.normal();
            const Matrix sy = field(y);
            const Matrix H = reflection_matrix(sy, zv);
            const Vector w = sy.lu().solve(zv);
            const Vector u = w / w.norm();
            hdev = std::max({hdev, (H - H.transpose()).cwiseAbs().maxCoeff(),
                             (H * H.transpose() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), (H * u + u).cwiseAbs().maxCoeff()});
        }
        return Outcome{tri >= -1e-10 && rcsc <= 1e-10 && hdev <= 1e-10,
                       fmt("triangle slack %.2e, rc/sc dev %.2e, H dev %.2e", tri, rcsc, hdev)};
    });

    criterion(5, "assignment vs brute force and vs 1-D sorting", 30.0, [] {
        CounterStream rng(5, 5);
        double worst_brute = 0, worst_sort = 0;
        for (int inst = 0; inst < 200; ++inst) {
            const int n = 1 + inst % 8, d = 1 + inst % 3;
            const PointCloud a = random_cloud(rng, n, d, 0), b = random_cloud(rng, n, d, 0.7);
            worst_brute = std::max(worst_brute, std::abs(w_cost(a, b, euclidean).value - brute_force_transport(a, b, euclidean)));
        }
        for (int inst = 0; inst < 1000; ++inst) {
            const int n = 1 + inst % 64;
            const PointCloud a = random_cloud(rng, n, 1, 0), b = random_cloud(rng, n, 1, 0.5);
            std::vector<double> sa = a.data(), sb = b.data();
            std::sort(sa.begin(), sa.end());
            std::sort(sb.begin(), sb.end());
            double s = 0;
            for (int i = 0; i < n; ++i) s += std::abs(sa[i] - sb[i]);
            worst_sort = std::max(worst_sort, std::abs(w_cost(a, b, euclidean).value - s / n));
        }
        return Outcome{worst_brute <= 1e-12 && worst_sort <= 1e-12,
                       fmt("worst |assignment - brute| %.2e, |assignment - sorted| %.2e", worst_brute, worst_sort)};
    });

    std::vector<std::string> first_csv;
    auto c6 = [&] { return run_contraction(load_config(config_dir, "contraction_ou.json")); };
    auto c7 = [&] { return run_contraction(load_config(config_dir, "contraction_sync.json")); };
    auto c8 = [&] { return run_ergodicity(load_config(config_dir, "ergodicity_ou.json")); };
    auto c9 = [&] { return run_chaos(load_config(config_dir, "chaos_ou.json")); };
    auto c10 = [&] { return run_moment_bound(load_config(config_dir, "moments_ou.json")); };

    criterion(6, "contraction bound, mean_field_ou(0.1), N=2000, T=20, 8 replicates", 300.0, [&] {
        const ContractionResult r = c6();
        first_csv.push_back(csv_of(r));
        save("contraction.csv", first_csv.back());
        save("contraction.json", to_json(r).dump(2));
        std::string detail = fmt("gamma %.6f, fitted rate %.4f over %g points, floor %.4f;", r.rate_constant,
                                 r.fit ? r.fit->decay_rate : NAN, r.fit ? r.fit->points : 0, r.noise_floor);
        const bool ok = all_passed(r.assertions, detail);
        return Outcome{ok && r.assertions.size() == 2, detail};
    });

    criterion(7, "synchronous coupling exact rate (kappa = -1, L2 = 0)", 30.0, [&] {
        const ContractionResult r = c7();
        first_csv.push_back(csv_of(r));
        save("synchronous.csv", first_csv.back());
        if (!r.pair_fit) return Outcome{false, "no pair fit"};
        const double s = r.pair_fit->slope;
        return Outcome{std::abs(s + 1) <= 0.02, fmt("log r_t slope %.6f (Euler factor log(1-h)/h = %.6f)", s, std::log(0.99) / 0.01)};
    });

    criterion(8, "ergodicity, terminal moments at T=30, N=4000", 180.0, [&] {
        const ErgodicityResult r = c8();
        first_csv.push_back(csv_of(r));
        save("ergodicity.csv", first_csv.back());
        save("ergodicity.json", to_json(r).dump(2));
        bool ok = true;
        std::string detail = fmt("mean %.5f (se %.5f), variance %.5f (se %.5f);", r.terminal_mean, r.terminal_mean_se,
                                 r.terminal_variance, r.terminal_variance_se);
        for (const auto& a : r.assertions) {
            detail += " " + a.name + (a.passed ? "=ok" : "=FAILED");
            if (a.name != "cauchy_at_noise_floor") ok = ok && a.passed;
        }
        return Outcome{ok && r.stationary_variance.has_value(), detail};
    });

    criterion(9, "propagation of chaos, n in 64..2048", 600.0, [&] {
        const ChaosResult r = c9();
        first_csv.push_back(csv_of(r));
        save("chaos.csv", first_csv.back());
        save("chaos.json", to_json(r).dump(2));
        std::string detail = fmt("log-log slope %.4f, fitted C %.4g;", r.slope, r.fitted_C);
        const bool ok = all_passed(r.assertions, detail);
        return Outcome{ok && r.slope <= -0.2, detail};
    });

    criterion(10, "moment boundedness from X0 = 0", 120.0, [&] {
        const MomentResult r = c10();
        first_csv.push_back(csv_of(r));
        save("moments.csv", first_csv.back());
        save("moments.json", to_json(r).dump(2));
        const double target = 1.0 / std::sqrt(std::acos(-1.0));
        const bool near = std::abs(r.sup_abs_moment / target - 1) <= 0.05;
        std::string detail = fmt("sup E|X_t| %.5f vs %.5f, ceiling %.4f;", r.sup_abs_moment, target, r.ceiling.ceiling);
        const bool ok = all_passed(r.assertions, detail);
        return Outcome{ok && near, detail};
    });

    criterion(11, "bitwise-identical CSV on rerun of 6-10", 1200.0, [&] {
        if (first_csv.size() != 5) return Outcome{false, "earlier criteria did not produce all outputs"};
        const std::vector<std::string> again{csv_of(c6()), csv_of(c7()), csv_of(c8()), csv_of(c9()), csv_of(c10())};
        int same = 0;
        for (int k = 0; k < 5; ++k) same += again[k] == first_csv[k];
        return Outcome{same == 5, fmt("%g of 5 outputs identical", same)};
    });

    std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
