#include "mvc/experiments.hpp"

#include "mvc/config.hpp"
#include "mvc/rng.hpp"
#include "mvc/transport.hpp"

#include <gsl/gsl_fit.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

namespace mvc {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Initial laws

InitialLaw InitialLaw::point(Vector at) {
    InitialLaw l;
    l.kind = Kind::point;
    l.center = std::move(at);
    return l;
}

InitialLaw InitialLaw::gaussian(Vector mean, double stddev) {
    InitialLaw l;
    l.kind = Kind::gaussian;
    l.center = std::move(mean);
    l.stddev = stddev;
    return l;
}

PointCloud InitialLaw::sample(int n, int dim, std::uint64_t seed, std::uint32_t stream) const {
    const Vector c = center.size() == 0 ? Vector::Zero(dim) : center;
    if (c.size() != dim) throw Error("initial law dimension does not match the model");
    PointCloud out(n, dim);
    CounterStream rng(seed, stream);
    switch (kind) {
    case Kind::point:
        for (int i = 0; i < n; ++i) out.point(i) = c;
        break;
    case Kind::gaussian:
        for (int i = 0; i < n; ++i) {
            for (int k = 0; k < dim; ++k) out.at(i, k) = c(k) + stddev * rng.normal();
        }
        break;
    case Kind::cloud:
        if (cloud.size() < 1 || cloud.dim() != dim) throw Error("initial cloud is empty or has the wrong dimension");
        for (int i = 0; i < n; ++i) {
            const int j = cloud.size() == n ? i : std::min(cloud.size() - 1, static_cast<int>(rng.uniform() * cloud.size()));
            out.point(i) = cloud.point(j);
        }
        break;
    }
    return out;
}

BuiltinModel resolve_model(const ExperimentConfig& cfg) {
    BuiltinModel bm = builtin_model(cfg.model_name, cfg.model_params);
    apply_assumption_overrides(bm.assumptions, cfg.assumption_overrides);
    return bm;
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

struct Ols {
    double c0 = 0.0, c1 = 0.0, r2 = 0.0;
};

Ols ols(const std::vector<double>& x, const std::vector<double>& y) {
    Ols o;
    double cov00, cov01, cov11, sumsq;
    gsl_fit_linear(x.data(), 1, y.data(), 1, x.size(), &o.c0, &o.c1, &cov00, &cov01, &cov11, &sumsq);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double tot = 0.0;
    for (double v : y) tot += (v - my) * (v - my);
    o.r2 = tot > 0.0 ? 1.0 - sumsq / tot : 1.0;
    if (sumsq <= 1e-24 * std::max(1.0, tot)) o.r2 = 1.0;
    return o;
}

} // namespace

RateFit fit_rate(const std::vector<double>& t, const std::vector<double>& value, double noise_floor, double t_min) {
    if (t.size() != value.size()) throw Error("fit_rate: series lengths differ");
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t_min) continue;
        if (!(value[k] > noise_floor) || !(value[k] > 0.0)) break;
        xs.push_back(t[k]);
        ys.push_back(std::log(value[k]));
    }
    if (xs.size() < 5) {
        throw Error("fit_rate: only " + std::to_string(xs.size()) + " points above the noise floor (need 5)");
    }
    const Ols o = ols(xs, ys);
    RateFit f;
    f.slope = o.c1;
    f.decay_rate = -o.c1;
    f.intercept = o.c0;
    f.r_squared = o.r2;
    f.t_min = xs.front();
    f.t_max = xs.back();
    f.points = static_cast<int>(xs.size());
    return f;
}

namespace {

// ---------------------------------------------------------------------------
// Shared helpers

struct MeanSe {
    double mean = 0.0, se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
    MeanSe m;
    const double n = static_cast<double>(v.size());
    if (v.empty()) return m;
    m.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - m.mean) * (x - m.mean);
        m.se = std::sqrt(ss / (n - 1.0) / n);
    }
    return m;
}

/// rows[k] = mean/se over replicates of per_replicate[r][k].
std::vector<SeriesRow> reduce(const std::vector<double>& t, const std::vector<std::vector<double>>& per_replicate) {
    std::vector<SeriesRow> rows;
    for (std::size_t k = 0; k < t.size(); ++k) {
        std::vector<double> col;
        for (const auto& rep : per_replicate) col.push_back(rep[k]);
        const MeanSe m = mean_se(col);
        rows.push_back({t[k], m.mean, m.se});
    }
    return rows;
}

std::uint32_t step_count(const ExperimentConfig& cfg) {
    if (!(cfg.h > 0.0) || !(cfg.T > 0.0)) throw Error("experiment needs h > 0 and T > 0");
    const double steps = std::round(cfg.T / cfg.h);
    if (std::abs(steps * cfg.h - cfg.T) > 1e-9 * cfg.T) throw Error("T must be a multiple of h");
    return static_cast<std::uint32_t>(steps);
}

void validate_common(const ExperimentConfig& cfg) {
    if (cfg.replicates < 1) throw Error("replicate count must be >= 1");
    if (cfg.n < 1) throw Error("N must be >= 1");
}

StepPlan plan_of(const ExperimentConfig& cfg) {
    StepPlan p;
    p.h = cfg.h;
    p.steps = step_count(cfg);
    p.stride = std::max<std::uint32_t>(cfg.stride, 1);
    p.seed = cfg.seed;
    p.workers = 1;
    return p;
}

double abs_moment(const PointCloud& pc) {
    double s = 0.0;
    for (int i = 0; i < pc.size(); ++i) s += pc.point(i).norm();
    return s / pc.size();
}

/// Coordinate-averaged sample mean and variance.
std::pair<double, double> moments(const PointCloud& pc) {
    const Vector m = pc.mean();
    double v = 0.0;
    for (int i = 0; i < pc.size(); ++i) v += (pc.point(i) - m).squaredNorm();
    const double denom = std::max(1, pc.size() - 1) * static_cast<double>(pc.dim());
    return {m.mean(), v / denom};
}

double independent_floor(const std::vector<PointCloud>& terminal) {
    if (terminal.size() >= 2) {
        std::vector<double> d;
        for (std::size_t r = 0; r + 1 < terminal.size(); ++r) d.push_back(w1(terminal[r], terminal[r + 1]).value);
        return mean_se(d).mean;
    }
    const PointCloud& x = terminal.front();
    const int half = x.size() / 2;
    if (half < 1) return 0.0;
    PointCloud a(half, x.dim()), b(half, x.dim());
    for (int i = 0; i < half; ++i) {
        a.point(i) = x.point(i);
        b.point(i) = x.point(half + i);
    }
    return w1(a, b).value;
}

Assertion dominance(const std::string& name, const std::vector<double>& lhs, const std::vector<double>& rhs) {
    Assertion a;
    a.name = name;
    a.worst_margin = -std::numeric_limits<double>::infinity();
    int worst = -1;
    for (std::size_t k = 0; k < lhs.size(); ++k) {
        const double m = lhs[k] - rhs[k];
        if (m > a.worst_margin) {
            a.worst_margin = m;
            worst = static_cast<int>(k);
        }
    }
    a.passed = a.worst_margin <= 0.0;
    if (!a.passed) a.detail = "violated at row " + std::to_string(worst);
    return a;
}

} // namespace

// ---------------------------------------------------------------------------
// Contraction

ContractionResult run_contraction(const ExperimentConfig& cfg) {
    validate_common(cfg);
    const BuiltinModel bm = resolve_model(cfg);
    const CoefficientModel& model = bm.model;
    const int d = model.dim;

    ContractionResult res;
    res.pipeline = cfg.pipeline;
    std::optional<MetricEvaluator> rho, rho1;
    if (cfg.pipeline == 1) {
        const Pipeline1Report rep = build_pipeline1(model, bm.assumptions);
        res.rate_constant = rep.gamma;
        res.C = rep.C;
        res.bound_applicable = rep.gamma > 0.0;
        res.constants = to_json(rep);
        rho = MetricEvaluator::rho(rep);
    } else if (cfg.pipeline == 2) {
        ConstantsOptions opt;
        const Pipeline2Report rep = build_pipeline2(model, bm.assumptions, opt);
        res.rate_constant = rep.c;
        res.bound_applicable = rep.below_L1_star;
        res.constants = to_json(rep);
        rho = MetricEvaluator::rho(rep);
        rho1 = MetricEvaluator::rho1(rep);
    } else {
        throw Error("pipeline must be 1 or 2");
    }

    const StepPlan plan = plan_of(cfg);
    const int R = cfg.replicates;
    std::vector<double> times;
    std::vector<std::vector<double>> w1_rep(R), pair_rep(R), rho_rep(R), rho1_rep(R);
    std::vector<double> metric_times;
    std::vector<PointCloud> terminal(R);
    const int every = std::max(cfg.metric_every, 1);
    TransportOptions topt;
    topt.exact_cap = cfg.metric_subsample_size;
    topt.subsample_size = cfg.metric_subsample_size;
    topt.subsample_count = cfg.metric_subsamples;

    parallel_for(R, cfg.workers, [&](int begin, int end) {
        for (int r = begin; r < end; ++r) {
            CoupledEnsemble ce;
            ce.X.states = cfg.mu0.sample(cfg.n, d, cfg.seed, 2u * r);
            ce.Y.states = cfg.nu0.sample(cfg.n, d, cfg.seed, 2u * r + 1u);
            ce.X.stream = ce.Y.stream = static_cast<std::uint32_t>(r);
            ce.delta = cfg.delta;
            ce.mode = cfg.mode;
            int record = 0;
            std::vector<double> local_times, local_metric_times;
            run_coupled(ce, model, plan, [&](const CoupledEnsemble& c) {
                local_times.push_back(c.X.time);
                w1_rep[r].push_back(w1(c.X.states, c.Y.states).value);
                double pr = 0.0;
                for (int i = 0; i < cfg.n; ++i) pr += (c.X.states.point(i) - c.Y.states.point(i)).norm();
                pair_rep[r].push_back(pr / cfg.n);
                if (record % every == 0 || c.X.step == plan.steps) {
                    TransportOptions o = topt;
                    o.seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(r) * 7919ULL + record;
                    local_metric_times.push_back(c.X.time);
                    rho_rep[r].push_back(w_cost(c.X.states, c.Y.states, rho->as_cost(), o).value);
                    if (rho1) rho1_rep[r].push_back(w_cost(c.X.states, c.Y.states, rho1->as_cost(), o).value);
                }
                ++record;
            });
            terminal[r] = ce.X.states;
            if (r == 0) {
                times = local_times;
                metric_times = local_metric_times;
            }
        }
    });

    res.w1 = reduce(times, w1_rep);
    res.pair_r = reduce(times, pair_rep);
    res.w_rho = reduce(metric_times, rho_rep);
    if (rho1) res.w_rho1 = reduce(metric_times, rho1_rep);
    res.noise_floor = independent_floor(terminal);

    std::vector<double> tv, mv, lhs, rhs;
    const double w0 = res.w1.front().mean;
    for (const auto& row : res.w1) {
        tv.push_back(row.t);
        mv.push_back(row.mean);
        const double b = res.C * std::exp(-res.rate_constant * row.t) * w0;
        res.bound.push_back(b);
        lhs.push_back(row.mean);
        rhs.push_back(b + 3.0 * row.std_error);
    }
    try {
        res.fit = fit_rate(tv, mv, 3.0 * res.noise_floor, cfg.fit_t_min);
    } catch (const Error&) {
        res.fit.reset();
    }
    {
        std::vector<double> pv;
        for (const auto& row : res.pair_r) pv.push_back(row.mean);
        try {
            res.pair_fit = fit_rate(tv, pv, 0.0, cfg.fit_t_min);
        } catch (const Error&) {
            res.pair_fit.reset();
        }
    }

    if (cfg.pipeline == 1 && res.bound_applicable) {
        res.assertions.push_back(dominance("w1_bound_dominance", lhs, rhs));
        Assertion a;
        a.name = "fitted_rate_at_least_0.9_gamma";
        if (res.fit) {
            a.worst_margin = 0.9 * res.rate_constant - res.fit->decay_rate;
            a.passed = a.worst_margin <= 0.0;
        } else {
            a.detail = "too few points above the noise floor to fit a rate";
        }
        res.assertions.push_back(a);
    }
    if (cfg.pipeline == 2 && res.bound_applicable && !res.w_rho1.empty()) {
        std::vector<double> l, rr;
        const double r0 = res.w_rho1.front().mean;
        for (const auto& row : res.w_rho1) {
            l.push_back(row.mean);
            rr.push_back(std::exp(-res.rate_constant * row.t) * r0 + 3.0 * row.std_error);
        }
        res.assertions.push_back(dominance("w_rho1_bound_dominance", l, rr));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Propagation of chaos

ChaosResult run_chaos(const ExperimentConfig& cfg) {
    validate_common(cfg);
    if (cfg.n_grid.size() < 2) throw Error("chaos experiment needs at least two particle counts");
    const BuiltinModel bm = resolve_model(cfg);
    const CoefficientModel& model = bm.model;
    const int d = model.dim;
    const Pipeline1Report rep = build_pipeline1(model, bm.assumptions);

    ChaosResult res;
    res.gamma = rep.gamma;
    res.n_ref = cfg.n_ref_factor * *std::max_element(cfg.n_grid.begin(), cfg.n_grid.end());
    if (d >= 2) res.warnings.push_back("d >= 2: reference compared through its first n particles");
    if (d >= 2 && res.n_ref > TransportOptions{}.exact_cap) res.warnings.push_back("distances above the exact cap are subsampled");

    const StepPlan plan = plan_of(cfg);
    const int R = cfg.replicates;
    const std::size_t m = cfg.n_grid.size();
    std::vector<std::vector<double>> final_d(R, std::vector<double>(m)), init_d(R, std::vector<double>(m));

    auto distance = [&](const PointCloud& a, const PointCloud& ref) {
        if (d == 1) return w1(a, ref).value;
        PointCloud head(a.size(), d);
        for (int i = 0; i < a.size(); ++i) head.point(i) = ref.point(i);
        return w1(a, head).value;
    };

    parallel_for(R, cfg.workers, [&](int begin, int end) {
        for (int r = begin; r < end; ++r) {
            const std::uint32_t base = static_cast<std::uint32_t>(r) * 64u;
            ParticleEnsemble ref;
            ref.states = cfg.mu0.sample(res.n_ref, d, cfg.seed, base);
            ref.stream = base;
            const PointCloud ref0 = ref.states;
            run_particle_system(ref, model, plan);
            for (std::size_t j = 0; j < m; ++j) {
                ParticleEnsemble pe;
                pe.states = cfg.mu0.sample(cfg.n_grid[j], d, cfg.seed, base + 1 + static_cast<std::uint32_t>(j));
                pe.stream = base + 1 + static_cast<std::uint32_t>(j);
                init_d[r][j] = distance(pe.states, ref0);
                run_particle_system(pe, model, plan);
                final_d[r][j] = distance(pe.states, ref.states);
            }
        }
    });

    const double decay = std::exp(-rep.gamma * cfg.T);
    std::vector<double> logn, logd;
    for (std::size_t j = 0; j < m; ++j) {
        std::vector<double> fin, ini;
        for (int r = 0; r < R; ++r) {
            fin.push_back(final_d[r][j]);
            ini.push_back(init_d[r][j]);
        }
        ChaosRow row;
        row.n = cfg.n_grid[j];
        const MeanSe f = mean_se(fin);
        row.mean = f.mean;
        row.std_error = f.se;
        row.initial = mean_se(ini).mean;
        res.rows.push_back(row);
        logn.push_back(std::log(static_cast<double>(row.n)));
        logd.push_back(std::log(row.mean));
    }
    res.slope = ols(logn, logd).c1;

    if (rep.gamma > 0.0) {
        // The constant is fitted on the smaller half of the grid only.
        const std::size_t fit_upto = (m + 1) / 2;
        for (std::size_t j = 0; j < fit_upto; ++j) {
            const auto& row = res.rows[j];
            const double need = (row.mean - decay * row.initial) * rep.gamma * std::pow(row.n, 0.25);
            res.fitted_C = std::max(res.fitted_C, need);
        }
        std::vector<double> lhs, rhs;
        for (auto& row : res.rows) {
            row.bound = decay * row.initial + res.fitted_C * std::pow(row.n, -0.25) / rep.gamma;
            lhs.push_back(row.mean);
            rhs.push_back(row.bound + 3.0 * row.std_error);
        }
        res.assertions.push_back(dominance("chaos_bound_dominance", lhs, rhs));
    } else {
        res.warnings.push_back("gamma <= 0: dominance not checked");
    }
    return res;
}

// ---------------------------------------------------------------------------
// Ergodicity

ErgodicityResult run_ergodicity(const ExperimentConfig& cfg) {
    validate_common(cfg);
    const BuiltinModel bm = resolve_model(cfg);
    const CoefficientModel& model = bm.model;
    const int d = model.dim;
    const StepPlan plan = plan_of(cfg);
    const int R = cfg.replicates;

    const std::uint32_t mid_step = plan.steps / 2;
    std::vector<std::uint32_t> lag_steps;
    std::vector<double> lags;
    for (double s : cfg.cauchy_lags) {
        const auto k = static_cast<std::uint32_t>(std::llround(s / cfg.h));
        if (k > 0 && mid_step + k <= plan.steps) {
            lag_steps.push_back(mid_step + k);
            lags.push_back(s);
        }
    }

    std::vector<double> times;
    std::vector<std::vector<double>> mean_rep(R), var_rep(R), cauchy_rep(R, std::vector<double>(lags.size()));
    std::vector<PointCloud> terminal(R);
    parallel_for(R, cfg.workers, [&](int begin, int end) {
        for (int r = begin; r < end; ++r) {
            ParticleEnsemble pe;
            pe.states = cfg.nu0.sample(cfg.n, d, cfg.seed, static_cast<std::uint32_t>(r));
            pe.stream = static_cast<std::uint32_t>(r);
            std::vector<double> local_times;
            PointCloud mid;
            std::size_t next = 0;
            StepPlan every_step = plan;
            every_step.stride = 1;
            run_particle_system(pe, model, every_step, [&](const ParticleEnsemble& e) {
                if (e.step % plan.stride == 0 || e.step == plan.steps) {
                    local_times.push_back(e.time);
                    const auto [m, v] = moments(e.states);
                    mean_rep[r].push_back(m);
                    var_rep[r].push_back(v);
                }
                // Cauchy check: distance between the midpoint law and later laws of the same path.
                if (e.step == mid_step) mid = e.states;
                while (next < lag_steps.size() && e.step == lag_steps[next]) {
                    cauchy_rep[r][next] = w1(mid, e.states).value;
                    ++next;
                }
            });
            if (r == 0) times = local_times;
            terminal[r] = pe.states;
        }
    });

    ErgodicityResult res;
    res.mean_series = reduce(times, mean_rep);
    res.variance_series = reduce(times, var_rep);
    res.cauchy = reduce(lags, cauchy_rep);
    res.noise_floor = independent_floor(terminal);
    res.terminal_mean = res.mean_series.back().mean;
    res.terminal_mean_se = res.mean_series.back().std_error;
    res.terminal_variance = res.variance_series.back().mean;
    res.terminal_variance_se = res.variance_series.back().std_error;
    if (R == 1) {
        res.terminal_mean_se = std::sqrt(res.terminal_variance / cfg.n);
        res.terminal_variance_se = res.terminal_variance * std::sqrt(2.0 / std::max(1, cfg.n - 1));
    }
    if (cfg.model_name == "mean_field_ou") res.stationary_variance = 0.5;

    {
        Assertion a;
        a.name = "terminal_mean_within_3se";
        a.worst_margin = std::abs(res.terminal_mean) - 3.0 * res.terminal_mean_se;
        a.passed = a.worst_margin <= 0.0;
        res.assertions.push_back(a);
    }
    if (res.stationary_variance) {
        Assertion a;
        a.name = "terminal_variance_within_5pct";
        a.worst_margin = std::abs(res.terminal_variance - *res.stationary_variance) - 0.05 * *res.stationary_variance;
        a.passed = a.worst_margin <= 0.0;
        res.assertions.push_back(a);
    }
    if (!res.cauchy.empty()) {
        std::vector<double> lhs, rhs;
        for (const auto& row : res.cauchy) {
            lhs.push_back(row.mean);
            rhs.push_back(3.0 * res.noise_floor + 3.0 * row.std_error);
        }
        res.assertions.push_back(dominance("cauchy_at_noise_floor", lhs, rhs));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Moments

MomentCeiling moment_ceiling(const CoefficientModel& model, const AssumptionBundle& as) {
    if (!as.kappa_tail) throw Error("moment bound refused: no kappa tail (L1 + kappa(r) < -K for r > R0) declared");
    const auto [R0, K] = *as.kappa_tail;
    if (!(K > 0.0)) throw Error("moment bound needs K > 0");
    const Vector zero = Vector::Zero(model.dim);
    const double b0 = model.drift(zero, MeasureSummary::dirac(zero)).norm();
    MomentCeiling m;
    m.K = K;
    m.C1 = as.sigma_trace_sup + as.kappa.sup_abs(1.0) + b0;
    m.C2 = m.C1 + as.kappa.sup_abs(R0) * R0;
    m.C3 = m.C2 + (as.L1 + K) * R0;
    m.C4 = m.C3 + 3.0 * K / 8.0;
    m.ceiling = m.C4 / K + 1.0;
    return m;
}

MomentResult run_moment_bound(const ExperimentConfig& cfg) {
    validate_common(cfg);
    const BuiltinModel bm = resolve_model(cfg);
    const CoefficientModel& model = bm.model;
    MomentResult res;
    res.ceiling = moment_ceiling(model, bm.assumptions);

    const StepPlan plan = plan_of(cfg);
    const int R = cfg.replicates;
    std::vector<double> times;
    std::vector<std::vector<double>> am(R);
    parallel_for(R, cfg.workers, [&](int begin, int end) {
        for (int r = begin; r < end; ++r) {
            ParticleEnsemble pe;
            pe.states = cfg.mu0.sample(cfg.n, model.dim, cfg.seed, static_cast<std::uint32_t>(r));
            pe.stream = static_cast<std::uint32_t>(r);
            std::vector<double> local_times;
            run_particle_system(pe, model, plan, [&](const ParticleEnsemble& e) {
                local_times.push_back(e.time);
                am[r].push_back(abs_moment(e.states));
            });
            if (r == 0) times = local_times;
        }
    });
    res.abs_moment = reduce(times, am);
    for (const auto& row : res.abs_moment) res.sup_abs_moment = std::max(res.sup_abs_moment, row.mean);
    Assertion a;
    a.name = "sup_abs_moment_below_ceiling";
    a.worst_margin = res.sup_abs_moment - res.ceiling.ceiling;
    a.passed = a.worst_margin <= 0.0;
    res.assertions.push_back(a);
    return res;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json assertions_json(const std::vector<Assertion>& as) {
    json out = json::array();
    for (const auto& a : as) {
        out.push_back({{"name", a.name}, {"passed", a.passed}, {"worst_margin", a.worst_margin}, {"detail", a.detail}});
    }
    return out;
}

json series_json(const std::vector<SeriesRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) out.push_back({{"t", r.t}, {"mean", r.mean}, {"std_error", r.std_error}});
    return out;
}

} // namespace

void write_csv(std::ostream& out, const ContractionResult& r) {
    out << "t,w1_mean,w1_se,bound,pair_r_mean,pair_r_se,w_rho_mean,w_rho_se,w_rho1_mean,w_rho1_se\n";
    std::size_t m = 0;
    for (std::size_t k = 0; k < r.w1.size(); ++k) {
        out << num(r.w1[k].t) << ',' << num(r.w1[k].mean) << ',' << num(r.w1[k].std_error) << ',' << num(r.bound[k])
            << ',' << num(r.pair_r[k].mean) << ',' << num(r.pair_r[k].std_error);
        if (m < r.w_rho.size() && r.w_rho[m].t == r.w1[k].t) {
            out << ',' << num(r.w_rho[m].mean) << ',' << num(r.w_rho[m].std_error);
            if (m < r.w_rho1.size()) out << ',' << num(r.w_rho1[m].mean) << ',' << num(r.w_rho1[m].std_error);
            else out << ",,";
            ++m;
        } else {
            out << ",,,,";
        }
        out << '\n';
    }
}

void write_csv(std::ostream& out, const ChaosResult& r) {
    out << "n,mean,std_error,initial,bound\n";
    for (const auto& row : r.rows) {
        out << row.n << ',' << num(row.mean) << ',' << num(row.std_error) << ',' << num(row.initial) << ','
            << num(row.bound) << '\n';
    }
}

void write_csv(std::ostream& out, const ErgodicityResult& r) {
    out << "t,mean,mean_se,variance,variance_se\n";
    for (std::size_t k = 0; k < r.mean_series.size(); ++k) {
        out << num(r.mean_series[k].t) << ',' << num(r.mean_series[k].mean) << ',' << num(r.mean_series[k].std_error)
            << ',' << num(r.variance_series[k].mean) << ',' << num(r.variance_series[k].std_error) << '\n';
    }
}

void write_csv(std::ostream& out, const MomentResult& r) {
    out << "t,abs_moment,std_error\n";
    for (const auto& row : r.abs_moment) out << num(row.t) << ',' << num(row.mean) << ',' << num(row.std_error) << '\n';
}

json to_json(const RateFit& f) {
    return {{"slope", f.slope},   {"decay_rate", f.decay_rate}, {"intercept", f.intercept},
            {"r_squared", f.r_squared}, {"t_min", f.t_min}, {"t_max", f.t_max}, {"points", f.points}};
}

json to_json(const ContractionResult& r) {
    json j{{"experiment", "contraction"},
           {"pipeline", r.pipeline},
           {"rate_constant", r.rate_constant},
           {"C", r.C},
           {"bound_applicable", r.bound_applicable},
           {"noise_floor", r.noise_floor},
           {"constants", r.constants},
           {"w_rho", series_json(r.w_rho)},
           {"assertions", assertions_json(r.assertions)}};
    j["fit"] = r.fit ? to_json(*r.fit) : json(nullptr);
    j["pair_fit"] = r.pair_fit ? to_json(*r.pair_fit) : json(nullptr);
    if (!r.w_rho1.empty()) j["w_rho1"] = series_json(r.w_rho1);
    return j;
}

json to_json(const ChaosResult& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"n", row.n}, {"mean", row.mean}, {"std_error", row.std_error}, {"initial", row.initial},
                        {"bound", row.bound}});
    }
    return {{"experiment", "chaos"},   {"gamma", r.gamma},         {"n_ref", r.n_ref},
            {"fitted_C", r.fitted_C},  {"log_log_slope", r.slope}, {"rows", rows},
            {"warnings", r.warnings}, {"assertions", assertions_json(r.assertions)}};
}

json to_json(const ErgodicityResult& r) {
    json j{{"experiment", "ergodicity"},
           {"terminal_mean", r.terminal_mean},
           {"terminal_mean_se", r.terminal_mean_se},
           {"terminal_variance", r.terminal_variance},
           {"terminal_variance_se", r.terminal_variance_se},
           {"noise_floor", r.noise_floor},
           {"cauchy", series_json(r.cauchy)},
           {"assertions", assertions_json(r.assertions)}};
    j["stationary_variance"] = r.stationary_variance ? json(*r.stationary_variance) : json(nullptr);
    return j;
}

json to_json(const MomentResult& r) {
    const auto& c = r.ceiling;
    return {{"experiment", "moments"},
            {"ceiling", {{"C1", c.C1}, {"C2", c.C2}, {"C3", c.C3}, {"C4", c.C4}, {"K", c.K}, {"value", c.ceiling}}},
            {"sup_abs_moment", r.sup_abs_moment},
            {"assertions", assertions_json(r.assertions)}};
}

json to_json(const Pipeline1Report& r) {
    return {{"pipeline", 1},          {"A", r.A},         {"A_exact", r.A_exact}, {"D", r.D},
            {"R1", r.R1},             {"R2", r.R2},       {"c", r.c},             {"gamma", r.gamma},
            {"C", r.C},               {"L1", r.L1},       {"quad_tol", r.quad_tol},
            {"contractive", r.contractive}, {"phi_R2", std::exp(r.log_phi_R2)}};
}

json to_json(const Pipeline2Report& r) {
    return {{"pipeline", 2},
            {"A", r.A},
            {"A_exact", r.A_exact},
            {"D", r.D},
            {"M_tilde", r.M_tilde},
            {"L", r.L},
            {"lambda", r.lambda},
            {"R3", r.R3},
            {"R4", r.R4},
            {"eta", r.eta},
            {"xi", r.xi},
            {"log_eta_inv", r.log_eta_inv},
            {"log_xi_inv", r.log_xi_inv},
            {"epsilon", r.epsilon},
            {"c", r.c},
            {"K1", r.K1},
            {"K3", r.K3},
            {"K4", r.K4},
            {"K5", r.K5},
            {"initial_moment_cap", r.initial_moment_cap},
            {"L1", r.L1},
            {"L1_star", r.L1_star},
            {"L1_star_star", r.L1_star_star},
            {"L1_below_L1_star", r.below_L1_star},
            {"L1_below_L1_star_star", r.below_L1_star_star},
            {"quad_tol", r.quad_tol}};
}

void write_svg(std::ostream& out, const std::string& title, const std::vector<PlotSeries>& series, bool log_y,
               const std::string& x_label) {
    constexpr double W = 720, Hh = 440, left = 70, right = 20, top = 40, bottom = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
    for (const auto& s : series) {
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if (log_y && !(s.y[k] > 0.0)) continue;
            x0 = std::min(x0, s.x[k]);
            x1 = std::max(x1, s.x[k]);
            y0 = std::min(y0, ty(s.y[k]));
            y1 = std::max(y1, ty(s.y[k]));
        }
    }
    if (!(x1 > x0)) x1 = x0 + 1.0;
    if (!(y1 > y0)) y1 = y0 + 1.0;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
    auto py = [&](double y) { return Hh - bottom - (ty(y) - y0) / (y1 - y0) * (Hh - top - bottom); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
        << title << "</text>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << Hh - bottom << "\" x2=\"" << W - right << "\" y2=\"" << Hh - bottom
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << Hh - bottom
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"" << Hh - 12 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"12\">" << x_label << "</text>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
        const double ylab = log_y ? std::pow(10.0, yv) : yv;
        out << "<text x=\"" << px(xv) << "\" y=\"" << Hh - bottom + 16
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << num(std::round(xv * 1000) / 1000)
            << "</text>\n";
        const double yp = Hh - bottom - (yv - y0) / (y1 - y0) * (Hh - top - bottom);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", ylab);
        out << "<text x=\"" << left - 6 << "\" y=\"" << yp + 3
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << buf << "</text>\n";
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % 6];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < series[s].x.size(); ++k) {
            if (log_y && !(series[s].y[k] > 0.0)) continue;
            out << px(series[s].x[k]) << ',' << py(series[s].y[k]) << ' ';
        }
        out << "\"/>\n";
        out << "<text x=\"" << W - right - 150 << "\" y=\"" << top + 14 * (s + 1) << "\" fill=\"" << color
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << series[s].label << "</text>\n";
    }
    out << "</svg>\n";
}

} // namespace mvc
