#include "mvc/constants.hpp"

#include "mvc/rng.hpp"

#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvc {

// ---------------------------------------------------------------------------
// A

double A_ratio(const Matrix& sigma_x, const Matrix& sigma_y, const Vector& z) {
    const double r = z.norm();
    if (r == 0.0) return 0.0;
    const Matrix delta = sigma_x - sigma_y;
    const double op = operator_norm(delta);
    const double d = static_cast<double>(z.size());
    const double num = d * op * op * r * r - (delta.transpose() * z).squaredNorm();
    return num / (r * r * r);
}

namespace {

struct PolishData {
    const CoefficientModel* model;
    int dim;
};

double negative_ratio(const gsl_vector* v, void* params) {
    const auto* p = static_cast<const PolishData*>(params);
    Vector x(p->dim), y(p->dim);
    for (int k = 0; k < p->dim; ++k) {
        x(k) = gsl_vector_get(v, k);
        y(k) = gsl_vector_get(v, p->dim + k);
    }
    const Matrix sx = p->model->sigma(x);
    const Matrix sy = p->model->sigma(y);
    if (!sx.allFinite() || !sy.allFinite()) return std::numeric_limits<double>::infinity();
    const double v_ratio = A_ratio(sx, sy, x - y);
    return std::isfinite(v_ratio) ? -v_ratio : std::numeric_limits<double>::infinity();
}

/// Nelder-Mead local maximisation of the ratio starting from (x, y).
double polish_A(const CoefficientModel& model, Vector& x, Vector& y, int& evals) {
    const int d = model.dim;
    PolishData data{&model, d};
    gsl_multimin_function fn{&negative_ratio, static_cast<std::size_t>(2 * d), &data};
    gsl_vector* start = gsl_vector_alloc(2 * d);
    gsl_vector* step = gsl_vector_alloc(2 * d);
    const double scale = std::max(0.1 * (x - y).norm(), 1e-6);
    for (int k = 0; k < d; ++k) {
        gsl_vector_set(start, k, x(k));
        gsl_vector_set(start, d + k, y(k));
    }
    gsl_vector_set_all(step, scale);
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 2 * d);
    gsl_multimin_fminimizer_set(s, &fn, start, step);
    for (int it = 0; it < 2000; ++it) {
        if (gsl_multimin_fminimizer_iterate(s) != 0) break;
        if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-10 * (1.0 + scale)) == GSL_SUCCESS) break;
    }
    evals += 2000;
    const double best = -gsl_multimin_fminimizer_minimum(s);
    for (int k = 0; k < d; ++k) {
        x(k) = gsl_vector_get(s->x, k);
        y(k) = gsl_vector_get(s->x, d + k);
    }
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(step);
    gsl_vector_free(start);
    return std::isfinite(best) ? best : -std::numeric_limits<double>::infinity();
}

} // namespace

AEstimate estimate_A(const CoefficientModel& model, const AssumptionBundle& as, const AStrategy& st) {
    AEstimate out;
    if (st.analytic || as.A_override) {
        out.value = std::max(0.0, st.analytic ? *st.analytic : *as.A_override);
        out.exact = true;
        return out;
    }
    // The numerator vanishes identically for constant sigma and on the line.
    if (model.constant_diffusion || model.dim == 1) {
        out.exact = true;
        return out;
    }
    if (!(st.r_min > 0.0 && st.r_max > st.r_min) || st.samples < 1) throw Error("invalid A sampling strategy");

    const int d = model.dim;
    CounterStream rng(st.seed, 0xA5A5);
    const double log_lo = std::log(st.r_min), log_hi = std::log(st.r_max);
    double best = -std::numeric_limits<double>::infinity();
    Vector bx, by, x(d), dir(d);
    for (int i = 0; i < st.samples; ++i) {
        for (int k = 0; k < d; ++k) x(k) = st.state_scale * rng.normal();
        double n2 = 0.0;
        do {
            for (int k = 0; k < d; ++k) dir(k) = rng.normal();
            n2 = dir.squaredNorm();
        } while (n2 == 0.0);
        const double r = std::exp(log_lo + (log_hi - log_lo) * rng.uniform());
        const Vector y = x - (r / std::sqrt(n2)) * dir;
        const Matrix sx = model.sigma(x);
        const Matrix sy = model.sigma(y);
        if (!sx.allFinite() || !sy.allFinite()) throw Error("non-finite diffusion while estimating A at sample " + std::to_string(i));
        const double v = A_ratio(sx, sy, x - y);
        if (v > best) {
            best = v;
            bx = x;
            by = y;
        }
    }
    out.evaluations = st.samples;
    if (st.polish) {
        Vector px = bx, py = by;
        const double polished = polish_A(model, px, py, out.evaluations);
        if (polished > best && (px - py).norm() > 0.0) {
            best = polished;
            bx = px;
            by = py;
        }
    }
    out.value = std::max(0.0, best);
    out.x = bx;
    out.y = by;
    return out;
}

// ---------------------------------------------------------------------------
// kappa*, R1, R2

double kappa_star_p1(double r, const KappaProfile& kappa, double A) {
    const double k = kappa(r);
    if (r == 0.0) return k;
    return r * k >= -A ? k : -A / r;
}

double kappa_star_p2(double r, const KappaProfile& kappa, double A) { return std::max(kappa(r), A); }

namespace {

constexpr int kScanPoints = 20000;
constexpr double kDefaultScan = 110.0;
constexpr double kRootTol = 1e-12;

void require_negative_tail(const KappaProfile& kappa) {
    if (!kappa.tail_negative()) throw Error("R1 undetermined: no negative tail declared for kappa");
}

double R1_on(const KappaProfile& kappa, double A, double scan_max) {
    auto ok = [&](double r) { return r * kappa(r) + A < 0.0; };
    const double dr = scan_max / kScanPoints;
    int last_bad = -1;
    for (int k = 0; k <= kScanPoints; ++k) {
        if (!ok(k * dr)) last_bad = k;
    }
    if (last_bad == kScanPoints) throw Error("R1 undetermined: r kappa(r) + A < 0 fails at scan_max");
    if (last_bad < 0) return 1.0;
    const double R = bisect_predicate(ok, last_bad * dr, (last_bad + 1) * dr, kRootTol);
    return std::max(1.0, R);
}

} // namespace

double compute_R1(const KappaProfile& kappa, double A, double scan_max) {
    require_negative_tail(kappa);
    if (scan_max > 0.0) return R1_on(kappa, A, scan_max);
    const double R1 = R1_on(kappa, A, kDefaultScan);
    const double wider = 10.0 * std::max(R1, 1.0) + 100.0;
    return wider > kDefaultScan ? R1_on(kappa, A, wider) : R1;
}

double compute_R2(const KappaProfile& kappa, double A, double D, double R1, double scan_max) {
    require_negative_tail(kappa);
    if (!(D > 0.0)) throw Error("R2 needs D > 0");
    if (scan_max <= 0.0) scan_max = 10.0 * std::max(R1, 1.0) + 100.0;
    if (!(scan_max > R1)) throw Error("R2 undetermined: scan_max does not exceed R1");
    const double dr = (scan_max - R1) / kScanPoints;
    std::vector<double> suffix(kScanPoints + 1);
    for (int k = kScanPoints; k >= 0; --k) {
        const double v = kappa(R1 + k * dr);
        suffix[k] = k == kScanPoints ? v : std::max(v, suffix[k + 1]);
    }
    auto sup_from = [&](double R) {
        const int k = std::clamp(static_cast<int>(std::ceil((R - R1) / dr)), 0, kScanPoints);
        return std::max(kappa(R), suffix[k]);
    };
    auto ok = [&](double R) {
        if (R <= R1) return false;
        return sup_from(R) <= -(D * D / (R * (R - R1)) + A / R);
    };
    if (!ok(scan_max)) throw Error("R2 undetermined: condition fails at scan_max");
    return bisect_predicate(ok, R1, scan_max, kRootTol);
}

// ---------------------------------------------------------------------------
// L, R3, R4

double compute_L(const CoefficientModel& model, const AssumptionBundle& as) {
    if (!as.dissipativity) throw Error("compute_L needs dissipativity constants");
    const auto& dis = *as.dissipativity;
    const double R = dis.radius;
    const double kappa_R = as.kappa.sup_abs(R);
    const Vector zero = Vector::Zero(model.dim);
    const double b0 = model.drift(zero, MeasureSummary::dirac(zero)).norm();
    return as.sigma_trace_sup + kappa_R * R * R + R * b0 + 2.0 * dis.lambda * R * R + dis.lambda;
}

std::pair<double, double> compute_R3_R4(double L, double lambda) {
    if (!(lambda > 0.0)) throw Error("lambda must be positive");
    const double s3 = 2.0 * L / lambda - 2.0;
    if (s3 < 0.0) throw Error("sublevel set S3 is empty (2L/lambda < 2)");
    const double s4 = 8.0 * L / lambda - 2.0;
    return {std::sqrt(2.0 * s3), std::sqrt(2.0 * s4)};
}

// ---------------------------------------------------------------------------
// f

FProfile::FProfile(HermiteTable table, double cutoff, double tail_slope)
    : table_(std::move(table)), cutoff_(cutoff), tail_slope_(tail_slope) {
    f_cut_ = table_(cutoff_);
}

double FProfile::operator()(double r) const {
    if (r <= cutoff_) return table_(r);
    return f_cut_ + tail_slope_ * (r - cutoff_);
}

double FProfile::derivative(double r) const {
    if (r < cutoff_) return table_.derivative(r);
    return tail_slope_;
}

namespace {

/// Zeros of a continuous function on [a, b] located by scanning and bisection.
template <class F>
std::vector<double> crossings(const F& fn, double a, double b, int n = 4096) {
    std::vector<double> out;
    const double dr = (b - a) / n;
    double prev = fn(a);
    for (int k = 1; k <= n; ++k) {
        const double r = a + k * dr;
        const double cur = fn(r);
        if ((prev < 0.0) != (cur < 0.0)) {
            const bool start_neg = prev < 0.0;
            out.push_back(bisect_predicate([&](double t) { return (fn(t) < 0.0) != start_neg; }, r - dr, r, 1e-13));
        }
        prev = cur;
    }
    return out;
}

/// Kinks of kappa created by the clip floor.
std::vector<double> clip_points(const KappaProfile& kappa, double a, double b) {
    return crossings([&](double r) { return kappa(r) <= -kappa.kappa_max() ? -1.0 : 1.0; }, a, b);
}

/// Log-space tabulation shared by both pipelines: ell = -log phi, Phi = \int phi,
/// Psi_scaled = \int Phi e^{ell - H} with H = ell(grid end).
struct RadialTables {
    std::shared_ptr<HermiteTable> ell, Phi, Psi;
    double H = 0.0;
};

template <class Q>
RadialTables radial_tables(const std::vector<double>& grid, const Q& ell_prime, double tol) {
    RadialTables t;
    t.ell = std::make_shared<HermiteTable>(cumulative_integral(grid, ell_prime, tol));
    const HermiteTable& ell = *t.ell;
    if (!std::all_of(ell.values().begin(), ell.values().end(), [](double v) { return std::isfinite(v); })) {
        throw QuadratureError("non-finite h on the tabulation grid");
    }
    t.Phi = std::make_shared<HermiteTable>(cumulative_integral(grid, [&](double s) { return std::exp(-ell(s)); }, tol));
    const HermiteTable& Phi = *t.Phi;
    t.H = ell.values().back();
    const double H = t.H;
    t.Psi = std::make_shared<HermiteTable>(
        cumulative_integral(grid, [&](double s) { return Phi(s) * std::exp(ell(s) - H); }, tol));
    return t;
}

double node_value(const HermiteTable& t, double r) {
    const auto& x = t.nodes();
    const auto it = std::lower_bound(x.begin(), x.end(), r);
    if (it != x.end() && *it == r) return t.values()[static_cast<std::size_t>(it - x.begin())];
    return t(r);
}

} // namespace

// ---------------------------------------------------------------------------
// Pipeline 1

double Pipeline1Report::phi(double r) const { return std::exp(-(*ell_)(std::min(r, ell_->back()))); }
double Pipeline1Report::Phi(double r) const {
    if (r <= Phi_->back()) return (*Phi_)(r);
    return Phi_->values().back() + phi(r) * (r - Phi_->back());
}
double Pipeline1Report::g(double r) const {
    const double s = std::min(r, Psi_scaled_->back());
    return 1.0 - (*Psi_scaled_)(s) / (2.0 * Psi_R2_scaled_);
}

Pipeline1Report build_pipeline1(const CoefficientModel& model, const AssumptionBundle& as, const ConstantsOptions& opt) {
    Pipeline1Report rep;
    rep.D = as.D_pipeline1();
    if (!(rep.D > 0.0)) throw Error("pipeline 1 needs D = 2/Lambda - M > 0");
    const AEstimate a = estimate_A(model, as, opt.a_strategy);
    rep.A = a.value;
    rep.A_exact = a.exact;
    rep.L1 = as.L1;
    rep.quad_tol = opt.quad_tol;
    rep.R1 = compute_R1(as.kappa, rep.A, opt.scan_max);
    rep.R2 = compute_R2(as.kappa, rep.A, rep.D, rep.R1, opt.scan_max);

    const double A = rep.A, D2 = rep.D * rep.D;
    auto q = [&](double u) { return std::max(u * as.kappa(u) + A, 0.0); };
    std::vector<double> extra{rep.R1};
    for (double k : crossings([&](double u) { return u * as.kappa(u) + A; }, 0.0, rep.R2)) extra.push_back(k);
    for (double k : clip_points(as.kappa, 0.0, rep.R2)) extra.push_back(k);
    const std::vector<double> grid = merged_grid(0.0, rep.R2, opt.grid_nodes, extra);

    RadialTables t = radial_tables(grid, [&](double u) { return 2.0 / D2 * q(u); }, opt.quad_tol);
    rep.ell_ = t.ell;
    rep.Phi_ = t.Phi;
    rep.Psi_scaled_ = t.Psi;
    rep.Psi_R2_scaled_ = t.Psi->values().back();
    rep.log_phi_R2 = -t.H;

    // Psi(R2) = Psi_scaled(R2) e^H.
    rep.c = D2 / 4.0 * std::exp(-t.H) / rep.Psi_R2_scaled_;
    const double phi_R1 = std::exp(-node_value(*t.ell, rep.R1));
    rep.gamma = rep.c - as.L1 * D2 / (2.0 * phi_R1);
    rep.C = D2 / (2.0 * phi_R1);
    rep.contractive = rep.gamma > 0.0;

    auto fprime = [&](double s) { return rep.phi(s) * rep.g(s); };
    HermiteTable ftab = cumulative_integral(grid, fprime, opt.quad_tol);
    ftab.make_monotone();
    const double tail = std::exp(-t.H) * 0.5;
    rep.f = std::make_shared<FProfile>(std::move(ftab), rep.R2, tail);

    auto& tab = rep.table;
    for (double r : grid) {
        tab.r.push_back(r);
        tab.phi.push_back(rep.phi(r));
        tab.Phi.push_back((*t.Phi)(r));
        tab.g.push_back(rep.g(r));
        tab.f.push_back((*rep.f)(r));
        tab.df.push_back(fprime(r));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Pipeline 2

double Pipeline2Report::h(double r) const {
    if (r <= ell_->back()) return (*ell_)(r);
    throw Error("h is tabulated on [0, R4] only");
}
double Pipeline2Report::phi(double r) const { return std::exp(-h(std::min(r, R4))); }
double Pipeline2Report::Phi(double r) const { return (*Phi_)(std::min(r, R4)); }
double Pipeline2Report::g(double r) const {
    const double s4 = std::min(r, R4), s3 = std::min(r, R3);
    return 1.0 - 0.25 * (*Psi_scaled_)(s4) / Psi_R4_scaled_ - 0.25 * (*Psi_scaled_)(s3) / Psi_R3_scaled_;
}

Pipeline2Report build_pipeline2(const CoefficientModel& model, const AssumptionBundle& as, const ConstantsOptions& opt) {
    Pipeline2Report rep;
    rep.D = as.D_pipeline2();
    if (!(rep.D > 0.0)) throw Error("pipeline 2 needs D = 2/Lambda - sqrt(2) M > 0");
    if (!as.dissipativity) throw Error("pipeline 2 needs dissipativity constants");
    const AEstimate a = estimate_A(model, as, opt.a_strategy);
    rep.A = a.value;
    rep.A_exact = a.exact;
    rep.M_tilde = as.M_tilde();
    rep.L1 = as.L1;
    rep.lambda = as.dissipativity->lambda;
    rep.quad_tol = opt.quad_tol;
    rep.initial_moment_cap = opt.initial_moment_cap;
    rep.L = compute_L(model, as);
    std::tie(rep.R3, rep.R4) = compute_R3_R4(rep.L, rep.lambda);
    if (!(rep.R3 > 0.0)) throw Error("sublevel set S3 is degenerate (R3 = 0)");

    const double A = rep.A, D = rep.D, D2 = D * D;
    auto ell_prime = [&](double s) { return 2.0 / D2 * (s * kappa_star_p2(s, as.kappa, A) + A) + 8.0 * rep.M_tilde / D; };
    std::vector<double> extra{rep.R3};
    for (double k : crossings([&](double u) { return as.kappa(u) - A; }, 0.0, rep.R4)) extra.push_back(k);
    for (double k : clip_points(as.kappa, 0.0, rep.R4)) extra.push_back(k);
    const std::vector<double> grid = merged_grid(0.0, rep.R4, opt.grid_nodes, extra);

    RadialTables t = radial_tables(grid, ell_prime, opt.quad_tol);
    rep.ell_ = t.ell;
    rep.Phi_ = t.Phi;
    rep.Psi_scaled_ = t.Psi;
    rep.Psi_R4_scaled_ = t.Psi->values().back();
    rep.Psi_R3_scaled_ = node_value(*t.Psi, rep.R3);
    rep.log_eta_inv = std::log(rep.Psi_R4_scaled_) + t.H;
    rep.log_xi_inv = std::log(rep.Psi_R3_scaled_) + t.H;
    rep.eta = std::exp(-rep.log_eta_inv);
    rep.xi = std::exp(-rep.log_xi_inv);

    rep.epsilon = rep.xi * D2 / (16.0 * rep.L);
    rep.c = 0.5 * std::min(rep.lambda / 2.0, rep.eta * D2 / 8.0);

    auto fprime = [&](double s) { return rep.phi(s) * rep.g(s); };
    HermiteTable ftab = cumulative_integral(grid, fprime, opt.quad_tol);
    ftab.make_monotone();
    rep.f = std::make_shared<FProfile>(std::move(ftab), rep.R4, 0.0);

    const double f_R4 = (*rep.f)(rep.R4);
    const double phi_R4 = std::exp(-t.H);
    rep.K1 = std::max(2.0 / phi_R4, 1.0 / (2.0 * rep.epsilon * f_R4));
    rep.K4 = 1.0 + 2.0 * rep.L * rep.epsilon / rep.lambda;
    rep.K5 = rep.epsilon * 2.0 * opt.initial_moment_cap;
    rep.K3 = as.L1 * rep.K1 + 2.0 * as.L1 / rep.epsilon;
    const double k1e = rep.K1 + 2.0 / rep.epsilon;
    rep.L1_star = rep.c / (k1e * (rep.K4 + rep.K5));
    rep.L1_star_star = rep.c / (k1e * rep.K4);
    rep.below_L1_star = as.L1 < rep.L1_star;
    rep.below_L1_star_star = as.L1 < rep.L1_star_star;

    auto& tab = rep.table;
    for (double r : grid) {
        tab.r.push_back(r);
        tab.phi.push_back(rep.phi(r));
        tab.Phi.push_back((*t.Phi)(r));
        tab.g.push_back(rep.g(r));
        tab.f.push_back((*rep.f)(r));
        tab.df.push_back(r < rep.R4 ? fprime(r) : 0.0);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Metrics

MetricEvaluator MetricEvaluator::rho(const Pipeline1Report& report) { return {MetricKind::rho, report.f, 0.0}; }
MetricEvaluator MetricEvaluator::rho(const Pipeline2Report& report) { return {MetricKind::rho, report.f, 0.0}; }
MetricEvaluator MetricEvaluator::rho1(const Pipeline2Report& report) {
    return {MetricKind::rho1, report.f, report.epsilon};
}

double MetricEvaluator::operator()(std::span<const double> x, std::span<const double> y) const {
    const double fr = (*f_)(euclidean(x, y));
    if (kind_ == MetricKind::rho) return fr;
    double vx = 1.0, vy = 1.0;
    for (double v : x) vx += v * v;
    for (double v : y) vy += v * v;
    return fr * (1.0 + epsilon_ * vx + epsilon_ * vy);
}

CostFn MetricEvaluator::as_cost() const {
    return [m = *this](std::span<const double> x, std::span<const double> y) { return m(x, y); };
}

} // namespace mvc
