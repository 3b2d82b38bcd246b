#include "mvc/model.hpp"

#include "mvc/rng.hpp"
#include "mvc/transport.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <cmath>
#include <numbers>

namespace mvc {

// ---------------------------------------------------------------------------
// Measure summaries

namespace {

double abs_moment_of(const PointCloud& points) {
    double s = 0.0;
    for (int i = 0; i < points.size(); ++i) s += points.point(i).norm();
    return points.size() > 0 ? s / points.size() : 0.0;
}

} // namespace

MeasureSummary MeasureSummary::of(const PointCloud& points, MeasureFeatures features) {
    MeasureSummary s;
    s.mean = points.mean();
    if (features.abs_moment) s.abs_moment = abs_moment_of(points);
    if (features.cloud) s.cloud = std::make_shared<const PointCloud>(points);
    return s;
}

MeasureSummary MeasureSummary::view(const PointCloud& points, MeasureFeatures features) {
    MeasureSummary s;
    s.mean = points.mean();
    if (features.abs_moment) s.abs_moment = abs_moment_of(points);
    if (features.cloud) s.cloud = std::shared_ptr<const PointCloud>(&points, [](const PointCloud*) {});
    return s;
}

MeasureSummary MeasureSummary::dirac(const Vector& at) {
    MeasureSummary s;
    s.mean = at;
    s.abs_moment = at.norm();
    PointCloud pc(1, static_cast<int>(at.size()));
    pc.point(0) = at;
    s.cloud = std::make_shared<const PointCloud>(std::move(pc));
    return s;
}

// ---------------------------------------------------------------------------
// Coefficients

Matrix CoefficientModel::sigma(const Vector& x) const {
    if (constant_diffusion) return *constant_diffusion;
    return diffusion(x);
}

Matrix CoefficientModel::sigma_inverse(const Vector& x) const {
    if (diffusion_inverse) return (*diffusion_inverse)(x);
    const Matrix s = sigma(x);
    Eigen::FullPivLU<Matrix> lu(s);
    if (!lu.isInvertible()) throw Error("diffusion matrix is singular");
    return lu.inverse();
}

double operator_norm(const Matrix& m) {
    if (m.size() == 1) return std::abs(m(0, 0));
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

KappaProfile::KappaProfile(std::function<double(double)> raw, double kappa_max, TailSign tail)
    : raw_(std::move(raw)), kappa_max_(kappa_max), tail_(tail) {
    if (!(kappa_max >= 0.0)) throw Error("kappa_max must be nonnegative");
}

KappaProfile KappaProfile::constant(double value, double kappa_max) {
    return KappaProfile([value](double) { return value; }, kappa_max,
                        value < 0.0 ? TailSign::negative : TailSign::nonnegative);
}

double KappaProfile::operator()(double r) const {
    if (!raw_) throw Error("KappaProfile has no evaluator");
    return std::max(raw_(r), -kappa_max_);
}

double KappaProfile::sup_abs(double r, int samples) const {
    double best = std::abs((*this)(0.0));
    for (int i = 1; i < samples; ++i) best = std::max(best, std::abs((*this)(r * i / (samples - 1))));
    return best;
}

double AssumptionBundle::D_pipeline2() const { return 2.0 / Lambda - std::numbers::sqrt2 * M; }

// ---------------------------------------------------------------------------
// Validation

bool ValidationReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return !c.applicable || c.passed; });
}

const CheckResult& ValidationReport::check(const std::string& name) const {
    for (const auto& c : checks) {
        if (c.name == name) return c;
    }
    throw Error("no validation check named " + name);
}

namespace {

class CheckAccumulator {
  public:
    CheckAccumulator(std::string name, double tol) : tol_(tol) {
        result_.name = std::move(name);
        result_.worst_margin = -std::numeric_limits<double>::infinity();
    }

    /// Records lhs <= rhs; tolerance scales with the magnitude of the terms.
    void le(double lhs, double rhs, int probe) {
        const double margin = lhs - rhs;
        const double scale = 1.0 + std::max(std::abs(lhs), std::abs(rhs));
        if (margin > result_.worst_margin) {
            result_.worst_margin = margin;
            worst_probe_ = probe;
        }
        if (margin > tol_ * scale) result_.passed = false;
    }

    CheckResult finish() {
        if (!result_.passed) result_.detail = "violated at probe " + std::to_string(worst_probe_);
        if (result_.worst_margin == -std::numeric_limits<double>::infinity()) result_.worst_margin = 0.0;
        return result_;
    }

  private:
    CheckResult result_;
    double tol_;
    int worst_probe_ = -1;
};

CheckResult flag(std::string name, bool ok, double margin, std::string detail, bool applicable = true) {
    CheckResult c;
    c.name = std::move(name);
    c.passed = ok;
    c.applicable = applicable;
    c.worst_margin = margin;
    c.detail = std::move(detail);
    return c;
}

void require_finite(const Vector& v, const char* what, int probe) {
    if (!v.allFinite()) throw ProbeError(std::string("non-finite ") + what + " at probe " + std::to_string(probe), probe);
}

void require_finite(const Matrix& m, const char* what, int probe) {
    if (!m.allFinite()) throw ProbeError(std::string("non-finite ") + what + " at probe " + std::to_string(probe), probe);
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::equal(a.data(), a.data() + a.size(), b.data(),
                      [](double x, double y) { return std::memcmp(&x, &y, sizeof(double)) == 0; });
}

} // namespace

ValidationReport validate_bundle(const CoefficientModel& model, const AssumptionBundle& as, const ProbePlan& plan) {
    const int d = model.dim;
    const double tol = plan.tolerance;
    CounterStream rng(plan.seed, 0x7A11);
    auto draw_point = [&] {
        Vector v(d);
        for (int k = 0; k < d; ++k) v(k) = plan.state_scale * rng.normal();
        return v;
    };
    auto draw_cloud = [&] {
        PointCloud pc(plan.cloud_size, d);
        for (int i = 0; i < plan.cloud_size; ++i) pc.point(i) = draw_point();
        return pc;
    };

    CheckAccumulator lip_drift("lipschitz_drift", tol), lip_sigma("lipschitz_sigma", tol),
        growth("drift_growth", tol), osc("sigma_oscillation", tol), inv_bound("sigma_inverse_bound", tol),
        inv_consistency("sigma_inverse_consistency", 0.0), trace("sigma_trace_bound", tol),
        kappa_bounded("kappa_bounded", tol), dissip("dissipativity", tol), tail_k("kappa_tail_K", tol);
    bool deterministic = true;
    int nondeterministic_probe = -1;

    for (int p = 0; p < plan.n_probe; ++p) {
        const Vector x = draw_point();
        const Vector y = draw_point();
        const PointCloud mu_pts = draw_cloud();
        const PointCloud nu_pts = draw_cloud();
        const MeasureSummary mu = MeasureSummary::of(mu_pts, model.features);
        const MeasureSummary nu = MeasureSummary::of(nu_pts, model.features);

        const Vector bx = model.drift(x, mu);
        const Vector by = model.drift(y, nu);
        require_finite(bx, "drift", p);
        require_finite(by, "drift", p);
        const Matrix sx = model.sigma(x);
        const Matrix sy = model.sigma(y);
        require_finite(sx, "diffusion", p);
        require_finite(sy, "diffusion", p);
        const Matrix sx_inv = model.sigma_inverse(x);
        require_finite(sx_inv, "diffusion inverse", p);

        if (!bitwise_equal(model.drift(x, mu), bx) || !bitwise_equal(model.sigma(x), sx)) {
            deterministic = false;
            nondeterministic_probe = p;
        }

        const Vector z = x - y;
        const double r = z.norm();
        const double w1_value = w1(mu_pts, nu_pts).value;
        lip_drift.le(z.dot(bx - by), as.kappa(r) * r * r + as.L1 * w1_value * r, p);

        const double dsig = operator_norm(sx - sy);
        lip_sigma.le(dsig * dsig, as.L2 * r * r, p);
        osc.le(dsig, as.M, p);
        inv_bound.le(operator_norm(sx_inv), as.Lambda, p);
        const double consistency =
            (sx * sx_inv - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
        inv_consistency.le(consistency, 1e-10, p);
        trace.le((sx * sx.transpose()).trace(), as.sigma_trace_sup, p);

        const Vector b0 = model.drift(Vector::Zero(d), mu);
        require_finite(b0, "drift", p);
        growth.le(b0.norm(), as.L3 * (1.0 + (model.features.abs_moment ? mu.abs_moment : abs_moment_of(mu_pts))), p);

        kappa_bounded.le(std::abs(as.kappa(r)), as.kappa.kappa_max(), p);

        if (as.dissipativity) {
            const auto& dis = *as.dissipativity;
            // Push the probe outside the ball of radius R.
            Vector xo = x;
            const double nx = x.norm();
            if (nx < dis.radius) xo = (nx > 0 ? Vector(x / nx) : Vector(Vector::Unit(d, 0))) * (dis.radius + nx);
            const Vector bxo = model.drift(xo, mu);
            require_finite(bxo, "drift", p);
            const double m1 = abs_moment_of(mu_pts);
            dissip.le(xo.dot(bxo), -dis.lambda * xo.squaredNorm() + dis.L4 * xo.norm() * m1, p);
        }
        if (as.kappa_tail) {
            const double rr = as.kappa_tail->R0 + r;
            tail_k.le(as.L1 + as.kappa(rr), -as.kappa_tail->K, p);
        }
    }

    ValidationReport report;
    report.checks.push_back(lip_drift.finish());
    report.checks.push_back(lip_sigma.finish());
    report.checks.push_back(growth.finish());
    report.checks.push_back(osc.finish());
    report.checks.push_back(inv_bound.finish());
    report.checks.push_back(inv_consistency.finish());
    report.checks.push_back(trace.finish());

    {
        const double s0 = operator_norm(model.sigma(Vector::Zero(d)));
        report.checks.push_back(flag("sigma_zero_norm", s0 <= as.sigma_at_zero_norm * (1 + tol) + tol,
                                     s0 - as.sigma_at_zero_norm, "declared ||sigma(0)|| must bound the actual norm"));
    }
    {
        // Dense grid on top of the probes.
        for (int i = 0; i <= 2000; ++i) kappa_bounded.le(std::abs(as.kappa(0.05 * i)), as.kappa.kappa_max(), -1);
        report.checks.push_back(kappa_bounded.finish());
    }
    report.checks.push_back(flag("deterministic", deterministic, 0.0,
                                 deterministic ? "" : "re-evaluation differs at probe " + std::to_string(nondeterministic_probe)));

    const double D1 = as.D_pipeline1();
    report.checks.push_back(flag("D1_positive", D1 > 0.0, -D1, "D1 = 2/Lambda - M = " + std::to_string(D1), plan.pipeline1));
    report.checks.push_back(flag("kappa_tail_limsup", as.kappa.tail_negative(), 0.0,
                                 "limsup kappa < 0 must be declared", plan.pipeline1));

    const double D2 = as.D_pipeline2();
    report.checks.push_back(flag("D2_positive", D2 > 0.0, -D2, "D2 = 2/Lambda - sqrt(2) M = " + std::to_string(D2), plan.pipeline2));
    {
        CheckResult c = dissip.finish();
        c.applicable = plan.pipeline2;
        if (!as.dissipativity) {
            c.passed = false;
            c.detail = "dissipativity constants not declared";
        }
        report.checks.push_back(c);
    }
    {
        bool ok = false;
        double margin = 0.0;
        if (as.dissipativity) {
            const auto& dis = *as.dissipativity;
            ok = dis.L4 <= as.L1 && as.L1 <= dis.lambda / 2.0;
            margin = std::max(dis.L4 - as.L1, as.L1 - dis.lambda / 2.0);
        }
        report.checks.push_back(flag("L4_L1_lambda_order", ok, margin, "requires L4 <= L1 <= lambda/2", plan.pipeline2));
    }
    {
        CheckResult c = tail_k.finish();
        c.applicable = as.kappa_tail.has_value();
        if (as.kappa_tail) {
            for (int i = 1; i <= 2000; ++i) {
                const double rr = as.kappa_tail->R0 * (1.0 + 1e-9) + 0.05 * i;
                if (as.L1 + as.kappa(rr) + as.kappa_tail->K > tol) {
                    c.passed = false;
                    c.detail = "violated at r = " + std::to_string(rr);
                    break;
                }
            }
        }
        report.checks.push_back(c);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Built-in models

double ModelParams::get(const std::string& key, double fallback) const {
    const auto it = scalars.find(key);
    return it == scalars.end() ? fallback : it->second;
}

std::vector<std::string> builtin_model_names() {
    return {"mean_field_ou", "double_well_attraction", "const_diffusion_custom_kappa"};
}

namespace {

void set_constant_sigma(CoefficientModel& m, const Matrix& sigma) {
    Eigen::FullPivLU<Matrix> lu(sigma);
    if (!lu.isInvertible()) throw Error("constant diffusion matrix is singular");
    const Matrix inv = lu.inverse();
    m.constant_diffusion = sigma;
    m.diffusion = [sigma](const Vector&) { return sigma; };
    m.diffusion_inverse = [inv](const Vector&) { return inv; };
}

void set_constant_sigma_bounds(AssumptionBundle& a, const Matrix& sigma) {
    a.L2 = 0.0;
    a.M = 0.0;
    a.Lambda = operator_norm(sigma.inverse());
    a.sigma_trace_sup = (sigma * sigma.transpose()).trace();
    a.sigma_at_zero_norm = operator_norm(sigma);
    a.A_override = 0.0;
}

BuiltinModel mean_field_ou(const ModelParams& p) {
    const int d = static_cast<int>(p.get("dim", 1));
    const double L1 = p.get("L1", 0.1);
    const double radius = p.get("R_diss", 1.0);
    if (d < 1) throw Error("mean_field_ou: dim must be >= 1");
    if (L1 < 0) throw Error("mean_field_ou: L1 must be >= 0");

    BuiltinModel out;
    auto& m = out.model;
    m.name = "mean_field_ou";
    m.dim = d;
    m.features = {.mean = true, .abs_moment = false, .cloud = false};
    m.drift = [L1](const Vector& x, const MeasureSummary& mu) -> Vector { return -x + L1 * mu.mean; };
    set_constant_sigma(m, Matrix::Identity(d, d));

    auto& a = out.assumptions;
    a.kappa = KappaProfile::constant(-1.0, 1.0);
    a.L1 = L1;
    a.L3 = std::max(L1, 1.0);
    set_constant_sigma_bounds(a, Matrix::Identity(d, d));
    a.dissipativity = Dissipativity{.lambda = 1.0, .L4 = L1, .radius = radius};
    if (L1 < 1.0) a.kappa_tail = KappaTail{.R0 = 1.0, .K = 1.0 - L1};
    return out;
}

BuiltinModel double_well_attraction(const ModelParams& p) {
    const double L1 = p.get("L1", 0.1);
    const double kmax = p.get("kappa_max", 10.0);
    if (kmax < 1.0) throw Error("double_well_attraction: kappa_max must be >= 1");
    if (L1 < 0) throw Error("double_well_attraction: L1 must be >= 0");

    BuiltinModel out;
    auto& m = out.model;
    m.name = "double_well_attraction";
    m.dim = 1;
    m.features = {.mean = true, .abs_moment = false, .cloud = false};
    m.drift = [L1](const Vector& x, const MeasureSummary& mu) -> Vector {
        return x - x * x.squaredNorm() + L1 * mu.mean;
    };
    set_constant_sigma(m, Matrix::Identity(1, 1));

    auto& a = out.assumptions;
    a.kappa = KappaProfile([](double r) { return 1.0 - r * r / 4.0; }, kmax, TailSign::negative);
    a.L1 = L1;
    a.L3 = std::max(L1, 1.0);
    set_constant_sigma_bounds(a, Matrix::Identity(1, 1));
    const double lambda = 1.0;
    a.dissipativity = Dissipativity{.lambda = lambda, .L4 = L1, .radius = std::sqrt(1.0 + lambda)};
    if (kmax > 1.0 + L1) a.kappa_tail = KappaTail{.R0 = 2.0 * std::sqrt(2.0 + L1), .K = 1.0};
    return out;
}

Matrix sigma_from_params(const std::vector<double>& s, int d) {
    if (s.empty()) return Matrix::Identity(d, d);
    if (s.size() == 1) return s[0] * Matrix::Identity(d, d);
    if (static_cast<int>(s.size()) == d) return Eigen::Map<const Vector>(s.data(), d).asDiagonal();
    if (static_cast<int>(s.size()) == d * d) {
        return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(s.data(), d, d);
    }
    throw Error("sigma must have 1, d or d*d entries");
}

BuiltinModel const_diffusion_custom_kappa(const ModelParams& p) {
    const int d = static_cast<int>(p.get("dim", 1));
    const double k0 = p.get("kappa0", 1.0);
    const double slope = p.get("slope", 1.0);
    const double L1 = p.get("L1", 0.0);
    const double kmax = p.get("kappa_max", std::max(10.0, std::abs(k0)));
    if (d < 1) throw Error("const_diffusion_custom_kappa: dim must be >= 1");
    if (slope < 0 || L1 < 0) throw Error("const_diffusion_custom_kappa: slope and L1 must be >= 0");
    if (k0 > kmax) throw Error("const_diffusion_custom_kappa: kappa0 exceeds kappa_max");
    const Matrix sigma = sigma_from_params(p.sigma, d);

    BuiltinModel out;
    auto& m = out.model;
    m.name = "const_diffusion_custom_kappa";
    m.dim = d;
    m.features = {.mean = true, .abs_moment = false, .cloud = false};
    // <x|x| - y|y|, x - y> >= |x - y|^3 / 2 gives kappa(r) = kappa0 - slope r.
    m.drift = [k0, slope, L1](const Vector& x, const MeasureSummary& mu) -> Vector {
        return k0 * x - (2.0 * slope * x.norm()) * x + L1 * mu.mean;
    };
    set_constant_sigma(m, sigma);

    auto& a = out.assumptions;
    const bool negative_tail = slope > 0.0 || k0 < 0.0;
    a.kappa = KappaProfile([k0, slope](double r) { return k0 - slope * r; }, kmax,
                           negative_tail ? TailSign::negative : TailSign::nonnegative);
    a.L1 = L1;
    a.L3 = std::max(L1, 1.0);
    set_constant_sigma_bounds(a, sigma);
    if (slope > 0.0) {
        const double lambda = 1.0;
        a.dissipativity = Dissipativity{.lambda = lambda, .L4 = L1, .radius = std::max((k0 + lambda) / (2.0 * slope), 1e-3)};
        if (kmax > 1.0 + L1) a.kappa_tail = KappaTail{.R0 = std::max((k0 + L1 + 1.0) / slope, 1e-3), .K = 1.0};
    } else if (k0 < 0.0) {
        a.dissipativity = Dissipativity{.lambda = -k0, .L4 = L1, .radius = 1.0};
        if (k0 + L1 < 0.0) a.kappa_tail = KappaTail{.R0 = 1.0, .K = -(k0 + L1)};
    }
    return out;
}

} // namespace

BuiltinModel builtin_model(const std::string& name, const ModelParams& params) {
    if (name == "mean_field_ou") return mean_field_ou(params);
    if (name == "double_well_attraction") return double_well_attraction(params);
    if (name == "const_diffusion_custom_kappa") return const_diffusion_custom_kappa(params);
    throw Error("unknown built-in model: " + name);
}

} // namespace mvc
