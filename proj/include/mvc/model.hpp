#pragma once

#include "mvc/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mvc {

/// Which summaries of the law a drift reads. Summaries not declared are not
/// computed by the simulator.
struct MeasureFeatures {
    bool mean = true;
    bool abs_moment = false;
    bool cloud = false;
};

/// Summary of a probability measure handed to drift evaluators.
struct MeasureSummary {
    Vector mean;
    double abs_moment = 0.0;  ///< \int |x| mu(dx)
    std::shared_ptr<const PointCloud> cloud;

    static MeasureSummary of(const PointCloud& points, MeasureFeatures features);
    /// Summary that shares (does not copy) `points`; caller keeps them alive.
    static MeasureSummary view(const PointCloud& points, MeasureFeatures features);
    static MeasureSummary dirac(const Vector& at);
};

using DriftFn = std::function<Vector(const Vector& x, const MeasureSummary& mu)>;
using DiffusionFn = std::function<Matrix(const Vector& x)>;

/// Drift b(x, mu) and state-dependent diffusion sigma(x) of a McKean-Vlasov SDE.
struct CoefficientModel {
    std::string name;
    int dim = 1;
    DriftFn drift;
    DiffusionFn diffusion;
    /// sigma(x)^{-1}; computed by LU solve when absent.
    std::optional<DiffusionFn> diffusion_inverse;
    MeasureFeatures features;
    /// Set when sigma does not depend on x; lets steppers skip evaluation.
    std::optional<Matrix> constant_diffusion;

    Matrix sigma(const Vector& x) const;
    Matrix sigma_inverse(const Vector& x) const;
};

enum class TailSign { negative, nonnegative, unknown };

/// Upper profile kappa(r) of the one-sided Lipschitz condition, clipped from
/// below at -kappa_max.
class KappaProfile {
  public:
    KappaProfile() = default;
    KappaProfile(std::function<double(double)> raw, double kappa_max, TailSign tail);

    static KappaProfile constant(double value, double kappa_max);

    double operator()(double r) const;
    double kappa_max() const { return kappa_max_; }
    TailSign tail() const { return tail_; }
    bool tail_negative() const { return tail_ == TailSign::negative; }

    /// sup_{s in [0, r]} |kappa(s)| on a dense grid.
    double sup_abs(double r, int samples = 10001) const;

  private:
    std::function<double(double)> raw_;
    double kappa_max_ = 0.0;
    TailSign tail_ = TailSign::unknown;
};

/// <x, b(x,mu)> <= -lambda |x|^2 + L4 |x| mu(|.|) for |x| >= radius.
struct Dissipativity {
    double lambda = 0.0;
    double L4 = 0.0;
    double radius = 0.0;
};

/// L1 + kappa(r) < -K for r > R0.
struct KappaTail {
    double R0 = 0.0;
    double K = 0.0;
};

struct AssumptionBundle {
    KappaProfile kappa;
    double L1 = 0.0;
    double L2 = 0.0;
    double L3 = 1.0;
    double M = 0.0;
    double Lambda = 1.0;
    double sigma_trace_sup = 0.0;      ///< K0 = sup_x tr(sigma sigma^T)
    double sigma_at_zero_norm = 0.0;   ///< ||sigma(0)||
    std::optional<Dissipativity> dissipativity;
    std::optional<KappaTail> kappa_tail;
    /// Analytic value of A when known (constant sigma, d = 1, user formula).
    std::optional<double> A_override;

    double D_pipeline1() const { return 2.0 / Lambda - M; }
    double D_pipeline2() const;
    double M_tilde() const { return 2.0 * M + sigma_at_zero_norm; }
};

struct ProbePlan {
    int n_probe = 1000;
    std::uint64_t seed = 1;
    bool pipeline1 = true;
    bool pipeline2 = false;
    double state_scale = 5.0;   ///< probes x ~ Normal(0, scale^2 I)
    int cloud_size = 32;        ///< measure proxies are empirical laws of this many probes
    double tolerance = 1e-9;
};

struct CheckResult {
    std::string name;
    bool applicable = true;
    bool passed = true;
    double worst_margin = 0.0;  ///< max over probes of (lhs - rhs); <= tolerance passes
    std::string detail;
};

struct ValidationReport {
    std::vector<CheckResult> checks;
    bool passed() const;
    const CheckResult& check(const std::string& name) const;
};

/// Thrown when a coefficient evaluates to a non-finite value at a probe.
class ProbeError : public Error {
  public:
    ProbeError(const std::string& what, int probe) : Error(what), probe_(probe) {}
    int probe() const { return probe_; }

  private:
    int probe_;
};

/// Spot-checks every assumption by random probing and reports worst margins.
ValidationReport validate_bundle(const CoefficientModel& model, const AssumptionBundle& assumptions,
                                 const ProbePlan& plan);

struct ModelParams {
    std::map<std::string, double> scalars;
    std::vector<double> sigma;  ///< const_diffusion_custom_kappa: scalar, diagonal or row-major full matrix

    double get(const std::string& key, double fallback) const;
};

struct BuiltinModel {
    CoefficientModel model;
    AssumptionBundle assumptions;
};

/// Names: mean_field_ou, double_well_attraction, const_diffusion_custom_kappa.
BuiltinModel builtin_model(const std::string& name, const ModelParams& params = {});

std::vector<std::string> builtin_model_names();

/// Spectral norm.
double operator_norm(const Matrix& m);

} // namespace mvc
