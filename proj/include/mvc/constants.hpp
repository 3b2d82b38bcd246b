#pragma once

#include "mvc/model.hpp"
#include "mvc/numerics.hpp"
#include "mvc/transport.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace mvc {

struct AStrategy {
    /// Used verbatim when set; otherwise the bundle's A_override, then sampling.
    std::optional<double> analytic;
    int samples = 1'000'000;
    double r_min = 1e-4;
    double r_max = 20.0;
    double state_scale = 5.0;
    std::uint64_t seed = 7;
    bool polish = true;
};

struct AEstimate {
    double value = 0.0;
    bool exact = false;  ///< analytic override or structurally zero
    Vector x, y;         ///< argmax pair of the sampled sup (empty when exact)
    int evaluations = 0;
};

/// (d ||s_x - s_y||^2 |z|^2 - |(s_x - s_y)^T z|^2) / |z|^3 with z = x - y.
double A_ratio(const Matrix& sigma_x, const Matrix& sigma_y, const Vector& z);

AEstimate estimate_A(const CoefficientModel& model, const AssumptionBundle& assumptions, const AStrategy& strategy = {});

double kappa_star_p1(double r, const KappaProfile& kappa, double A);
double kappa_star_p2(double r, const KappaProfile& kappa, double A);

/// scan_max <= 0 selects the default: 110, widened to 10 max(R1, 1) + 100 when needed.
double compute_R1(const KappaProfile& kappa, double A, double scan_max = 0.0);
double compute_R2(const KappaProfile& kappa, double A, double D, double R1, double scan_max = 0.0);

/// Lyapunov constant L = K0 + kappa_R R^2 + R |b(0, delta_0)| + 2 lambda R^2 + lambda.
double compute_L(const CoefficientModel& model, const AssumptionBundle& assumptions);

/// Diameters of the sublevel sets {V(x) + V(y) <= 2L/lambda} and {... <= 8L/lambda}.
std::pair<double, double> compute_R3_R4(double L, double lambda);

/// Concave profile f on [0, cutoff] (monotone cubic) with an exact linear
/// extension of slope `tail_slope` beyond the cutoff.
class FProfile {
  public:
    FProfile() = default;
    FProfile(HermiteTable table, double cutoff, double tail_slope);

    double operator()(double r) const;
    double derivative(double r) const;
    double cutoff() const { return cutoff_; }
    double tail_slope() const { return tail_slope_; }

  private:
    HermiteTable table_;
    double cutoff_ = 0.0;
    double f_cut_ = 0.0;
    double tail_slope_ = 0.0;
};

struct Tabulation {
    std::vector<double> r, phi, Phi, g, f, df;
};

struct ConstantsOptions {
    double quad_tol = 1e-10;
    int grid_nodes = 4096;
    double scan_max = 0.0;
    AStrategy a_strategy;
    /// K: cap on E V(X_0) and E V(Y_0) entering K5 (pipeline 2).
    double initial_moment_cap = 1.0;
};

struct Pipeline1Report {
    double A = 0.0;
    bool A_exact = false;
    double D = 0.0;
    double R1 = 0.0;
    double R2 = 0.0;
    double c = 0.0;
    double gamma = 0.0;
    double C = 0.0;
    double L1 = 0.0;
    double quad_tol = 0.0;
    bool contractive = false;  ///< gamma > 0
    double log_phi_R2 = 0.0;   ///< log phi(R2); phi is computed in log space
    std::shared_ptr<const FProfile> f;
    Tabulation table;

    /// Values on the tabulation grid, interpolated in between.
    double phi(double r) const;
    double Phi(double r) const;
    double g(double r) const;

    std::shared_ptr<const HermiteTable> ell_, Phi_, Psi_scaled_;
    double Psi_R2_scaled_ = 0.0;
};

struct Pipeline2Report {
    double A = 0.0;
    bool A_exact = false;
    double D = 0.0;
    double M_tilde = 0.0;
    double L = 0.0;
    double lambda = 0.0;
    double R3 = 0.0;
    double R4 = 0.0;
    double eta = 0.0;
    double xi = 0.0;
    double log_eta_inv = 0.0;  ///< log of \int_0^{R4} Phi/phi
    double log_xi_inv = 0.0;   ///< log of \int_0^{R3} Phi/phi
    double epsilon = 0.0;
    double c = 0.0;
    double K1 = 0.0;
    double K3 = 0.0;
    double K4 = 0.0;
    double K5 = 0.0;
    double initial_moment_cap = 0.0;
    double L1 = 0.0;
    double L1_star = 0.0;
    double L1_star_star = 0.0;
    bool below_L1_star = false;
    bool below_L1_star_star = false;
    double quad_tol = 0.0;
    std::shared_ptr<const FProfile> f;
    Tabulation table;

    double h(double r) const;
    double phi(double r) const;
    double Phi(double r) const;
    double g(double r) const;
    double xi_inv() const { return std::exp(log_xi_inv); }
    double eta_inv() const { return std::exp(log_eta_inv); }

    std::shared_ptr<const HermiteTable> ell_, Phi_, Psi_scaled_;
    double Psi_R3_scaled_ = 0.0, Psi_R4_scaled_ = 0.0;
};

Pipeline1Report build_pipeline1(const CoefficientModel& model, const AssumptionBundle& assumptions,
                                const ConstantsOptions& options = {});
Pipeline2Report build_pipeline2(const CoefficientModel& model, const AssumptionBundle& assumptions,
                                const ConstantsOptions& options = {});

enum class MetricKind { rho, rho1 };

/// rho(x, y) = f(|x - y|) and rho1(x, y) = f(|x - y|)(1 + eps V(x) + eps V(y)), V = 1 + |.|^2.
class MetricEvaluator {
  public:
    static MetricEvaluator rho(const Pipeline1Report& report);
    static MetricEvaluator rho(const Pipeline2Report& report);
    static MetricEvaluator rho1(const Pipeline2Report& report);

    MetricKind kind() const { return kind_; }
    double epsilon() const { return epsilon_; }
    double f(double r) const { return (*f_)(r); }
    double operator()(std::span<const double> x, std::span<const double> y) const;
    CostFn as_cost() const;

  private:
    MetricEvaluator(MetricKind kind, std::shared_ptr<const FProfile> f, double epsilon)
        : kind_(kind), f_(std::move(f)), epsilon_(epsilon) {}

    MetricKind kind_;
    std::shared_ptr<const FProfile> f_;
    double epsilon_ = 0.0;
};

} // namespace mvc
