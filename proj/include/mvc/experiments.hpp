#pragma once

#include "mvc/constants.hpp"
#include "mvc/model.hpp"
#include "mvc/simulate.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mvc {

struct InitialLaw {
    enum class Kind { point, gaussian, cloud } kind = Kind::point;
    Vector center;       ///< point mass location / Gaussian mean (zero when empty)
    double stddev = 1.0; ///< isotropic Gaussian scale
    PointCloud cloud;    ///< resampled with replacement when sizes differ

    static InitialLaw point(Vector at);
    static InitialLaw gaussian(Vector mean, double stddev);

    PointCloud sample(int n, int dim, std::uint64_t seed, std::uint32_t stream) const;
};

struct ExperimentConfig {
    std::string model_name = "mean_field_ou";
    ModelParams model_params;
    /// Fields replacing the built-in assumption constants (see apply_assumption_overrides).
    nlohmann::json assumption_overrides = nlohmann::json::object();
    int pipeline = 1;

    int n = 2000;
    double h = 0.01;
    double T = 20.0;
    std::uint32_t stride = 10;
    std::uint64_t seed = 1;
    int replicates = 8;
    int workers = 1;

    InitialLaw mu0, nu0;
    CouplingMode mode = CouplingMode::mixed;
    double delta = 1e-3;

    /// Contraction: W_rho (and W_rho1) are evaluated every `metric_every`
    /// records on `metric_subsamples` subsamples of `metric_subsample_size`.
    int metric_every = 50;
    int metric_subsamples = 4;
    int metric_subsample_size = 256;

    std::vector<int> n_grid = {64, 128, 256, 512, 1024, 2048};
    int n_ref_factor = 4;

    /// Ergodicity: lags (time units) for the Cauchy check from T/2.
    std::vector<double> cauchy_lags = {1.0, 2.0, 5.0, 10.0};

    double fit_t_min = 1.0;
};

/// Built-in model named by the config with its assumption overrides applied.
BuiltinModel resolve_model(const ExperimentConfig& cfg);

struct RateFit {
    double slope = 0.0;       ///< d log(value) / dt
    double decay_rate = 0.0;  ///< -slope
    double intercept = 0.0;
    double r_squared = 0.0;
    double t_min = 0.0, t_max = 0.0;
    int points = 0;
};

/// OLS of log(value) on t over t >= t_min, stopping at the first value at or
/// below the noise floor. Needs at least 5 points.
RateFit fit_rate(const std::vector<double>& t, const std::vector<double>& value, double noise_floor = 0.0,
                 double t_min = 1.0);

struct Assertion {
    std::string name;
    bool passed = false;
    double worst_margin = 0.0;  ///< max(lhs - rhs); <= 0 passes
    std::string detail;
};

struct SeriesRow {
    double t = 0.0;
    double mean = 0.0;
    double std_error = 0.0;
};

struct ContractionResult {
    int pipeline = 1;
    double rate_constant = 0.0;  ///< gamma (pipeline 1) or c (pipeline 2)
    double C = 0.0;              ///< prefactor of the W1 bound (pipeline 1)
    bool bound_applicable = false;
    std::vector<SeriesRow> w1;         ///< W1(mu_t, nu_t) over replicates
    std::vector<SeriesRow> pair_r;     ///< mean |X_i - Y_i|
    std::vector<SeriesRow> w_rho;      ///< W_rho at coarse records
    std::vector<SeriesRow> w_rho1;     ///< pipeline 2 only
    std::vector<double> bound;         ///< C e^{-gamma t} W1(0) at each w1 row
    double noise_floor = 0.0;
    std::optional<RateFit> fit;
    std::optional<RateFit> pair_fit;
    std::vector<Assertion> assertions;
    nlohmann::json constants;
};

ContractionResult run_contraction(const ExperimentConfig& cfg);

struct ChaosRow {
    int n = 0;
    double mean = 0.0;
    double std_error = 0.0;
    double initial = 0.0;   ///< mean W1(mu_0^n, mu_0^ref)
    double bound = 0.0;
};

struct ChaosResult {
    double gamma = 0.0;
    int n_ref = 0;
    double fitted_C = 0.0;
    double slope = 0.0;  ///< log-log slope of mean distance against n
    std::vector<ChaosRow> rows;
    std::vector<Assertion> assertions;
    std::vector<std::string> warnings;
};

ChaosResult run_chaos(const ExperimentConfig& cfg);

struct ErgodicityResult {
    double terminal_mean = 0.0;
    double terminal_mean_se = 0.0;
    double terminal_variance = 0.0;
    double terminal_variance_se = 0.0;
    std::optional<double> stationary_variance;  ///< analytic, mean_field_ou only
    std::vector<SeriesRow> mean_series, variance_series;
    std::vector<SeriesRow> cauchy;  ///< t = lag, value = W1(mu_{T/2}, mu_{T/2 + lag})
    double noise_floor = 0.0;
    std::vector<Assertion> assertions;
};

ErgodicityResult run_ergodicity(const ExperimentConfig& cfg);

struct MomentCeiling {
    double C1 = 0.0, C2 = 0.0, C3 = 0.0, C4 = 0.0, K = 0.0, ceiling = 0.0;
};

/// C4/K + 1 from the Gronwall chain; needs the kappa tail declaration.
MomentCeiling moment_ceiling(const CoefficientModel& model, const AssumptionBundle& assumptions);

struct MomentResult {
    MomentCeiling ceiling;
    std::vector<SeriesRow> abs_moment;  ///< E|X_t|
    double sup_abs_moment = 0.0;
    std::vector<Assertion> assertions;
};

MomentResult run_moment_bound(const ExperimentConfig& cfg);

// Report emission.
void write_csv(std::ostream& out, const ContractionResult& r);
void write_csv(std::ostream& out, const ChaosResult& r);
void write_csv(std::ostream& out, const ErgodicityResult& r);
void write_csv(std::ostream& out, const MomentResult& r);

nlohmann::json to_json(const RateFit& f);
nlohmann::json to_json(const ContractionResult& r);
nlohmann::json to_json(const ChaosResult& r);
nlohmann::json to_json(const ErgodicityResult& r);
nlohmann::json to_json(const MomentResult& r);
nlohmann::json to_json(const Pipeline1Report& r);
nlohmann::json to_json(const Pipeline2Report& r);

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
};

/// Standalone SVG line plot.
void write_svg(std::ostream& out, const std::string& title, const std::vector<PlotSeries>& series, bool log_y,
               const std::string& x_label = "t");

} // namespace mvc
