#pragma once

#include "mvc/model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mvc {

struct ParticleEnsemble {
    PointCloud states;
    double time = 0.0;
    std::uint32_t step = 0;
    std::uint32_t stream = 0;  ///< RNG stream id; distinct ensembles must use distinct streams
};

enum class CouplingMode { mixed, synchronous, reflection, independent };

std::string to_string(CouplingMode m);
CouplingMode coupling_mode_from_string(const std::string& s);

struct PairDiagnostics {
    double r = 0.0;
    double rc = 0.0;
    double sc = 1.0;
};

struct CoupledEnsemble {
    ParticleEnsemble X, Y;
    double delta = 1e-3;
    CouplingMode mode = CouplingMode::mixed;
    /// Filled by step_coupled when the plan asks for diagnostics (state at step start).
    std::vector<PairDiagnostics> diagnostics;
};

struct StepPlan {
    double h = 0.01;
    std::uint32_t steps = 0;
    std::uint32_t stride = 1;
    std::uint64_t seed = 1;
    int workers = 1;
    bool record_diagnostics = false;
};

/// Law fed to the drift. empirical_self uses each ensemble's own empirical law;
/// frozen calls the user functions with the step-start time.
struct LawProxy {
    enum class Kind { empirical_self, frozen } kind = Kind::empirical_self;
    std::function<MeasureSummary(double t)> frozen_x, frozen_y;
};

/// rc = clamp((r - delta/2)/(delta/2), 0, 1), sc = sqrt(1 - rc^2).
std::pair<double, double> transition_rc_sc(double r, double delta);

/// H = I - 2uu^T with u = sigma_y^{-1} z / |sigma_y^{-1} z|.
Matrix reflection_matrix(const Matrix& sigma_y, const Vector& z);

struct CouplingMatrices {
    Matrix Delta;  ///< sigma(x) - sigma(y)
    Matrix alpha;  ///< sigma(x) - sigma(y) H
    Vector e;      ///< (x - y)/|x - y|
};

CouplingMatrices coupling_matrices(const Matrix& sigma_x, const Matrix& sigma_y, const Vector& z);

struct RadialDiagnostics {
    double drift = 0.0;
    double var_coeff = 0.0;
};

/// Drift and quadratic-variation rate of r_t = |X_t - Y_t| at one pair.
RadialDiagnostics radial_diagnostics(const Vector& x, const Vector& y, const Vector& b_x, const Vector& b_y,
                                     const CoefficientModel& model, double delta);

/// One Euler-Maruyama step of the coupled pair systems (in place).
void step_coupled(CoupledEnsemble& ce, const CoefficientModel& model, const StepPlan& plan, const LawProxy& law = {});

/// One Euler-Maruyama step of the n-particle system (in place).
void step_particle_system(ParticleEnsemble& pe, const CoefficientModel& model, const StepPlan& plan);

/// Runs plan.steps steps; `record` is called at step 0 and after every stride.
void run_particle_system(ParticleEnsemble& pe, const CoefficientModel& model, const StepPlan& plan,
                         const std::function<void(const ParticleEnsemble&)>& record = {});
void run_coupled(CoupledEnsemble& ce, const CoefficientModel& model, const StepPlan& plan,
                 const std::function<void(const CoupledEnsemble&)>& record = {}, const LawProxy& law = {});

struct Snapshot {
    std::uint32_t step = 0;
    double time = 0.0;
    PointCloud states;
};

struct LyapunovPoint {
    double t = 0.0;
    double mean_V = 0.0;
    double std_error = 0.0;
    double bound = 0.0;  ///< L/lambda + e^{-lambda t} E V(X_0); NaN when inapplicable
};

/// Empirical E V(X_t) with V = 1 + |x|^2 along a trajectory, next to the
/// Lyapunov bound when `L_lambda` is given.
std::vector<LyapunovPoint> lyapunov_trace(const std::vector<Snapshot>& trajectory,
                                          std::optional<std::pair<double, double>> L_lambda);

/// Runs fn(i) for i in [0, n) on `workers` threads (contiguous chunks).
void parallel_for(int n, int workers, const std::function<void(int begin, int end)>& fn);

// Trajectory output. CSV columns: step,time,particle,x0,...; the binary ledger is
// "MVC1", u32 N, u32 d, f64 h (little-endian), then one block of N*d f64 per record.

class TrajectoryWriter {
  public:
    enum class Format { csv, binary };
    TrajectoryWriter(std::ostream& out, Format format, int n, int dim, double h);
    void write(const ParticleEnsemble& pe);

  private:
    std::ostream& out_;
    Format format_;
    int n_, dim_;
};

struct BinaryLedger {
    std::uint32_t n = 0, dim = 0;
    double h = 0.0;
    std::vector<PointCloud> records;
};

BinaryLedger read_binary_ledger(std::istream& in);

} // namespace mvc
