#include "mvc/simulate.hpp"

#include "mvc/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <mutex>
#include <istream>
#include <limits>
#include <ostream>
#include <thread>

namespace mvc {

namespace {

// Noise slots within one (particle, step, stream) address.
constexpr std::uint16_t kSlotParticle = 0;
constexpr std::uint16_t kSlotB1 = 1;
constexpr std::uint16_t kSlotB2 = 2;
constexpr std::uint16_t kSlotIndependentY = 3;

void scaled_normals(const StepPlan& plan, std::uint32_t particle, std::uint32_t step, std::uint32_t stream,
                    std::uint16_t slot, double sqrt_h, Vector& out) {
    fill_normals(NoiseAddress{plan.seed, particle, step, stream, slot, 0}, out.data(), static_cast<int>(out.size()));
    out *= sqrt_h;
}

[[noreturn]] void explosion(int pair, std::uint32_t step) {
    throw Error("explosion: non-finite state at pair " + std::to_string(pair) + ", step " + std::to_string(step));
}

MeasureSummary law_of(const PointCloud& states, const MeasureFeatures& features) {
    return MeasureSummary::view(states, features);
}

} // namespace

std::string to_string(CouplingMode m) {
    switch (m) {
    case CouplingMode::mixed: return "mixed";
    case CouplingMode::synchronous: return "synchronous";
    case CouplingMode::reflection: return "reflection";
    case CouplingMode::independent: return "independent";
    }
    return "unknown";
}

CouplingMode coupling_mode_from_string(const std::string& s) {
    if (s == "mixed") return CouplingMode::mixed;
    if (s == "synchronous") return CouplingMode::synchronous;
    if (s == "reflection") return CouplingMode::reflection;
    if (s == "independent") return CouplingMode::independent;
    throw Error("unknown coupling mode: " + s);
}

std::pair<double, double> transition_rc_sc(double r, double delta) {
    const double half = 0.5 * delta;
    const double rc = std::clamp((r - half) / half, 0.0, 1.0);
    return {rc, std::sqrt(1.0 - rc * rc)};
}

Matrix reflection_matrix(const Matrix& sigma_y, const Vector& z) {
    Eigen::FullPivLU<Matrix> lu(sigma_y);
    if (!lu.isInvertible()) throw Error("reflection_matrix: singular diffusion matrix");
    const Vector w = lu.solve(z);
    const double n = w.norm();
    if (!(n > 0.0)) throw Error("reflection_matrix: zero direction");
    const Vector u = w / n;
    return Matrix::Identity(z.size(), z.size()) - 2.0 * u * u.transpose();
}

CouplingMatrices coupling_matrices(const Matrix& sigma_x, const Matrix& sigma_y, const Vector& z) {
    const double r = z.norm();
    if (!(r > 0.0)) throw Error("coupling matrices need x != y");
    CouplingMatrices m;
    m.Delta = sigma_x - sigma_y;
    m.alpha = sigma_x - sigma_y * reflection_matrix(sigma_y, z);
    m.e = z / r;
    return m;
}

RadialDiagnostics radial_diagnostics(const Vector& x, const Vector& y, const Vector& b_x, const Vector& b_y,
                                     const CoefficientModel& model, double delta) {
    const Vector z = x - y;
    const double r = z.norm();
    if (!(r > 0.0)) throw Error("radial_diagnostics needs x != y");
    const auto [rc, sc] = transition_rc_sc(r, delta);
    const CouplingMatrices m = coupling_matrices(model.sigma(x), model.sigma(y), z);
    const double ae = (m.alpha.transpose() * m.e).squaredNorm();
    const double de = (m.Delta.transpose() * m.e).squaredNorm();
    RadialDiagnostics out;
    out.drift = m.e.dot(b_x - b_y) + rc * rc * ((m.alpha * m.alpha.transpose()).trace() - ae) / (2.0 * r) +
                sc * sc * ((m.Delta * m.Delta.transpose()).trace() - de) / (2.0 * r);
    out.var_coeff = rc * rc * ae + sc * sc * de;
    return out;
}

void parallel_for(int n, int workers, const std::function<void(int, int)>& fn) {
    workers = std::clamp(workers, 1, std::max(n, 1));
    if (workers == 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex guard;
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const int begin = w * chunk, end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                std::lock_guard lock(guard);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

void step_particle_system(ParticleEnsemble& pe, const CoefficientModel& model, const StepPlan& plan) {
    const int n = pe.states.size(), d = pe.states.dim();
    if (n < 1) throw Error("particle system needs N >= 1");
    const double h = plan.h, sqrt_h = std::sqrt(h);
    // Snapshot of the step-start law; updates write into pe.states.
    const PointCloud start = pe.states;
    const MeasureSummary mu = law_of(start, model.features);
    const std::optional<Matrix>& sigma_const = model.constant_diffusion;
    parallel_for(n, plan.workers, [&](int begin, int end) {
        Vector x(d), xi(d);
        for (int i = begin; i < end; ++i) {
            x = start.point(i);
            scaled_normals(plan, static_cast<std::uint32_t>(i), pe.step, pe.stream, kSlotParticle, sqrt_h, xi);
            auto out = pe.states.point(i);
            out = x + model.drift(x, mu) * h;
            if (sigma_const) out += *sigma_const * xi;
            else out += model.diffusion(x) * xi;
            if (!out.allFinite()) explosion(i, pe.step);
        }
    });
    ++pe.step;
    pe.time = pe.step * h;
}

void step_coupled(CoupledEnsemble& ce, const CoefficientModel& model, const StepPlan& plan, const LawProxy& law) {
    const int n = ce.X.states.size(), d = ce.X.states.dim();
    if (n != ce.Y.states.size() || d != ce.Y.states.dim()) throw Error("coupled ensembles must have equal shape");
    if (ce.X.step != ce.Y.step) throw Error("coupled ensembles are out of step");
    if (ce.mode == CouplingMode::mixed && !(ce.delta > 0.0 && ce.delta < 1.0)) throw Error("delta must lie in (0, 1)");
    const double h = plan.h, sqrt_h = std::sqrt(h);
    const std::uint32_t step = ce.X.step;
    const PointCloud xs = ce.X.states, ys = ce.Y.states;
    MeasureSummary mux, muy;
    if (law.kind == LawProxy::Kind::frozen) {
        if (!law.frozen_x || !law.frozen_y) throw Error("frozen law proxy needs both measures");
        mux = law.frozen_x(ce.X.time);
        muy = law.frozen_y(ce.Y.time);
    } else {
        mux = law_of(xs, model.features);
        muy = law_of(ys, model.features);
    }
    if (plan.record_diagnostics) ce.diagnostics.assign(n, PairDiagnostics{});

    const std::optional<Matrix>& sigma_const = model.constant_diffusion;
    std::optional<Matrix> sigma_const_inv;
    if (sigma_const) sigma_const_inv = model.sigma_inverse(Vector::Zero(d));

    parallel_for(n, plan.workers, [&](int begin, int end) {
        Vector x(d), y(d), z(d), xi1(d), xi2(d), hxi2(d), w(d);
        Matrix sx, sy;
        for (int i = begin; i < end; ++i) {
            const auto pi = static_cast<std::uint32_t>(i);
            x = xs.point(i);
            y = ys.point(i);
            z = x - y;
            const double r = z.norm();
            double rc = 0.0, sc = 1.0;
            switch (ce.mode) {
            case CouplingMode::synchronous: break;
            case CouplingMode::reflection:
                if (r > 0.0) rc = 1.0, sc = 0.0;
                break;
            case CouplingMode::mixed: std::tie(rc, sc) = transition_rc_sc(r, ce.delta); break;
            case CouplingMode::independent: break;
            }
            if (plan.record_diagnostics) ce.diagnostics[i] = {r, rc, sc};

            const Vector bx = model.drift(x, mux);
            const Vector by = model.drift(y, muy);
            if (!sigma_const) {
                sx = model.diffusion(x);
                sy = model.diffusion(y);
            }
            const Matrix& Sx = sigma_const ? *sigma_const : sx;
            const Matrix& Sy = sigma_const ? *sigma_const : sy;

            auto outx = ce.X.states.point(i);
            auto outy = ce.Y.states.point(i);
            scaled_normals(plan, pi, step, ce.X.stream, kSlotB1, sqrt_h, xi1);
            if (ce.mode == CouplingMode::independent) {
                scaled_normals(plan, pi, step, ce.X.stream, kSlotIndependentY, sqrt_h, xi2);
                outx = x + bx * h + Sx * xi1;
                outy = y + by * h + Sy * xi2;
            } else if (rc == 0.0) {
                outx = x + bx * h + Sx * xi1;
                outy = y + by * h + Sy * xi1;
            } else {
                scaled_normals(plan, pi, step, ce.X.stream, kSlotB2, sqrt_h, xi2);
                w = sigma_const_inv ? Vector(*sigma_const_inv * z) : Vector(model.sigma_inverse(y) * z);
                const double wn = w.norm();
                hxi2 = xi2;
                if (wn > 0.0) {
                    w /= wn;
                    hxi2 -= (2.0 * w.dot(xi2)) * w;
                }
                outx = x + bx * h + Sx * (sc * xi1 + rc * xi2);
                outy = y + by * h + Sy * (sc * xi1 + rc * hxi2);
            }
            if (!outx.allFinite() || !outy.allFinite()) explosion(i, step);
        }
    });
    for (ParticleEnsemble* e : {&ce.X, &ce.Y}) {
        ++e->step;
        e->time = e->step * h;
    }
}

void run_particle_system(ParticleEnsemble& pe, const CoefficientModel& model, const StepPlan& plan,
                         const std::function<void(const ParticleEnsemble&)>& record) {
    const std::uint32_t stride = std::max<std::uint32_t>(plan.stride, 1);
    if (record) record(pe);
    for (std::uint32_t k = 1; k <= plan.steps; ++k) {
        step_particle_system(pe, model, plan);
        if (record && (k % stride == 0 || k == plan.steps)) record(pe);
    }
}

void run_coupled(CoupledEnsemble& ce, const CoefficientModel& model, const StepPlan& plan,
                 const std::function<void(const CoupledEnsemble&)>& record, const LawProxy& law) {
    const std::uint32_t stride = std::max<std::uint32_t>(plan.stride, 1);
    if (record) record(ce);
    for (std::uint32_t k = 1; k <= plan.steps; ++k) {
        step_coupled(ce, model, plan, law);
        if (record && (k % stride == 0 || k == plan.steps)) record(ce);
    }
}

std::vector<LyapunovPoint> lyapunov_trace(const std::vector<Snapshot>& trajectory,
                                          std::optional<std::pair<double, double>> L_lambda) {
    std::vector<LyapunovPoint> out;
    double v0 = 0.0;
    for (std::size_t k = 0; k < trajectory.size(); ++k) {
        const PointCloud& s = trajectory[k].states;
        const int n = s.size();
        double sum = 0.0, sum2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double v = 1.0 + s.point(i).squaredNorm();
            sum += v;
            sum2 += v * v;
        }
        LyapunovPoint p;
        p.t = trajectory[k].time;
        p.mean_V = sum / n;
        p.std_error = n > 1 ? std::sqrt(std::max(0.0, (sum2 - n * p.mean_V * p.mean_V) / (n - 1)) / n) : 0.0;
        if (k == 0) v0 = p.mean_V;
        p.bound = std::numeric_limits<double>::quiet_NaN();
        if (L_lambda) {
            const auto [L, lambda] = *L_lambda;
            p.bound = L / lambda + std::exp(-lambda * (p.t - trajectory.front().time)) * v0;
        }
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output

TrajectoryWriter::TrajectoryWriter(std::ostream& out, Format format, int n, int dim, double h)
    : out_(out), format_(format), n_(n), dim_(dim) {
    if (format_ == Format::csv) {
        out_ << "step,time,particle";
        for (int k = 0; k < dim_; ++k) out_ << ",x" << k;
        out_ << '\n';
        return;
    }
    static_assert(std::endian::native == std::endian::little, "binary ledger writer assumes a little-endian host");
    out_.write("MVC1", 4);
    const auto un = static_cast<std::uint32_t>(n), ud = static_cast<std::uint32_t>(dim);
    out_.write(reinterpret_cast<const char*>(&un), 4);
    out_.write(reinterpret_cast<const char*>(&ud), 4);
    out_.write(reinterpret_cast<const char*>(&h), 8);
}

void TrajectoryWriter::write(const ParticleEnsemble& pe) {
    if (pe.states.size() != n_ || pe.states.dim() != dim_) throw Error("trajectory writer: ensemble shape changed");
    if (format_ == Format::binary) {
        out_.write(reinterpret_cast<const char*>(pe.states.data().data()),
                   static_cast<std::streamsize>(pe.states.data().size() * sizeof(double)));
        return;
    }
    char buf[32];
    for (int i = 0; i < n_; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", pe.time);
        out_ << pe.step << ',' << buf << ',' << i;
        for (int k = 0; k < dim_; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", pe.states.at(i, k));
            out_ << ',' << buf;
        }
        out_ << '\n';
    }
}

BinaryLedger read_binary_ledger(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "MVC1", 4) != 0) throw Error("not an MVC1 ledger");
    BinaryLedger led;
    in.read(reinterpret_cast<char*>(&led.n), 4);
    in.read(reinterpret_cast<char*>(&led.dim), 4);
    in.read(reinterpret_cast<char*>(&led.h), 8);
    if (!in) throw Error("truncated MVC1 header");
    const std::size_t block = std::size_t(led.n) * led.dim;
    for (;;) {
        std::vector<double> data(block);
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(block * sizeof(double)));
        if (in.gcount() == 0) break;
        if (static_cast<std::size_t>(in.gcount()) != block * sizeof(double)) throw Error("truncated MVC1 record");
        led.records.emplace_back(static_cast<int>(led.n), static_cast<int>(led.dim), std::move(data));
        if (block == 0) break;
    }
    return led;
}

} // namespace mvc
