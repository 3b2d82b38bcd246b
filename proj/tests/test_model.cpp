#include "mvc/model.hpp"
#include "mvc/rng.hpp"
#include "mvc/transport.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace mvc;

namespace {

ModelParams params(std::map<std::string, double> s) {
    ModelParams p;
    p.scalars = std::move(s);
    return p;
}

ValidationReport validate(const BuiltinModel& bm, int probes = 1000, bool p2 = false) {
    ProbePlan plan;
    plan.n_probe = probes;
    plan.pipeline2 = p2;
    return validate_bundle(bm.model, bm.assumptions, plan);
}

} // namespace

TEST_CASE("mean-field OU constants") {
    const BuiltinModel bm = builtin_model("mean_field_ou", params({{"L1", 0.1}}));
    const auto& a = bm.assumptions;
    for (double r : {0.0, 0.5, 3.0, 100.0}) CHECK(a.kappa(r) == -1.0);
    CHECK(a.L2 == 0.0);
    CHECK(a.M == 0.0);
    CHECK(a.Lambda == 1.0);
    REQUIRE(a.dissipativity);
    CHECK(a.dissipativity->lambda == 1.0);
    CHECK(a.dissipativity->L4 == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(a.D_pipeline1() == 2.0);
    CHECK(a.A_override.value() == 0.0);
}

TEST_CASE("mean-field OU validates with equality in the Lipschitz check") {
    const BuiltinModel bm = builtin_model("mean_field_ou", params({{"L1", 0.1}}));
    const ValidationReport rep = validate(bm, 1000, true);
    for (const auto& c : rep.checks) {
        INFO(c.name << " " << c.detail);
        if (c.applicable) CHECK(c.passed);
    }
    CHECK(rep.passed());
    CHECK(rep.check("lipschitz_drift").worst_margin <= 1e-9);

    // <x - y, b(x,mu) - b(y,nu)> = -|x - y|^2 + L1 <m_mu - m_nu, x - y>, direct algebra.
    CounterStream rng(3, 0);
    for (int k = 0; k < 200; ++k) {
        Vector x(1), y(1);
        x << 4 * rng.normal();
        y << 4 * rng.normal();
        PointCloud mu(5, 1), nu(5, 1);
        for (int i = 0; i < 5; ++i) mu.at(i, 0) = rng.normal(), nu.at(i, 0) = rng.normal();
        const auto smu = MeasureSummary::of(mu, bm.model.features), snu = MeasureSummary::of(nu, bm.model.features);
        const double lhs = (x - y).dot(bm.model.drift(x, smu) - bm.model.drift(y, snu));
        const double z = x(0) - y(0);
        const double rhs = -z * z + 0.1 * (mu.mean()(0) - nu.mean()(0)) * z;
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12).scale(1.0));
    }
    // Same measure on both sides: the bound is attained.
    Vector x(1), y(1);
    x << 1.5;
    y << -0.5;
    const auto s = MeasureSummary::dirac(Vector::Zero(1));
    const double lhs = (x - y).dot(bm.model.drift(x, s) - bm.model.drift(y, s));
    CHECK(lhs == bm.assumptions.kappa(2.0) * 4.0);
}

TEST_CASE("D1 and its failure") {
    BuiltinModel bm = builtin_model("mean_field_ou");
    CHECK(validate(bm, 50).check("D1_positive").passed);
    bm.assumptions.M = 3.0;
    const ValidationReport rep = validate(bm, 50);
    CHECK_FALSE(rep.check("D1_positive").passed);
    CHECK(rep.check("D1_positive").worst_margin == doctest::Approx(1.0));
    CHECK_FALSE(rep.passed());
}

TEST_CASE("double well clips kappa and validates") {
    const BuiltinModel bm = builtin_model("double_well_attraction", params({{"kappa_max", 10}}));
    CHECK(bm.assumptions.kappa(8.0) == -10.0);
    CHECK(bm.assumptions.kappa(2.0) == doctest::Approx(0.0));
    const ValidationReport rep = validate(bm, 2000, true);
    for (const auto& c : rep.checks) {
        INFO(c.name << " " << c.detail);
        if (c.applicable) CHECK(c.passed);
    }
}

TEST_CASE("custom kappa model validates in several shapes") {
    ModelParams full = params({{"dim", 2}, {"kappa0", 0.5}, {"slope", 0.5}});
    full.sigma = {1.0, 0.2, -0.1, 0.8};
    ModelParams diag = params({{"dim", 3}, {"kappa0", -1.0}, {"slope", 0.0}, {"L1", 0.2}});
    diag.sigma = {1.0, 2.0, 0.5};
    for (const ModelParams& p : {full, diag, params({{"kappa0", 2.0}, {"slope", 1.0}, {"L1", 0.1}})}) {
        const BuiltinModel bm = builtin_model("const_diffusion_custom_kappa", p);
        const ValidationReport rep = validate(bm, 1000, true);
        for (const auto& c : rep.checks) {
            INFO(bm.model.dim << " " << c.name << " " << c.detail);
            if (c.applicable) CHECK(c.passed);
        }
    }
    ModelParams bad = params({{"dim", 2}});
    bad.sigma = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(builtin_model("const_diffusion_custom_kappa", bad), Error);
}

TEST_CASE("understated constants are caught") {
    BuiltinModel bm = builtin_model("mean_field_ou", params({{"L1", 0.3}}));
    bm.assumptions.L1 = 0.1;
    CHECK_FALSE(validate(bm, 500).check("lipschitz_drift").passed);

    bm = builtin_model("mean_field_ou", params({{"dim", 2}}));
    bm.assumptions.sigma_trace_sup = 1.5;
    CHECK_FALSE(validate(bm, 10).check("sigma_trace_bound").passed);

    bm = builtin_model("mean_field_ou");
    bm.assumptions.kappa_tail = KappaTail{1.0, 2.0};
    CHECK_FALSE(validate(bm, 10).check("kappa_tail_K").passed);
}

TEST_CASE("pure diffusion lacks tail and dissipativity") {
    const BuiltinModel bm = builtin_model("const_diffusion_custom_kappa", params({{"kappa0", 0.0}, {"slope", 0.0}}));
    CHECK_FALSE(bm.assumptions.dissipativity.has_value());
    CHECK_FALSE(bm.assumptions.kappa_tail.has_value());
    const ValidationReport rep = validate(bm, 100, true);
    CHECK_FALSE(rep.check("kappa_tail_limsup").passed);
    CHECK_FALSE(rep.check("dissipativity").passed);
}

TEST_CASE("non-finite coefficients name the probe") {
    BuiltinModel bm = builtin_model("mean_field_ou");
    bm.model.drift = [](const Vector& x, const MeasureSummary&) -> Vector {
        if (std::abs(x(0)) > 8.0) return Vector::Constant(1, std::numeric_limits<double>::quiet_NaN());
        return -x;
    };
    ProbePlan plan;
    try {
        validate_bundle(bm.model, bm.assumptions, plan);
        FAIL("expected a probe error");
    } catch (const ProbeError& e) {
        CHECK(e.probe() >= 0);
        CHECK(std::string(e.what()).find("probe " + std::to_string(e.probe())) != std::string::npos);
    }
}

TEST_CASE("nondeterministic drift is flagged") {
    BuiltinModel bm = builtin_model("mean_field_ou");
    auto counter = std::make_shared<int>(0);
    bm.model.drift = [counter](const Vector& x, const MeasureSummary&) -> Vector {
        return -x * (1.0 + 1e-3 * ++*counter);
    };
    CHECK_FALSE(validate(bm, 20).check("deterministic").passed);
}

TEST_CASE("unknown model name") {
    CHECK_THROWS_AS(builtin_model("nope"), Error);
    CHECK(builtin_model_names().size() == 3);
}

TEST_CASE("operator norm and sigma inverse") {
    Matrix m(2, 2);
    m << 3, 0, 0, -4;
    CHECK(operator_norm(m) == doctest::Approx(4.0));
    ModelParams p = params({{"dim", 2}});
    p.sigma = {2.0, 1.0, 0.0, 1.0};
    const BuiltinModel bm = builtin_model("const_diffusion_custom_kappa", p);
    const Matrix prod = bm.model.sigma(Vector::Zero(2)) * bm.model.sigma_inverse(Vector::Ones(2));
    CHECK((prod - Matrix::Identity(2, 2)).norm() < 1e-14);
}
