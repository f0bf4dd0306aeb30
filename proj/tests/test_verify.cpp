#include <doctest.h>

#include <cmath>

#include "nup/verify.hpp"

using namespace nup;

namespace {

ParamSet<double> params_of(std::initializer_list<double> values) {
    ParamSet<double> p;
    Mat m(1, static_cast<Index>(values.size()));
    Index j = 0;
    for (double v : values) m(0, j++) = v;
    p.layers.push_back(m);
    return p;
}

double sum_pow(const ParamSet<double>& p, int e) {
    double s = 0;
    for (const auto& w : p.layers) s += w.array().pow(e).sum();
    return s;
}

}  // namespace

TEST_CASE("fd_gradient recovers known gradients") {
    const auto p = params_of({0.5, -1.5, 2.0});
    const auto g = fd_gradient([](const ParamSet<double>& q) { return sum_pow(q, 2); }, p, FdPlan{});
    for (Index j = 0; j < 3; ++j) CHECK(g[0](0, j) == doctest::Approx(2 * p.layers[0](0, j)).epsilon(1e-8));
    const auto z = fd_gradient([](const ParamSet<double>&) { return 4.0; }, p, FdPlan{});
    CHECK(z[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("directional finite differences are exact on low-degree polynomials") {
    const auto p = params_of({0.3, -0.2});
    LayerMats<double> u{Mat::Zero(1, 2)};
    u[0](0, 0) = 1.0;
    const LossFn cubic = [](const ParamSet<double>& q) { return std::pow(q.layers[0](0, 0), 3); };
    const LossFn quad = [](const ParamSet<double>& q) { return std::pow(q.layers[0](0, 0), 2); };
    FdPlan plan;
    plan.step = 1e-2;
    CHECK(fd_directional(cubic, p, u, 3, plan) == doctest::Approx(6.0).epsilon(1e-6));
    CHECK(std::abs(fd_directional(quad, p, u, 3, plan)) < 1e-6);
    CHECK(fd_directional(quad, p, u, 2, plan) == doctest::Approx(2.0).epsilon(1e-8));
    plan.scheme = FdScheme::central_4pt;
    CHECK(fd_directional(cubic, p, u, 3, plan) == doctest::Approx(6.0).epsilon(1e-6));
    CHECK(fd_directional(cubic, p, u, 1, plan) == doctest::Approx(3 * 0.09).epsilon(1e-10));
    CHECK_THROWS_AS(fd_directional(cubic, p, u, 4, plan), ConfigError);
}

TEST_CASE("central difference error shrinks quadratically with the step") {
    const auto p = params_of({0.7});
    LayerMats<double> u{Mat::Ones(1, 1)};
    const LossFn f = [](const ParamSet<double>& q) { return std::exp(q.layers[0](0, 0)); };
    double prev = 0;
    for (int i = 0; i < 4; ++i) {
        FdPlan plan;
        plan.step = 0.1 / std::pow(2.0, i);
        plan.relative = false;
        const double err = std::abs(fd_directional(f, p, u, 1, plan) - std::exp(0.7));
        if (i > 0) {
            const double ratio = prev / err;
            CHECK(ratio > 2.5);
            CHECK(ratio < 6.0);
        }
        prev = err;
    }
}

TEST_CASE("instances respect the kink guard and are reproducible") {
    for (int t = 0; t < 10; ++t) {
        const Instance a = make_instance(17, t), b = make_instance(17, t);
        CHECK(a.summary() == b.summary());
        CHECK(a.params.layers[0] == b.params.layers[0]);
        if (!a.smooth()) CHECK(min_abs_preactivation(a.cfg, a.params, a.batch) > 1e-3);
    }
    CHECK(activation_pairs().size() == 3);
}

TEST_CASE("suites: empty runs pass, corrupted gradients fail, reports are deterministic") {
    const SuiteReport empty = run_suite("all", 0, 1);
    CHECK(empty.rows.empty());
    CHECK(empty.all_pass());

    SuiteHooks hooks;
    hooks.corrupt_gradient = [](LayerMats<double>& g) {
        for (auto& m : g) m *= 2.0;
    };
    CHECK_FALSE(run_suite("grad", 3, 1, hooks).all_pass());

    const SuiteReport a = run_suite("all", 3, 5), b = run_suite("all", 3, 5);
    CHECK(a.all_pass());
    CHECK(a.table() == b.table());
    CHECK(a.text() == b.text());
    CHECK_THROWS_AS(run_suite("bogus", 1, 1), ConfigError);
    CHECK(is_suite_level("tress"));
    CHECK_FALSE(is_suite_level("bogus"));
}

TEST_CASE("Taylor remainders decay at fourth order on a smooth instance") {
    InstanceSpec spec;
    spec.activation = 0;
    spec.loss = static_cast<int>(LossKind::squared_error);
    const Instance inst = make_instance(3, 0, spec);
    const auto tp = taylor_pieces(inst);
    const double eta0 = 0.05 * std::max(1.0, params_norm(inst.params)) / std::sqrt(squared_norm(tp.u));
    const auto rem = taylor_remainders(inst, eta0, 3);
    REQUIRE(rem.size() == 4);
    for (std::size_t i = 0; i + 1 < rem.size(); ++i) {
        CHECK(rem[i] / rem[i + 1] > 8.0);
        CHECK(rem[i] / rem[i + 1] < 32.0);
    }
}
