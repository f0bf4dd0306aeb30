#include <doctest.h>

#include <cmath>

#include "nup/gram_taylor.hpp"
#include "nup/verify.hpp"

using namespace nup;

namespace {

struct Setup {
    Instance inst;
    BatchTrace<double> tr;
    CrossDerivatives cross;

    explicit Setup(const Instance& i) : inst(i) {
        tr = full_trace(inst.cfg, inst.params, inst.batch);
        cross = cross_derivatives(inst.cfg, inst.params, tr, inst.batch.labels);
    }
};

Setup make_setup(int trial, int activation = -1, int loss = -1, Index m_out = 3) {
    InstanceSpec spec;
    spec.activation = activation;
    spec.loss = loss;
    spec.m_out = m_out;
    return Setup(make_instance(99, trial, spec));
}

double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST_CASE("cross Jacobians: G_k equals h-free chain, j for the linear activation is a scaled weight product") {
    const Setup s = make_setup(0, 0);
    const auto& cfg = s.inst.cfg;
    const auto w = widths(cfg);
    const auto J = cross_jacobians(cfg, s.inst.params, s.tr, 0);
    for (int a = 1; a <= cfg.l; ++a) {
        Mat p = Mat::Identity(w[a], w[a]) * std::sqrt(static_cast<double>(cfg.m) / static_cast<double>(w[a]));
        CHECK(max_abs(J[a][a] - p.transpose()) < 1e-13);
        for (int b = a + 1; b <= cfg.l; ++b) {
            p = std::sqrt(static_cast<double>(cfg.m) / static_cast<double>(w[b])) * s.inst.params.theta(b) * p;
            CHECK(max_abs(J[a][b] - p.transpose()) < 1e-12);
            CHECK(max_abs(s.cross.j(0, a, b) - p.transpose()) < 1e-12);
        }
        if (a > 1) CHECK(max_abs(s.cross.j(0, a, a - 1)) == 0.0);
    }
}

TEST_CASE("cross Hessians and tressians: propagated forms match the output-space contractions") {
    for (int trial = 0; trial < 4; ++trial) {
        const Setup s = make_setup(trial);
        const auto& cfg = s.inst.cfg;
        const int L = cfg.l + 1;
        for (Index i = 0; i < s.cross.n(); ++i) {
            const auto H = cross_hessians(cfg, s.inst.params, s.tr, s.inst.batch.labels, i);
            for (int a = 1; a <= L; ++a)
                for (int b = 1; b <= L; ++b) {
                    CHECK(max_abs(H[a][b] - s.cross.h(i, a, b)) < 1e-12);
                    CHECK(max_abs(H[a][b] - H[b][a].transpose()) < 1e-12);
                }
            for (auto [a, b, c] : {std::tuple{1, 2, 3}, std::tuple{2, 2, 1}, std::tuple{L, 1, L}}) {
                const auto z = s.cross.z(i, a, b, c);
                const auto ref = cross_tressian(cfg, s.inst.params, s.tr, s.inst.batch.labels, i, a, b, c);
                CHECK((z.flat() - ref.flat()).cwiseAbs().maxCoeff() < 1e-12);
            }
        }
    }
}

TEST_CASE("a single-logit classifier has vanishing loss derivatives") {
    const Setup s = make_setup(1, 1, static_cast<int>(LossKind::classification), 1);
    CHECK(std::abs(s.tr.losses.mean()) < 1e-15);
    const int L = s.inst.cfg.l + 1;
    for (int a = 1; a <= L; ++a) CHECK(s.cross.z(0, a, a, a).flat().cwiseAbs().maxCoeff() == 0.0);
    CHECK(max_abs(s.cross.h(0, 1, L)) == 0.0);
}

TEST_CASE("layer Hessian blocks are transposes of each other and the contraction is symmetric") {
    const Setup s = make_setup(2);
    const auto hess = assemble_layer_hessian(s.tr, s.cross);
    const int L = s.inst.cfg.l + 1;
    SeededRng rng(6);
    for (int a = 1; a <= L; ++a)
        for (int b = 1; b <= L; ++b) {
            CHECK(max_abs(hess.block(a, b) - hess.block(b, a).transpose()) < 1e-12);
            const Mat& ta = s.inst.params.theta(a);
            const Mat& tb = s.inst.params.theta(b);
            const Mat va = gaussian_matrix<double>(rng, ta.rows(), ta.cols(), 0, 1);
            const Mat vb = gaussian_matrix<double>(rng, tb.rows(), tb.cols(), 0, 1);
            CHECK(hess.contract(a, b, va, vb) == doctest::Approx(hess.contract(b, a, vb, va)).epsilon(1e-12));
            CHECK(hessian_block_terms(a, b) == (a == b ? 1 : 2));
        }
}

TEST_CASE("third-derivative contraction is invariant under joint permutation of layers and vectors") {
    const Setup s = make_setup(3);
    const int L = s.inst.cfg.l + 1;
    SeededRng rng(12);
    auto draw = [&](int k) {
        const Mat& t = s.inst.params.theta(k);
        return Mat(gaussian_matrix<double>(rng, t.rows(), t.cols(), 0, 1));
    };
    for (auto [a, b, c] : {std::tuple{1, 2, 3}, std::tuple{1, 1, 2}, std::tuple{2, L, L}, std::tuple{1, 3, L}}) {
        const Mat va = draw(a), vb = draw(b), vc = draw(c);
        const double ref = tressian_contract(s.tr, s.cross, a, b, c, va, vb, vc);
        CHECK(tressian_contract(s.tr, s.cross, b, a, c, vb, va, vc) == doctest::Approx(ref).epsilon(1e-11));
        CHECK(tressian_contract(s.tr, s.cross, c, b, a, vc, vb, va) == doctest::Approx(ref).epsilon(1e-11));
        CHECK(tressian_contract(s.tr, s.cross, b, c, a, vb, vc, va) == doctest::Approx(ref).epsilon(1e-11));
    }
    CHECK(tressian_block_terms(1, 1, 1) == kTermZ);
    CHECK((tressian_block_terms(1, 2, 3) & kTermZ) != 0u);
}

TEST_CASE("output-space Gram matrices equal the materialized ones") {
    for (int trial = 0; trial < 3; ++trial) {
        const Setup s = make_setup(trial);
        const int l = s.inst.cfg.l;
        const GramSet gs = gram_set(s.tr, &s.cross);
        for (int a = 1; a <= l + 1; ++a)
            for (int b = a; b <= l + 1; ++b) {
                const Mat ref = h_gram_materialized(s.cross, a, b);
                CHECK(max_abs(gs.Hg(a, b) - ref) <= 1e-10 * std::max(1.0, max_abs(ref)));
            }
        for (int a = 1; a <= l; ++a)
            for (int b = a; b <= l; ++b) {
                const Mat ref = j_gram_materialized(s.cross, a, b);
                CHECK(max_abs(gs.Jg(a, b) - ref) <= 1e-10 * std::max(1.0, max_abs(ref)));
            }
        for (auto [a, b, c] : {std::tuple{1, 1, 1}, std::tuple{1, 2, l + 1}, std::tuple{2, 2, 3}}) {
            const Mat ref = z_gram_materialized(s.cross, a, b, c);
            CHECK(max_abs(z_gram(s.cross, a, b, c) - ref) <= 1e-10 * std::max(1.0, max_abs(ref)));
        }
    }
}

TEST_CASE("factored Taylor coefficients match the direct contractions") {
    for (int trial = 0; trial < 6; ++trial) {
        const Setup s = make_setup(trial);
        const auto g = grad_layerwise(s.tr);
        const Vec xi = grad_scales(s.tr, s.inst.cfg.scheme);
        const GramSet gs = gram_set(s.tr, &s.cross);
        const Vec tau = tau_vector(gs);
        const double d1 = first_order_direct(g, xi);
        const double d2 = second_order_direct(g, xi, assemble_layer_hessian(s.tr, s.cross));
        const double d3 = third_order_direct(g, xi, s.tr, s.cross);
        CHECK(first_order_term(xi, tau, t1_vector(gs)) == doctest::Approx(d1).epsilon(1e-10));
        CHECK(second_order_factored(xi, tau, t2_matrix(gs, s.tr, s.cross)) == doctest::Approx(d2).epsilon(1e-8));
        CHECK(third_order_factored(xi, tau, t3_tensor(gs, s.tr, s.cross)) == doctest::Approx(d3).epsilon(1e-8));
        for (int k = 1; k <= s.inst.cfg.l + 1; ++k)
            CHECK(gradient_norm_sq_factored(gs.F[k - 1], gs.B[k]) ==
                  doctest::Approx(g[k - 1].squaredNorm()).epsilon(1e-12));
    }
}

TEST_CASE("sharpness helpers") {
    CHECK(effective_sharpness(2.0, 6.0) == 3.0);
    CHECK(stability_ratio(0.5, 3.0) == 0.75);
    CHECK(taylor_delta(0.1, 1.0, 2.0, 6.0) == doctest::Approx(-0.1 + 0.01 - 0.001));
}
