#include <doctest.h>

#include <cmath>
#include <set>

#include "nup/gram.hpp"
#include "nup/loss.hpp"

using namespace nup;

TEST_CASE("rng: identical seeds give identical streams, splits differ") {
    SeededRng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        CHECK(x != c.next_u64());
    }
    SeededRng s0 = SeededRng(7).split(0), s1 = SeededRng(7).split(1);
    CHECK(s0.next_u64() != s1.next_u64());
}

TEST_CASE("rng: uniform, below and normal have sane moments") {
    SeededRng rng(1);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0;
    std::vector<int> hist(5, 0);
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        su += u;
        const double z = rng.normal();
        sn += z;
        sn2 += z * z;
        ++hist[rng.below(5)];
    }
    CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(std::abs(sn / n) < 0.01);
    CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
    for (int h : hist) CHECK(std::abs(h - n / 5) < n / 100);
}

TEST_CASE("tensor: contraction matches matrix product and full pairing gives the inner product") {
    SeededRng rng(3);
    const Mat x = gaussian_matrix<double>(rng, 3, 4, 0.0, 1.0);
    const Mat y = gaussian_matrix<double>(rng, 4, 2, 0.0, 1.0);
    const auto tx = Tensor<double>::from_matrix(x), ty = Tensor<double>::from_matrix(y);
    const Mat prod = contract(tx, ty, {{1, 0}}).to_matrix();
    CHECK((prod - x * y).cwiseAbs().maxCoeff() < 1e-13);
    const Mat x2 = gaussian_matrix<double>(rng, 3, 4, 0.0, 1.0);
    const auto full = contract(tx, Tensor<double>::from_matrix(x2), {{0, 0}, {1, 1}});
    CHECK(full.size() == 1);
    CHECK(full.data()[0] == doctest::Approx(inner(x, x2)).epsilon(1e-13));
    CHECK_THROWS_AS(contract(tx, ty, {{0, 0}}), ShapeError);
}

TEST_CASE("tensor: norms, cosines and Hadamard powers") {
    Mat x(2, 2);
    x << 1, -2, 0, 2;
    CHECK(norm3(x) == doctest::Approx(std::cbrt(17.0)));
    CHECK(cosine_pair(x, x) == doctest::Approx(1.0));
    CHECK(cosine_pair(x, Mat(-x)) == doctest::Approx(-1.0));
    CHECK(cosine_pair(x, Mat::Zero(2, 2)) == 0.0);
    const Mat id = Mat::Identity(2, 2);
    CHECK(cosine_triplet(id, id, id) == doctest::Approx(2.0 / std::pow(std::cbrt(2.0), 3)));
    CHECK(hadamard_power(x, 3)(0, 1) == -8.0);
    CHECK_THROWS_AS(hadamard_power(x, 0), ConfigError);
    CHECK_THROWS_AS(cosine_triplet(id, Mat::Identity(3, 3), id), ShapeError);
}

TEST_CASE("model: widths and parameter counts") {
    NupConfig cfg;
    cfg.l = 3;
    cfg.m = 4;
    cfg.r = 2;
    cfg.m0 = 5;
    cfg.m_out = 2;
    CHECK(widths(cfg) == std::vector<Index>{5, 36, 16, 4, 2});
    CHECK(param_count(cfg) == 36 * 5 + 16 * 36 + 4 * 16 + 2 * 4);
    cfg.l = 8;
    cfg.m = 256;
    cfg.m0 = 784;
    cfg.m_out = 10;
    CHECK(param_count(cfg) == 431229440LL);
    cfg.m = 0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("model: activation values and slopes") {
    CHECK(phi(2.0, 0.5, 0.5) == 2.0);
    CHECK(phi(-2.0, 0.5, 0.5) == 0.0);
    CHECK(phi(-2.0, 0.6, 0.4) == doctest::Approx(-0.4));
    CHECK(phi_prime(-1.0, 0.6, 0.4) == doctest::Approx(0.2));
    CHECK(phi_prime(3.0, 0.6, 0.4) == doctest::Approx(1.0));
    CHECK(eoc_variance(1.0, 0.0) == 1.0);
}

TEST_CASE("model: a single-hidden-layer linear net with m = m_1 is a plain matrix chain") {
    NupConfig cfg;
    cfg.l = 1;
    cfg.m = 3;
    cfg.r = 0;
    cfg.m0 = 3;
    cfg.m_out = 3;
    cfg.a = 1.0;
    cfg.b = 0.0;
    SeededRng rng(5);
    const auto p = init_eoc(cfg, rng);
    const Mat x = gaussian_matrix<double>(rng, 3, 4, 0.0, 1.0);
    const auto tr = forward(cfg, p, x);
    CHECK((tr.out - p.theta(2) * p.theta(1) * x).cwiseAbs().maxCoeff() < 1e-12);
    // Linearity in the input.
    const auto tr2 = forward(cfg, p, Mat(2.0 * x));
    CHECK((tr2.out - 2.0 * tr.out).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("model: shape mismatches are rejected") {
    NupConfig cfg;
    cfg.l = 2;
    cfg.m = 2;
    cfg.m0 = 3;
    cfg.m_out = 2;
    SeededRng rng(1);
    auto p = init_eoc(cfg, rng);
    CHECK_THROWS_AS(forward(cfg, p, Mat(Mat::Zero(4, 2))), ShapeError);
    p.layers[1] = Mat::Zero(5, 5);
    CHECK_THROWS_AS(forward(cfg, p, Mat(Mat::Zero(3, 2))), ShapeError);
}

TEST_CASE("loss: gradient and Hessian agree with finite differences") {
    Vec z(4);
    z << 0.2, -0.7, 1.1, 0.05;
    const double h = 1e-5;
    for (auto kind : {LossKind::classification, LossKind::squared_error}) {
        const Vec g = loss_grad(kind, z, 2);
        const Mat hs = loss_hess(kind, z, 2);
        for (Index j = 0; j < z.size(); ++j) {
            Vec zp = z, zm = z;
            zp(j) += h;
            zm(j) -= h;
            CHECK(g(j) == doctest::Approx((loss_value(kind, zp, 2) - loss_value(kind, zm, 2)) / (2 * h)).epsilon(1e-7));
            const Vec col = (loss_grad(kind, zp, 2) - loss_grad(kind, zm, 2)) / (2 * h);
            CHECK((hs.col(j) - col).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
    CHECK_THROWS_AS(loss_value(LossKind::classification, z, 4), LabelError);
}

TEST_CASE("loss: third derivative is symmetric and vanishes for squared error") {
    Vec z(3);
    z << 1.0, -0.5, 0.25;
    const auto t = loss_tress(LossKind::classification, z, 0);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 3; ++j)
            for (Index k = 0; k < 3; ++k) {
                CHECK(t(i, j, k) == doctest::Approx(t(j, i, k)));
                CHECK(t(i, j, k) == doctest::Approx(t(k, j, i)));
            }
    const auto s = loss_tress(LossKind::squared_error, z, 0);
    CHECK(s.flat().cwiseAbs().maxCoeff() == 0.0);
    // Softmax is shift-invariant, so large logits stay finite.
    Vec big(3);
    big << 1000.0, 999.0, -1000.0;
    CHECK(std::isfinite(loss_value(LossKind::classification, big, 2)));
}

TEST_CASE("gram: soft rank bounds and scale invariance") {
    SeededRng rng(9);
    for (int t = 0; t < 50; ++t) {
        const Index n = 1 + static_cast<Index>(rng.below(8));
        const Mat x = gaussian_matrix<double>(rng, 3, n, 0.0, 1.0);
        const Mat g = gram(x);
        const double r = soft_rank(g);
        CHECK(r >= 1.0 - 1e-12);
        CHECK(r <= std::min<double>(3, n) + 1e-12);
        CHECK(soft_rank(Mat(1e-200 * g)) == doctest::Approx(r));
        CHECK(soft_rank(Mat(1e200 * g)) == doctest::Approx(r));
    }
    CHECK(soft_rank(Mat::Identity(5, 5)) == doctest::Approx(5.0));
    CHECK_THROWS_AS(soft_rank(Mat::Zero(3, 3)), DegenerateGram);
    CHECK_THROWS_AS(soft_rank(Mat::Zero(2, 3)), ShapeError);
}

TEST_CASE("gram: triplet cosine of Gram matrices lies in [0, 1] and equals 1 for rank-one equal inputs") {
    SeededRng rng(11);
    for (int t = 0; t < 100; ++t) {
        const Index n = 1 + static_cast<Index>(rng.below(8));
        const Mat a = gram(gaussian_matrix<double>(rng, 2, n, 0.0, 1.0));
        const Mat b = gram(gaussian_matrix<double>(rng, 4, n, 0.0, 1.0));
        const Mat c = gram(gaussian_matrix<double>(rng, 1, n, 0.0, 1.0));
        const double v = cosine_triplet(a, b, c);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
    }
    const Mat v = Mat::Ones(4, 4);
    CHECK(cosine_triplet(v, v, v) == doctest::Approx(1.0));
    CHECK(trace_n(Mat(Mat::Identity(4, 4) * 3.0)) == doctest::Approx(3.0));
}
