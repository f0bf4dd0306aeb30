#include "nup/gram_taylor.hpp"

#include <array>
#include <cmath>
#include <initializer_list>
#include <stdexcept>

namespace nup {

namespace {

Mat had(const Mat& x, const Mat& y) { return x.cwiseProduct(y); }
Mat had2(const Mat& x) { return hadamard_power(x, 2); }
Mat had3(const Mat& x) { return hadamard_power(x, 3); }

// tr(X/n)^et / R(X)^er, or 0 for a zero Gram matrix.
double pw(const Mat& x, double et, double er) {
    if (!(x.trace() > 0.0)) return 0.0;
    return std::pow(trace_n(x), et) / std::pow(soft_rank(x), er);
}

// Cosine between the empirical covariance (1/n) Σ_i a_i^{⊗2} and
// (1/n^p) Σ (c1_{i1} ⊗ … ⊗ cp_{ip})^{⊗2}, where E holds the inner products
// ⟨c1_{i1} ⊗ … ⊗ cp_{ip}, a_i⟩, `upper` is the Gram of the a_i and `lowers`
// are the Grams of the c families. The 1/n factors cancel.
double cov_cos(const Tensor<double>& e, const Mat& upper, std::initializer_list<const Mat*> lowers) {
    double den = upper.norm();
    for (const Mat* c : lowers) den *= c->norm();
    if (!(den > 0.0)) return 0.0;
    return e.flat().squaredNorm() / den;
}

double root4(double x) { return std::pow(std::max(x, 0.0), 0.25); }
double root2(double x) { return std::sqrt(std::max(x, 0.0)); }

// W_i = Rᵀ M_i C for every sample i.
std::vector<Mat> bilinear_tables(const std::vector<Mat>& m, const Mat& r, const Mat& c) {
    std::vector<Mat> w;
    w.reserve(m.size());
    for (const auto& mi : m) w.push_back(r.transpose() * mi * c);
    return w;
}

// E[i1,i2,i3] = W_{i3}[i1,i2] = ⟨r_{i1} ⊗ c_{i2}, M_{i3}⟩.
Tensor<double> binom3_bilinear(const std::vector<Mat>& m, const Mat& r, const Mat& c) {
    const Index n = r.cols();
    const auto w = bilinear_tables(m, r, c);
    Tensor<double> e({n, n, n});
    for (Index i1 = 0; i1 < n; ++i1)
        for (Index i2 = 0; i2 < n; ++i2)
            for (Index i3 = 0; i3 < n; ++i3) e(i1, i2, i3) = w[static_cast<std::size_t>(i3)](i1, i2);
    return e;
}

// E[i1,i2,i3] = G1[i1,i3] G2[i2,i3] = ⟨x_{i1} ⊗ y_{i2}, x_{i3} ⊗ y_{i3}⟩.
Tensor<double> binom3_product(const Mat& g1, const Mat& g2) {
    const Index n = g1.rows();
    Tensor<double> e({n, n, n});
    for (Index i1 = 0; i1 < n; ++i1)
        for (Index i2 = 0; i2 < n; ++i2)
            for (Index i3 = 0; i3 < n; ++i3) e(i1, i2, i3) = g1(i1, i3) * g2(i2, i3);
    return e;
}

// E[i1,i2,i3,i4] = G1[i1,i4] G2[i2,i4] G3[i3,i4].
Tensor<double> binom4_product(const Mat& g1, const Mat& g2, const Mat& g3) {
    const Index n = g1.rows();
    Tensor<double> e({n, n, n, n});
    for (Index i1 = 0; i1 < n; ++i1)
        for (Index i2 = 0; i2 < n; ++i2)
            for (Index i3 = 0; i3 < n; ++i3)
                for (Index i4 = 0; i4 < n; ++i4) e(i1, i2, i3, i4) = g1(i1, i4) * g2(i2, i4) * g3(i3, i4);
    return e;
}

// One side of a mixed third-order term: the per-sample tensor g_i ⊗ M_i with
// g a vector family (Gram `g`) and M a matrix family (Gram `mg`). Slots are the
// positions (0, 1, 2) of i1, i2, i3 paired with g, the row side and the column
// side of M.
struct Side {
    const Mat* g;
    int gslot;
    std::vector<Mat> m;
    const Mat* mg;
    const Mat* rows;  // vectors paired with the row index of M
    const Mat* rows_gram;
    int rslot;
    const Mat* cols;
    const Mat* cols_gram;
    int cslot;
};

// E[i1,i2,i3,i4] = g[i_gslot, i4] · rows_{i_rslot}ᵀ M_{i4} cols_{i_cslot}.
Tensor<double> binom4_side(const Side& s) {
    const Index n = s.g->rows();
    const auto w = bilinear_tables(s.m, *s.rows, *s.cols);
    Tensor<double> e({n, n, n, n});
    std::array<Index, 3> ii{};
    for (ii[0] = 0; ii[0] < n; ++ii[0])
        for (ii[1] = 0; ii[1] < n; ++ii[1])
            for (ii[2] = 0; ii[2] < n; ++ii[2])
                for (Index i4 = 0; i4 < n; ++i4)
                    e(ii[0], ii[1], ii[2], i4) =
                        (*s.g)(ii[s.gslot], i4) * w[static_cast<std::size_t>(i4)](ii[s.rslot], ii[s.cslot]);
    return e;
}

double side_cov_cos(const Side& s, const Tensor<double>& e) {
    return cov_cos(e, had(*s.g, *s.mg), {s.g, s.rows_gram, s.cols_gram});
}

// E[i1,i2,i3,i4] = ⟨b1_{i1} ⊗ b2_{i2} ⊗ b3_{i3}, z_{i4}⟩ evaluated as
// ∂∂∇ℓ_{i4}[G1 b1_{i1}, G2 b2_{i2}, G3 b3_{i3}].
Tensor<double> binom4_z(const BatchTrace<double>& tr, const CrossDerivatives& cross, int a, int b, int c) {
    const Index n = cross.n();
    Tensor<double> e({n, n, n, n});
    for (Index i4 = 0; i4 < n; ++i4) {
        const auto& s = cross.samples[static_cast<std::size_t>(i4)];
        const Mat y1 = s.G[a] * tr.b[a], y2 = s.G[b] * tr.b[b], y3 = s.G[c] * tr.b[c];
        for (Index i1 = 0; i1 < n; ++i1)
            for (Index i2 = 0; i2 < n; ++i2)
                for (Index i3 = 0; i3 < n; ++i3)
                    e(i1, i2, i3, i4) = contract3(s.loss_tress, y1.col(i1), y2.col(i2), y3.col(i3));
    }
    return e;
}

std::vector<Mat> h_family(const CrossDerivatives& cross, int a, int b) {
    std::vector<Mat> out;
    for (Index i = 0; i < cross.n(); ++i) out.push_back(cross.h(i, a, b));
    return out;
}

std::vector<Mat> j_family(const CrossDerivatives& cross, int a, int b) {
    std::vector<Mat> out;
    for (Index i = 0; i < cross.n(); ++i) out.push_back(cross.j(i, a, b));
    return out;
}

Mat family_gram(const std::vector<Mat>& m) {
    const Index n = static_cast<Index>(m.size());
    Mat g(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index k = i; k < n; ++k) g(i, k) = g(k, i) = m[static_cast<std::size_t>(i)].cwiseProduct(m[static_cast<std::size_t>(k)]).sum();
    return g;
}

// Σ T1[x,y,w] T2[x',y',w'] M1[x,x'] M2[y,y'] M3[w,w'].
double tensor_pair(const Tensor<double>& t1, const Tensor<double>& t2, const Mat& m1, const Mat& m2, const Mat& m3) {
    const Index d1 = t1.dim(0), d2 = t1.dim(1), d3 = t1.dim(2);
    double acc = 0;
    for (Index x = 0; x < d1; ++x)
        for (Index y = 0; y < d2; ++y)
            for (Index w = 0; w < d3; ++w) {
                const double v = t1(x, y, w);
                if (v == 0.0) continue;
                double inner_sum = 0;
                for (Index xp = 0; xp < d1; ++xp)
                    for (Index yp = 0; yp < d2; ++yp) {
                        const double myz = m1(x, xp) * m2(y, yp);
                        if (myz == 0.0) continue;
                        for (Index wp = 0; wp < d3; ++wp) inner_sum += t2(xp, yp, wp) * myz * m3(w, wp);
                    }
                acc += v * inner_sum;
            }
    return acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// Gram matrices

GramSet gram_set(const BatchTrace<double>& tr, const CrossDerivatives* cross) {
    GramSet gs;
    gs.l = tr.l();
    gs.n = tr.n();
    gs.F.resize(static_cast<std::size_t>(gs.l + 1));
    for (int k = 0; k <= gs.l; ++k) gs.F[k] = gram(tr.f[k]);
    if (tr.has_backward()) {
        gs.B.resize(static_cast<std::size_t>(gs.l + 2));
        for (int k = 1; k <= gs.l + 1; ++k) gs.B[k] = gram(tr.b[k]);
    }
    if (cross) {
        const int L = gs.l + 1;
        for (int a = 1; a <= L; ++a)
            for (int b = a; b <= L; ++b) {
                // ⟨G_aᵀ Hℓ G_b, G'_aᵀ Hℓ' G'_b⟩ = tr(Hℓ (G_a G'_aᵀ) Hℓ' (G'_b G_bᵀ)), in output space.
                Mat hg(gs.n, gs.n);
                for (Index i = 0; i < gs.n; ++i)
                    for (Index k = i; k < gs.n; ++k) {
                        const auto& si = cross->samples[static_cast<std::size_t>(i)];
                        const auto& sk = cross->samples[static_cast<std::size_t>(k)];
                        const Mat ma = si.G[a] * sk.G[a].transpose();
                        const Mat mb = sk.G[b] * si.G[b].transpose();
                        hg(i, k) = hg(k, i) = (si.loss_hess * ma * sk.loss_hess * mb).trace();
                    }
                gs.H[{a, b}] = hg;
            }
        for (int a = 1; a <= gs.l; ++a)
            for (int b = a; b <= gs.l; ++b) gs.J[{a, b}] = family_gram(j_family(*cross, a, b));
    }
    return gs;
}

Mat z_gram(const CrossDerivatives& cross, int a, int b, int c) {
    const Index n = cross.n();
    Mat z(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index k = i; k < n; ++k) {
            const auto& si = cross.samples[static_cast<std::size_t>(i)];
            const auto& sk = cross.samples[static_cast<std::size_t>(k)];
            const Mat m1 = si.G[a] * sk.G[a].transpose();
            const Mat m2 = si.G[b] * sk.G[b].transpose();
            const Mat m3 = si.G[c] * sk.G[c].transpose();
            z(i, k) = z(k, i) = tensor_pair(si.loss_tress, sk.loss_tress, m1, m2, m3);
        }
    return z;
}

Mat h_gram_materialized(const CrossDerivatives& cross, int a, int b) { return family_gram(h_family(cross, a, b)); }

Mat j_gram_materialized(const CrossDerivatives& cross, int a, int b) { return family_gram(j_family(cross, a, b)); }

Mat z_gram_materialized(const CrossDerivatives& cross, int a, int b, int c) {
    std::vector<Tensor<double>> zs;
    for (Index i = 0; i < cross.n(); ++i) zs.push_back(cross.z(i, a, b, c));
    const Index n = cross.n();
    Mat g(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < n; ++k) g(i, k) = zs[static_cast<std::size_t>(i)].flat().dot(zs[static_cast<std::size_t>(k)].flat());
    return g;
}

// ---------------------------------------------------------------------------
// First order

Vec tau_vector(const GramSet& gs) {
    Vec tau(gs.l + 1);
    for (int k = 1; k <= gs.l + 1; ++k) {
        const Mat& F = gs.F[k - 1];
        const Mat& B = gs.B[k];
        tau(k - 1) = pw(F, 0.5, 0.25) * pw(B, 0.5, 0.25);
    }
    return tau;
}

Vec t1_vector(const GramSet& gs) {
    Vec t1(gs.l + 1);
    for (int k = 1; k <= gs.l + 1; ++k) {
        const Mat& F = gs.F[k - 1];
        const Mat& B = gs.B[k];
        t1(k - 1) = pw(F, 0.5, 0.25) * pw(B, 0.5, 0.25) * cosine_pair(F, B);
    }
    return t1;
}

double first_order_term(const Vec& xi, const Vec& tau, const Vec& t1) { return xi.cwiseProduct(tau).dot(t1); }

double first_order_direct(const LayerMats<double>& grads, const Vec& xi) {
    double acc = 0;
    for (std::size_t k = 0; k < grads.size(); ++k) acc += xi(static_cast<Index>(k)) * grads[k].squaredNorm();
    return acc;
}

// ---------------------------------------------------------------------------
// Second order

Mat t2_matrix(const GramSet& gs, const BatchTrace<double>& tr, const CrossDerivatives& cross) {
    const int L = gs.l + 1;
    Mat t2 = Mat::Zero(L, L);
    for (int k = 1; k <= L; ++k) {
        const Mat& Fm = gs.F[k - 1];
        const Mat& Bk = gs.B[k];
        const Mat& Hkk = gs.Hg(k, k);
        const Mat F2 = had2(Fm);
        const auto eh = binom3_bilinear(h_family(cross, k, k), tr.b[k], tr.b[k]);
        const auto ef = binom3_product(Fm, Fm);
        t2(k - 1, k - 1) = pw(F2, 0.5, 0.25) * pw(Hkk, 0.5, 0.25) * cosine_pair(eh, ef) *
                           root2(cov_cos(eh, Hkk, {&Bk, &Bk})) * root2(cov_cos(ef, F2, {&Fm, &Fm}));
    }
    for (int k1 = 1; k1 <= L; ++k1)
        for (int k2 = k1 + 1; k2 <= L; ++k2) {
            const Mat& Fa = gs.F[k1 - 1];
            const Mat& Fb = gs.F[k2 - 1];
            const Mat& Ba = gs.B[k1];
            const Mat& Bb = gs.B[k2];
            const Mat& H12 = gs.Hg(k1, k2);
            const Mat& J = gs.Jg(k1, k2 - 1);
            const Mat Fa2 = had2(Fa), Fb2 = had2(Fb), Bb2 = had2(Bb);

            const auto eh = binom3_bilinear(h_family(cross, k1, k2), tr.b[k1], tr.b[k2]);
            const auto eff = binom3_product(Fa, Fb);
            const double h_term = pw(Fa2, 0.25, 0.125) * pw(Fb2, 0.25, 0.125) * pw(H12, 0.5, 0.25) *
                                  cosine_pair(eh, eff) * root4(cosine_pair(Fa2, Fb2)) *
                                  root2(cov_cos(eh, H12, {&Ba, &Bb})) * root2(cov_cos(eff, had(Fa, Fb), {&Fa, &Fb}));

            const auto ej = binom3_bilinear(j_family(cross, k1, k2 - 1), tr.b[k1], tr.f[k2 - 1]);
            const auto efb = binom3_product(Fa, Bb);
            const double j_term = pw(Fa2, 0.25, 0.125) * pw(Bb2, 0.25, 0.125) * pw(J, 0.5, 0.25) *
                                  cosine_pair(ej, efb) * root4(cosine_pair(Fa2, Bb2)) *
                                  root2(cov_cos(ej, J, {&Ba, &Fb})) * root2(cov_cos(efb, had(Fa, Bb), {&Fa, &Bb}));

            t2(k1 - 1, k2 - 1) = t2(k2 - 1, k1 - 1) = h_term + j_term;
        }
    return t2;
}

double second_order_factored(const Vec& xi, const Vec& tau, const Mat& t2) {
    const Vec d = xi.cwiseProduct(tau);
    return d.dot(t2 * d);
}

double second_order_direct(const LayerMats<double>& grads, const Vec& xi, const LayerHessian& hess) {
    const int L = static_cast<int>(grads.size());
    double acc = 0;
    for (int k1 = 1; k1 <= L; ++k1)
        for (int k2 = 1; k2 <= L; ++k2)
            acc += xi(k1 - 1) * xi(k2 - 1) * hess.contract(k1, k2, grads[k1 - 1], grads[k2 - 1]);
    return acc;
}

// ---------------------------------------------------------------------------
// Third order

namespace {

struct T3Builder {
    const GramSet& gs;
    const BatchTrace<double>& tr;
    const CrossDerivatives& cross;

    const Mat& F(int k) const { return gs.F[k - 1]; }  // F_{k−1}
    const Mat& B(int k) const { return gs.B[k]; }

    // z-term with layers in the displayed slot order (a, b, c).
    double z_term(int a, int b, int c) const {
        const Mat Z = z_gram(cross, a, b, c);
        const auto ez = binom4_z(tr, cross, a, b, c);
        const auto ef = binom4_product(F(a), F(b), F(c));
        const double align = cosine_pair(ez, ef);
        const double ccz = root2(cov_cos(ez, Z, {&B(a), &B(b), &B(c)}));
        const double ccf = root2(cov_cos(ef, had(had(F(a), F(b)), F(c)), {&F(a), &F(b), &F(c)}));
        if (a == b && b == c) {
            const Mat F3 = had3(F(a));
            return pw(F3, 0.5, 0.25) * pw(Z, 0.5, 0.25) * align * ccz * ccf;
        }
        if (a == b) {
            const Mat Fa3 = had3(F(a)), Fc3 = had3(F(c));
            return pw(Fa3, 1.0 / 3.0, 1.0 / 6.0) * pw(Fc3, 1.0 / 6.0, 1.0 / 12.0) * pw(Z, 0.5, 0.25) * align *
                   root4(cosine_triplet(had2(F(a)), had2(F(a)), had2(F(c)))) * ccz * ccf;
        }
        return pw(had3(F(a)), 1.0 / 6.0, 1.0 / 12.0) * pw(had3(F(b)), 1.0 / 6.0, 1.0 / 12.0) *
               pw(had3(F(c)), 1.0 / 6.0, 1.0 / 12.0) * pw(Z, 0.5, 0.25) * align *
               root4(cosine_triplet(had2(F(a)), had2(F(b)), had2(F(c)))) * ccz * ccf;
    }

    // Mixed term from two sides. When both sides carry the same vector
    // family, its two quarter-power factors appear merged as one half-power
    // factor, as in the repeated-index displays.
    double mixed_term(const Side& x, const Side& y, bool merged_g) const {
        const auto ex = binom4_side(x);
        const auto ey = binom4_side(y);
        const Mat gx2 = had2(*x.g), gy2 = had2(*y.g), mx2 = had2(*x.mg), my2 = had2(*y.mg);
        const double g_scale = merged_g ? pw(gx2, 0.5, 0.25) : pw(gx2, 0.25, 0.125) * pw(gy2, 0.25, 0.125);
        return g_scale * pw(mx2, 0.25, 0.125) * pw(my2, 0.25, 0.125) * cosine_pair(ex, ey) *
               root4(cosine_pair(gx2, mx2)) * root4(cosine_pair(gy2, my2)) * root2(side_cov_cos(x, ex)) *
               root2(side_cov_cos(y, ey));
    }

    // h-side g_{gs} ⊗ h_{a,b} with rows b_a, cols b_b.
    Side h_side(const Mat& g, int gslot, int a, int b, int rslot, int cslot, const Mat& hgram) const {
        return Side{&g, gslot, h_family(cross, a, b), &hgram, &tr.b[a], &B(a), rslot, &tr.b[b], &B(b), cslot};
    }

    // j-side g ⊗ j_{a,c} with rows b_a, cols f_c (layer c's forward vectors).
    Side j_side(const Mat& g, int gslot, int a, int c, int rslot, int cslot, const Mat& jgram) const {
        return Side{&g, gslot, j_family(cross, a, c), &jgram, &tr.b[a], &B(a), rslot, &tr.f[c], &gs.F[c], cslot};
    }

    double entry(int k1, int k2, int k3) const {
        if (k1 == k2 && k2 == k3) return z_term(k1, k1, k1);
        if (k1 == k2) {
            // T³_{k1,k1,k2} with k1 < k2 (here k3 plays k2).
            const int a = k1, b = k3;
            const Side x = h_side(F(a), 0, a, b, 1, 2, gs.Hg(a, b));
            const Side y = j_side(F(a), 1, a, b - 1, 0, 2, gs.Jg(a, b - 1));
            return z_term(a, a, b) + 2.0 * mixed_term(x, y, true);
        }
        if (k2 == k3) {
            // T³_{k1,k1,k2} with k1 > k2: the pair index is L = k2, the single one s = k1.
            const int s = k1, L = k2;
            const Side x = h_side(F(s), 0, L, L, 1, 2, gs.Hg(L, L));
            const Side y = j_side(F(L), 1, s, L - 1, 0, 2, gs.Jg(s, L - 1));
            return z_term(L, L, s) + 2.0 * mixed_term(x, y, false);
        }
        // k1 < k2 < k3: z-term plus the four mixed terms.
        const Side h23 = h_side(F(k1), 0, k2, k3, 1, 2, gs.Hg(k2, k3));
        const Side j13 = j_side(F(k2), 1, k1, k3 - 1, 0, 2, gs.Jg(k1, k3 - 1));
        const Side j12_f3 = j_side(F(k3), 2, k1, k2 - 1, 0, 1, gs.Jg(k1, k2 - 1));
        const Side h13 = h_side(F(k2), 1, k1, k3, 0, 2, gs.Hg(k1, k3));
        const Side j23 = j_side(F(k1), 0, k2, k3 - 1, 1, 2, gs.Jg(k2, k3 - 1));
        const Side j12_b3 = j_side(B(k3), 2, k1, k2 - 1, 0, 1, gs.Jg(k1, k2 - 1));
        return z_term(k1, k2, k3) + mixed_term(h23, j13, false) + mixed_term(h23, j12_f3, false) +
               mixed_term(h13, j23, false) + mixed_term(j12_b3, j23, false);
    }
};

}  // namespace

T3Tensor t3_tensor(const GramSet& gs, const BatchTrace<double>& tr, const CrossDerivatives& cross) {
    const int L = gs.l + 1;
    T3Tensor t3;
    t3.L = L;
    t3.data.assign(static_cast<std::size_t>(L * L * L), 0.0);
    const T3Builder builder{gs, tr, cross};
    for (int k1 = 1; k1 <= L; ++k1)
        for (int k2 = k1; k2 <= L; ++k2)
            for (int k3 = k2; k3 <= L; ++k3) {
                const double v = builder.entry(k1, k2, k3);
                std::array<int, 3> p{k1, k2, k3};
                do {
                    t3(p[0], p[1], p[2]) = v;
                } while (std::next_permutation(p.begin(), p.end()));
            }
    return t3;
}

double third_order_factored(const Vec& xi, const Vec& tau, const T3Tensor& t3) {
    const Vec d = xi.cwiseProduct(tau);
    double acc = 0;
    for (int k1 = 1; k1 <= t3.L; ++k1)
        for (int k2 = 1; k2 <= t3.L; ++k2)
            for (int k3 = 1; k3 <= t3.L; ++k3) acc += d(k1 - 1) * d(k2 - 1) * d(k3 - 1) * t3(k1, k2, k3);
    return acc;
}

double third_order_direct(const LayerMats<double>& grads, const Vec& xi, const BatchTrace<double>& tr,
                          const CrossDerivatives& cross) {
    const int L = static_cast<int>(grads.size());
    const LayerMats<double> u = scale_layers(grads, xi);
    double acc = 0;
    for (int k1 = 1; k1 <= L; ++k1)
        for (int k2 = 1; k2 <= L; ++k2)
            for (int k3 = 1; k3 <= L; ++k3)
                acc += tressian_contract(tr, cross, k1, k2, k3, u[k1 - 1], u[k2 - 1], u[k3 - 1]);
    return acc;
}

// ---------------------------------------------------------------------------
// Diagnostics

double effective_sharpness(double first, double second) {
    if (!(first > 0.0)) throw std::domain_error("effective_sharpness: first-order term must be positive");
    return second / first;
}

SharpnessEstimate training_sharpness_fd(const NupConfig& cfg, const ParamSet<double>& params,
                                        const Batch<double>& batch, const LayerMats<double>& u, double rel_step) {
    const auto grads = grad_layerwise(full_trace(cfg, params, batch));
    SharpnessEstimate est;
    est.first = inner(u, grads);
    est.second = curvature_along_fd(cfg, params, batch, u, rel_step);
    est.sharpness = effective_sharpness(est.first, est.second);
    return est;
}

}  // namespace nup
