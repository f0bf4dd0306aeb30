#include "nup/highdiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace nup {

namespace {

Vec slope_vector(const NupConfig& cfg, const std::vector<Index>& w, const BatchTrace<double>& tr, int k, Index i) {
    const double scale = std::sqrt(static_cast<double>(cfg.m)) / std::sqrt(static_cast<double>(w[k]));
    return tr.pre[k].col(i).unaryExpr([&](double s) { return scale * phi_prime(s, cfg.a, cfg.b); });
}

SampleCross sample_cross(const NupConfig& cfg, const std::vector<Index>& w, const ParamSet<double>& params,
                         const BatchTrace<double>& tr, const std::vector<int>& labels, Index i) {
    const int l = cfg.l;
    SampleCross s;
    s.c.resize(static_cast<std::size_t>(l + 1));
    for (int k = 1; k <= l; ++k) s.c[k] = slope_vector(cfg, w, tr, k, i);

    s.G.resize(static_cast<std::size_t>(l + 2));
    s.G[l + 1] = Mat::Identity(cfg.m_out, cfg.m_out);
    for (int k = l; k >= 1; --k) s.G[k] = (s.G[k + 1] * params.theta(k + 1)) * s.c[k].asDiagonal();

    s.P.assign(static_cast<std::size_t>(l + 1), std::vector<Mat>(static_cast<std::size_t>(l + 1)));
    for (int a = 1; a <= l; ++a) {
        s.P[a][a] = s.c[a].asDiagonal();
        for (int b = a + 1; b <= l; ++b) s.P[a][b] = s.c[b].asDiagonal() * (params.theta(b) * s.P[a][b - 1]);
    }

    const int y = labels[static_cast<std::size_t>(i)];
    s.loss_hess = loss_hess(cfg.loss, tr.out.col(i), y);
    s.loss_tress = loss_tress(cfg.loss, tr.out.col(i), y);
    return s;
}

}  // namespace

Mat CrossDerivatives::j(Index i, int a, int b) const {
    if (b < a) return Mat::Zero(w[a], w[b]);
    return samples[static_cast<std::size_t>(i)].P[a][b].transpose();
}

Mat CrossDerivatives::h(Index i, int a, int b) const {
    const auto& s = samples[static_cast<std::size_t>(i)];
    return s.G[a].transpose() * s.loss_hess * s.G[b];
}

Tensor<double> CrossDerivatives::z(Index i, int a, int b, int c) const {
    const auto& s = samples[static_cast<std::size_t>(i)];
    const auto ga = Tensor<double>::from_matrix(s.G[a]);
    const auto gb = Tensor<double>::from_matrix(s.G[b]);
    const auto gc = Tensor<double>::from_matrix(s.G[c]);
    // T[x,y,w] G_a[x,p] → (y,w,p); · G_b[y,q] → (w,p,q); · G_c[w,r] → (p,q,r).
    const auto t1 = contract(s.loss_tress, ga, {{0, 0}});
    const auto t2 = contract(t1, gb, {{0, 0}});
    return contract(t2, gc, {{0, 0}});
}

CrossDerivatives cross_derivatives(const NupConfig& cfg, const ParamSet<double>& params, const BatchTrace<double>& tr,
                                   const std::vector<int>& labels) {
    CrossDerivatives cd;
    cd.cfg = cfg;
    cd.w = widths(cfg);
    for (Index i = 0; i < tr.n(); ++i) cd.samples.push_back(sample_cross(cfg, cd.w, params, tr, labels, i));
    return cd;
}

std::vector<std::vector<Mat>> cross_jacobians(const NupConfig& cfg, const ParamSet<double>& params,
                                              const BatchTrace<double>& tr, Index i) {
    const auto w = widths(cfg);
    const int l = cfg.l;
    std::vector<Vec> c(static_cast<std::size_t>(l + 1));
    for (int k = 1; k <= l; ++k) c[k] = slope_vector(cfg, w, tr, k, i);
    std::vector<std::vector<Mat>> J(static_cast<std::size_t>(l + 1), std::vector<Mat>(static_cast<std::size_t>(l + 1)));
    for (int k1 = 1; k1 <= l; ++k1) {
        J[k1][k1] = c[k1].asDiagonal();
        // j_{k1,k2} = (diag(c_{k2}) θ_{k2} j_{k1,k2−1}ᵀ)ᵀ
        for (int k2 = k1 + 1; k2 <= l; ++k2)
            J[k1][k2] = (c[k2].asDiagonal() * (params.theta(k2) * J[k1][k2 - 1].transpose())).transpose();
    }
    return J;
}

std::vector<std::vector<Mat>> cross_hessians(const NupConfig& cfg, const ParamSet<double>& params,
                                             const BatchTrace<double>& tr, const std::vector<int>& labels, Index i) {
    const auto w = widths(cfg);
    const int l = cfg.l;
    std::vector<Vec> c(static_cast<std::size_t>(l + 1));
    for (int k = 1; k <= l; ++k) c[k] = slope_vector(cfg, w, tr, k, i);
    std::vector<std::vector<Mat>> H(static_cast<std::size_t>(l + 2), std::vector<Mat>(static_cast<std::size_t>(l + 2)));
    H[l + 1][l + 1] = loss_hess(cfg.loss, tr.out.col(i), labels[static_cast<std::size_t>(i)]);
    // Lower triangle including the diagonal: walk k1 down for every k2 ≥ k1,
    // starting from h_{k2,k2}.
    for (int k2 = l + 1; k2 >= 1; --k2) {
        if (k2 <= l) {
            // h_{k2,k2} = diag(c) θ_{k2+1}ᵀ h_{k2+1,k2+1} θ_{k2+1} diag(c)
            const Mat down = c[k2].asDiagonal() * params.theta(k2 + 1).transpose();
            H[k2][k2] = down * H[k2 + 1][k2 + 1] * down.transpose();
            // h_{k2,k} for k > k2 from h_{k2+1,k}
            for (int k = k2 + 1; k <= l + 1; ++k) H[k2][k] = down * H[k2 + 1][k];
        }
    }
    for (int a = 1; a <= l + 1; ++a)
        for (int b = 1; b < a; ++b) H[a][b] = H[b][a].transpose();
    return H;
}

Tensor<double> cross_tressian(const NupConfig& cfg, const ParamSet<double>& params, const BatchTrace<double>& tr,
                              const std::vector<int>& labels, Index i, int k1, int k2, int k3) {
    CrossDerivatives cd;
    cd.cfg = cfg;
    cd.w = widths(cfg);
    cd.samples.assign(static_cast<std::size_t>(i + 1), SampleCross{});
    cd.samples[static_cast<std::size_t>(i)] = sample_cross(cfg, cd.w, params, tr, labels, i);
    return cd.z(i, k1, k2, k3);
}

Vec row_major_vec(const Mat& m) {
    const Mat t = m.transpose();
    return Eigen::Map<const Vec>(t.data(), t.size());
}

double LayerHessian::contract(int k1, int k2, const Mat& v1, const Mat& v2) const {
    return row_major_vec(v1).dot(block(k1, k2) * row_major_vec(v2));
}

int hessian_block_terms(int k1, int k2) { return k1 == k2 ? 1 : 2; }

LayerHessian assemble_layer_hessian(const BatchTrace<double>& tr, const CrossDerivatives& cross) {
    const int L = cross.l() + 1;
    const auto& w = cross.w;
    const double inv_n = 1.0 / static_cast<double>(cross.n());
    LayerHessian H;
    H.blocks.assign(static_cast<std::size_t>(L), std::vector<Mat>(static_cast<std::size_t>(L)));
    for (int k1 = 1; k1 <= L; ++k1)
        for (int k2 = 1; k2 <= L; ++k2) {
            const Index p1 = w[k1], q1 = w[k1 - 1], p2 = w[k2], q2 = w[k2 - 1];
            Mat blk = Mat::Zero(p1 * q1, p2 * q2);
            const int terms = hessian_block_terms(k1, k2);
            for (Index i = 0; i < cross.n(); ++i) {
                const Vec fa = tr.f[k1 - 1].col(i), fb = tr.f[k2 - 1].col(i);
                const Mat h = cross.h(i, k1, k2);
                // h-term: h[p,r] f_{k1−1}[q] f_{k2−1}[s]
                for (Index p = 0; p < p1; ++p)
                    for (Index r = 0; r < p2; ++r)
                        blk.block(p * q1, r * q2, q1, q2).noalias() += h(p, r) * fa * fb.transpose();
                if (terms == 2 && k1 < k2) {
                    // j_{k1,k2−1}[p,s] f_{k1−1}[q] b_{k2}[r]
                    const Mat j = cross.j(i, k1, k2 - 1);
                    const Vec bb = tr.b[k2].col(i);
                    for (Index p = 0; p < p1; ++p)
                        for (Index r = 0; r < p2; ++r)
                            blk.block(p * q1, r * q2, q1, q2).noalias() += bb(r) * fa * j.row(p);
                } else if (terms == 2) {
                    // k1 > k2: j_{k2,k1−1}[r,q] b_{k1}[p] f_{k2−1}[s]
                    const Mat j = cross.j(i, k2, k1 - 1);
                    const Vec ba = tr.b[k1].col(i);
                    for (Index p = 0; p < p1; ++p)
                        for (Index r = 0; r < p2; ++r)
                            blk.block(p * q1, r * q2, q1, q2).noalias() += ba(p) * j.row(r).transpose() * fb.transpose();
                }
            }
            H.blocks[k1 - 1][k2 - 1] = blk * inv_n;
        }
    return H;
}

unsigned tressian_block_terms(int k1, int k2, int k3) {
    unsigned t = kTermZ;
    if (k3 > k2) t |= kTermH13J23;
    if (k3 > k1) t |= kTermH23J13;
    if (k2 > k1) t |= kTermH23J12;
    if (k2 > k1 && k3 > k2) t |= kTermJ12J23;
    return t;
}

double tressian_contract(const BatchTrace<double>& tr, const CrossDerivatives& cross, int k1, int k2, int k3,
                         const Mat& v1, const Mat& v2, const Mat& v3, unsigned terms) {
    // Sort the layers, carrying their matrices along.
    std::array<std::pair<int, const Mat*>, 3> slot{{{k1, &v1}, {k2, &v2}, {k3, &v3}}};
    std::sort(slot.begin(), slot.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    const int a = slot[0].first, b = slot[1].first, c = slot[2].first;
    const Mat &va = *slot[0].second, &vb = *slot[1].second, &vc = *slot[2].second;
    const unsigned active = tressian_block_terms(a, b, c) & terms;

    double total = 0;
    for (Index i = 0; i < cross.n(); ++i) {
        const auto& s = cross.samples[static_cast<std::size_t>(i)];
        const Vec xa = va * tr.f[a - 1].col(i);  // (v f) per slot
        const Vec xb = vb * tr.f[b - 1].col(i);
        const Vec xc = vc * tr.f[c - 1].col(i);
        const Vec ya = s.G[a] * xa, yb = s.G[b] * xb, yc = s.G[c] * xc;  // output space
        double acc = 0;
        if (active & kTermZ) acc += contract3(s.loss_tress, ya, yb, yc);
        if (active & kTermH13J23) {
            const Vec pb = s.P[b][c - 1] * xb;
            acc += ya.dot(s.loss_hess * (s.G[c] * (vc * pb)));
        }
        if (active & kTermH23J13) {
            const Vec pa = s.P[a][c - 1] * xa;
            acc += yb.dot(s.loss_hess * (s.G[c] * (vc * pa)));
        }
        if (active & (kTermH23J12 | kTermJ12J23)) {
            const Vec qa = vb * (s.P[a][b - 1] * xa);  // m_b
            if (active & kTermH23J12) acc += (s.G[b] * qa).dot(s.loss_hess * yc);
            if (active & kTermJ12J23) acc += (s.P[b][c - 1] * qa).dot(vc.transpose() * tr.b[c].col(i));
        }
        total += acc;
    }
    return total / static_cast<double>(cross.n());
}

}  // namespace nup
