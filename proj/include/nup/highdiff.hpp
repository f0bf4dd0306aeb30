// Cross-layer derivatives of a single sample and the layerwise Hessian and
// third-derivative blocks of the minibatch loss assembled from them.
//
// Notation, per sample: u_k = θ_k f_{k−1} is the layer product and
// c_k = m^{1/2} m_k^{−1/2} φ'(𝕗_k), so ∂f_k/∂u_k = diag(c_k). Then
//   G_k = ∂N/∂u_k        G_{l+1} = I,  G_k = G_{k+1} θ_{k+1} diag(c_k)
//   P_{a,b} = ∂f_b/∂u_a  P_{a,a} = diag(c_a),  P_{a,b} = diag(c_b) θ_b P_{a,b−1}
//   j_{a,b} = P_{a,b}ᵀ  (defined for a ≤ b ≤ l, taken as 0 for b < a)
//   h_{a,b} = G_aᵀ ∂∇ℓ G_b
//   z_{a,b,c}[p,q,r] = Σ ∂∂∇ℓ[x,y,w] G_a[x,p] G_b[y,q] G_c[w,r]
// The activation is piecewise linear, so φ'' vanishes away from kinks and the
// recursions above are exact there.
#pragma once

#include <vector>

#include "nup/loss.hpp"

namespace nup {

struct SampleCross {
    std::vector<Vec> c;                // c[k], k ∈ [1:l]
    std::vector<Mat> G;                // G[k], k ∈ [1:l+1], m_out × m_k
    std::vector<std::vector<Mat>> P;   // P[a][b], 1 ≤ a ≤ b ≤ l, m_b × m_a
    Mat loss_hess;                     // ∂∇ℓ at N_i
    Tensor<double> loss_tress;         // ∂∂∇ℓ at N_i
};

struct CrossDerivatives {
    NupConfig cfg;
    std::vector<Index> w;  // widths (m_0, …, m_out)
    std::vector<SampleCross> samples;

    int l() const { return cfg.l; }
    Index n() const { return static_cast<Index>(samples.size()); }

    // j_{a,b} for sample i, m_a × m_b; zero when b < a.
    Mat j(Index i, int a, int b) const;
    // h_{a,b} for sample i, m_a × m_b, a, b ∈ [1:l+1].
    Mat h(Index i, int a, int b) const;
    // Materialized z_{a,b,c} for sample i (m_a × m_b × m_c).
    Tensor<double> z(Index i, int a, int b, int c) const;
};

// Per-sample Jacobians, loss Hessians and loss third derivatives for a batch.
CrossDerivatives cross_derivatives(const NupConfig& cfg, const ParamSet<double>& params, const BatchTrace<double>& tr,
                                   const std::vector<int>& labels);

// All j_{k1,k2,i} with k1 ≤ k2 ≤ l, returned as J[k1][k2] (1-based).
std::vector<std::vector<Mat>> cross_jacobians(const NupConfig& cfg, const ParamSet<double>& params,
                                              const BatchTrace<double>& tr, Index i);

// All h_{k1,k2,i}, k1, k2 ∈ [1:l+1], returned as H[k1][k2] (1-based), built by
// seeding h_{l+1,l+1} = ∂∇ℓ and propagating with diag(c_k) θ_{k+1}ᵀ.
std::vector<std::vector<Mat>> cross_hessians(const NupConfig& cfg, const ParamSet<double>& params,
                                             const BatchTrace<double>& tr, const std::vector<int>& labels, Index i);

// z_{k1,k2,k3,i} by contracting ∂∂∇ℓ with the three output Jacobians.
Tensor<double> cross_tressian(const NupConfig& cfg, const ParamSet<double>& params, const BatchTrace<double>& tr,
                              const std::vector<int>& labels, Index i, int k1, int k2, int k3);

// Row-major flattening of a layer matrix: index p·cols + q.
Vec row_major_vec(const Mat& m);

// Parameter-space Hessian blocks ∂∇_{k1,k2} as (m_{k1}m_{k1−1}) × (m_{k2}m_{k2−1})
// matrices over row-major flattened layers.
struct LayerHessian {
    std::vector<std::vector<Mat>> blocks;  // blocks[k1-1][k2-1]

    const Mat& block(int k1, int k2) const { return blocks[k1 - 1][k2 - 1]; }
    // ⟨v_{k1} ⊗ v_{k2}, ∂∇_{k1,k2}⟩.
    double contract(int k1, int k2, const Mat& v1, const Mat& v2) const;
};

// Number of terms in a Hessian block: the h-term, plus the j-term off the
// diagonal.
int hessian_block_terms(int k1, int k2);

LayerHessian assemble_layer_hessian(const BatchTrace<double>& tr, const CrossDerivatives& cross);

// Terms of a third-derivative block with sorted layers k1 ≤ k2 ≤ k3.
enum TressianTerm : unsigned {
    kTermZ = 1u,        // z_{k1,k2,k3}
    kTermH13J23 = 2u,   // h_{k1,k3} with j_{k2,k3−1}
    kTermH23J13 = 4u,   // h_{k2,k3} with j_{k1,k3−1}
    kTermH23J12 = 8u,   // h_{k2,k3} with j_{k1,k2−1}
    kTermJ12J23 = 16u,  // j_{k1,k2−1} with j_{k2,k3−1}
};

unsigned tressian_block_terms(int k1, int k2, int k3);

// ⟨v1 ⊗ v2 ⊗ v3, ∂∂∇_{k1,k2,k3}⟩ for any layer order, contracted per sample
// and averaged; the six-index block is never formed. `terms` masks which
// terms are included (all active terms by default).
double tressian_contract(const BatchTrace<double>& tr, const CrossDerivatives& cross, int k1, int k2, int k3,
                         const Mat& v1, const Mat& v2, const Mat& v3, unsigned terms = ~0u);

}  // namespace nup
