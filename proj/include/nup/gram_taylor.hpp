// Gram matrices, the τ / T¹ / T² / T³ Taylor tensors in factored form, the
// direct contractions they factor, and the sharpness diagnostics.
//
// Along the scaled gradient u = Ξ∇ the minibatch loss expands as
//   𝓛(θ − ηu) = 𝓛(θ) − η⟨u,∇⟩ + ½η²⟨u⊗u,∂∇⟩ − ⅙η³⟨u⊗u⊗u,∂∂∇⟩ + O(η⁴),
// and each coefficient equals ⟨(D_ξ τ)^{⊗k}, T^{(k)}⟩. The factored entries
// are assembled from separately evaluated trace, soft-rank and cosine factors.
#pragma once

#include <map>
#include <tuple>
#include <vector>

#include "nup/gram.hpp"
#include "nup/highdiff.hpp"
#include "nup/train.hpp"

namespace nup {

struct GramSet {
    int l = 0;
    Index n = 0;
    std::vector<Mat> F;  // F[k], k ∈ [0:l]
    std::vector<Mat> B;  // B[k], k ∈ [1:l+1]
    std::map<std::pair<int, int>, Mat> H;  // H_{a,b}, a ≤ b ∈ [1:l+1]
    std::map<std::pair<int, int>, Mat> J;  // J_{a,b}, a ≤ b ∈ [1:l]

    const Mat& Hg(int a, int b) const { return H.at({std::min(a, b), std::max(a, b)}); }
    const Mat& Jg(int a, int b) const { return J.at({a, b}); }
};

// F and B from the trace; H and J only when cross derivatives are given.
GramSet gram_set(const BatchTrace<double>& tr, const CrossDerivatives* cross = nullptr);

// Z_{a,b,c} Gram matrix, evaluated through the output space.
Mat z_gram(const CrossDerivatives& cross, int a, int b, int c);

// Gram of the per-sample h_{a,b,i} / j_{a,b,i} / z_{a,b,c,i} by materializing
// each tensor (reference path for small widths).
Mat h_gram_materialized(const CrossDerivatives& cross, int a, int b);
Mat j_gram_materialized(const CrossDerivatives& cross, int a, int b);
Mat z_gram_materialized(const CrossDerivatives& cross, int a, int b, int c);

// τ_k = tr(F_{k−1}/n)^{1/2} tr(B_k/n)^{1/2} / (R(F_{k−1})^{1/4} R(B_k)^{1/4}).
Vec tau_vector(const GramSet& gs);

// T¹_k = τ_k cos(F_{k−1}, B_k).
Vec t1_vector(const GramSet& gs);

// ⟨D_ξ τ, T¹⟩.
double first_order_term(const Vec& xi, const Vec& tau, const Vec& t1);

// Σ_k ξ_k ‖∇_k‖².
double first_order_direct(const LayerMats<double>& grads, const Vec& xi);

Mat t2_matrix(const GramSet& gs, const BatchTrace<double>& tr, const CrossDerivatives& cross);
double second_order_factored(const Vec& xi, const Vec& tau, const Mat& t2);
// Σ_{k1,k2} ξ_{k1} ξ_{k2} ⟨∇_{k1} ⊗ ∇_{k2}, ∂∇_{k1,k2}⟩.
double second_order_direct(const LayerMats<double>& grads, const Vec& xi, const LayerHessian& hess);

// T³ stored flat with index (k1−1)(L²) + (k2−1)L + (k3−1), L = l + 1.
struct T3Tensor {
    int L = 0;
    std::vector<double> data;
    double& operator()(int k1, int k2, int k3) { return data[static_cast<std::size_t>(((k1 - 1) * L + k2 - 1) * L + k3 - 1)]; }
    double operator()(int k1, int k2, int k3) const {
        return data[static_cast<std::size_t>(((k1 - 1) * L + k2 - 1) * L + k3 - 1)];
    }
};

T3Tensor t3_tensor(const GramSet& gs, const BatchTrace<double>& tr, const CrossDerivatives& cross);
double third_order_factored(const Vec& xi, const Vec& tau, const T3Tensor& t3);
// Σ over ordered layer triples of ξξξ ⟨∇⊗∇⊗∇, ∂∂∇⟩.
double third_order_direct(const LayerMats<double>& grads, const Vec& xi, const BatchTrace<double>& tr,
                          const CrossDerivatives& cross);

// S = second / first.
double effective_sharpness(double first, double second);
// ½ η S.
inline double stability_ratio(double eta, double sharpness) { return 0.5 * eta * sharpness; }
// 𝓛̇ = −η first + ½η² second − ⅙η³ third.
inline double taylor_delta(double eta, double first, double second, double third) {
    return -eta * first + 0.5 * eta * eta * second - eta * eta * eta * third / 6.0;
}

// S_t from a central difference of the minibatch gradient along u.
struct SharpnessEstimate {
    double first = 0;
    double second = 0;
    double sharpness = 0;
};
SharpnessEstimate training_sharpness_fd(const NupConfig& cfg, const ParamSet<double>& params,
                                        const Batch<double>& batch, const LayerMats<double>& u,
                                        double rel_step = 1e-4);

}  // namespace nup
