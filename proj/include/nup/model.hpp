// The νP multilayer perceptron: widths, edge-of-chaos initialization, and the
// forward / backward passes with cached preactivations and prederivatives.
//
// Per-sample vectors are stored as columns, so every per-layer quantity of a
// minibatch is a (width × n) matrix. Layers use 1-based indices throughout:
// params.layers[k-1] holds θ_k, and trace vectors are indexed by k directly
// (slots that do not exist for a given k are left empty).
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nup/tensor.hpp"

namespace nup {

enum class ScaleScheme { unscaled, normalized };
enum class LossKind { classification, squared_error };
enum class Dtype { f32, f64 };

struct NupConfig {
    int l = 1;          // hidden layers
    Index m = 1;        // width scale
    int r = 0;          // width exponent
    Index m0 = 784;     // input dimension
    Index m_out = 10;   // output dimension
    double a = 0.5;     // activation: φ(s) = a s + b |s|
    double b = 0.5;
    double eta = 0.1;
    Index n = 64;       // minibatch size
    std::uint64_t seed = 0;
    ScaleScheme scheme = ScaleScheme::normalized;
    Dtype dtype = Dtype::f64;
    LossKind loss = LossKind::classification;
};

std::string to_string(ScaleScheme s);
std::string to_string(LossKind k);
std::string to_string(Dtype d);
ScaleScheme scale_scheme_from_string(const std::string& s);
LossKind loss_kind_from_string(const std::string& s);
Dtype dtype_from_string(const std::string& s);

// Throws ConfigError naming the first violated constraint.
void validate(const NupConfig& cfg);

// (m_0, m_1, …, m_l, m_out) with m_k = (l − k + 1)^r · m.
std::vector<Index> widths(const NupConfig& cfg);

// Σ_{k=1}^{l+1} m_k m_{k−1}.
std::int64_t param_count(const NupConfig& cfg);

// σ² = 1 / (a² + b²).
inline double eoc_variance(double a, double b) { return 1.0 / (a * a + b * b); }

template <typename S>
inline S phi(S s, S a, S b) {
    return a * s + b * std::abs(s);
}

// sgn(0) = 0, hence φ'(0) = a.
template <typename S>
inline S phi_prime(S s, S a, S b) {
    const S sgn = s > S(0) ? S(1) : (s < S(0) ? S(-1) : S(0));
    return a + b * sgn;
}

template <typename Scalar>
struct ParamSet {
    std::vector<Matrix<Scalar>> layers;  // layers[k-1] = θ_k, shape m_k × m_{k−1}

    int depth() const { return static_cast<int>(layers.size()); }  // l + 1
    Matrix<Scalar>& theta(int k) { return layers[static_cast<std::size_t>(k - 1)]; }
    const Matrix<Scalar>& theta(int k) const { return layers[static_cast<std::size_t>(k - 1)]; }

    template <typename T>
    ParamSet<T> cast() const {
        ParamSet<T> out;
        for (const auto& w : layers) out.layers.push_back(w.template cast<T>());
        return out;
    }
};

template <typename Scalar>
struct BatchTrace {
    std::vector<Matrix<Scalar>> f;     // f[k], k ∈ [0:l], m_k × n
    std::vector<Matrix<Scalar>> pre;   // pre[k] = 𝕗_k, k ∈ [1:l]
    Matrix<Scalar> out;                // N, m_out × n
    Vector<Scalar> losses;             // ℓ_i (filled by the loss module)
    std::vector<Matrix<Scalar>> b;     // b[k], k ∈ [1:l+1]
    std::vector<Matrix<Scalar>> preb;  // preb[k] = 𝕓_k, k ∈ [1:l]

    int l() const { return static_cast<int>(f.size()) - 1; }
    Index n() const { return out.cols(); }
    bool has_backward() const { return !b.empty(); }
};

template <typename Scalar>
void check_shapes(const NupConfig& cfg, const ParamSet<Scalar>& params) {
    const auto w = widths(cfg);
    if (params.depth() != cfg.l + 1)
        throw ShapeError("parameter set has " + std::to_string(params.depth()) + " layers, expected " +
                         std::to_string(cfg.l + 1));
    for (int k = 1; k <= cfg.l + 1; ++k) {
        const auto& t = params.theta(k);
        if (t.rows() != w[k] || t.cols() != w[k - 1])
            throw ShapeError("θ_" + std::to_string(k) + " has shape " + std::to_string(t.rows()) + "×" +
                             std::to_string(t.cols()) + ", expected " + std::to_string(w[k]) + "×" +
                             std::to_string(w[k - 1]));
    }
}

// Every entry i.i.d. N(0, σ²/m), drawn layer by layer in row-major order.
template <typename Scalar = double>
ParamSet<Scalar> init_eoc(const NupConfig& cfg, SeededRng& rng) {
    validate(cfg);
    const auto w = widths(cfg);
    const double stddev = std::sqrt(eoc_variance(cfg.a, cfg.b) / static_cast<double>(cfg.m));
    ParamSet<Scalar> p;
    for (int k = 1; k <= cfg.l + 1; ++k) p.layers.push_back(gaussian_matrix<Scalar>(rng, w[k], w[k - 1], 0.0, stddev));
    return p;
}

// f_0 = x; 𝕗_k = m^{1/2} θ_k f_{k−1}; f_k = m_k^{−1/2} φ(𝕗_k); N = θ_{l+1} f_l.
template <typename Scalar>
BatchTrace<Scalar> forward(const NupConfig& cfg, const ParamSet<Scalar>& params, const Matrix<Scalar>& x) {
    if (x.rows() != cfg.m0)
        throw ShapeError("forward: input dimension " + std::to_string(x.rows()) + " differs from m0=" +
                         std::to_string(cfg.m0));
    check_shapes(cfg, params);
    const auto w = widths(cfg);
    const Scalar sqrt_m = static_cast<Scalar>(std::sqrt(static_cast<double>(cfg.m)));
    const Scalar a = static_cast<Scalar>(cfg.a), b = static_cast<Scalar>(cfg.b);
    BatchTrace<Scalar> tr;
    tr.f.resize(static_cast<std::size_t>(cfg.l + 1));
    tr.pre.resize(static_cast<std::size_t>(cfg.l + 1));
    tr.f[0] = x;
    for (int k = 1; k <= cfg.l; ++k) {
        const Scalar inv_sqrt_mk = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(w[k])));
        tr.pre[k].noalias() = params.theta(k) * tr.f[k - 1];
        tr.pre[k] *= sqrt_m;
        tr.f[k] = tr.pre[k].unaryExpr([&](Scalar s) { return inv_sqrt_mk * phi(s, a, b); });
    }
    tr.out.noalias() = params.theta(cfg.l + 1) * tr.f[cfg.l];
    return tr;
}

// b_{l+1} = ∇ℓ; 𝕓_k = m^{1/2} θ_{k+1}ᵀ b_{k+1}; b_k = m_k^{−1/2} φ'(𝕗_k) ⊙ 𝕓_k.
template <typename Scalar>
void backward(const NupConfig& cfg, const ParamSet<Scalar>& params, BatchTrace<Scalar>& tr,
              const Matrix<Scalar>& loss_grads) {
    if (tr.f.empty()) throw std::logic_error("backward: forward trace missing");
    if (loss_grads.rows() != cfg.m_out || loss_grads.cols() != tr.n())
        throw ShapeError("backward: loss gradient shape mismatch");
    const auto w = widths(cfg);
    const Scalar sqrt_m = static_cast<Scalar>(std::sqrt(static_cast<double>(cfg.m)));
    const Scalar a = static_cast<Scalar>(cfg.a), b = static_cast<Scalar>(cfg.b);
    tr.b.assign(static_cast<std::size_t>(cfg.l + 2), Matrix<Scalar>());
    tr.preb.assign(static_cast<std::size_t>(cfg.l + 1), Matrix<Scalar>());
    tr.b[cfg.l + 1] = loss_grads;
    for (int k = cfg.l; k >= 1; --k) {
        const Scalar inv_sqrt_mk = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(w[k])));
        tr.preb[k].noalias() = params.theta(k + 1).transpose() * tr.b[k + 1];
        tr.preb[k] *= sqrt_m;
        tr.b[k] = tr.pre[k].unaryExpr([&](Scalar s) { return inv_sqrt_mk * phi_prime(s, a, b); })
                      .cwiseProduct(tr.preb[k]);
    }
}

}  // namespace nup
