// Output-space losses and their derivatives up to third order.
//
// The classification loss is ℓ(z, y) = log Σ_j exp(z_j) − z_y. The squared
// error ½‖z − t‖² uses t = onehot(y) for integer labels; an explicit target
// vector overload is provided as well.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nup/model.hpp"

namespace nup {

struct LabelError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

template <typename Scalar>
struct Batch {
    Matrix<Scalar> x;          // m_0 × n
    std::vector<int> labels;   // n class indices
    Index n() const { return x.cols(); }
};

namespace detail {
inline void check_label(Index dim, int y) {
    if (y < 0 || y >= dim)
        throw LabelError("label " + std::to_string(y) + " outside [0, " + std::to_string(dim) + ")");
}
}  // namespace detail

// Max-shifted softmax.
template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& z) {
    using S = typename Derived::Scalar;
    const S mx = z.maxCoeff();
    Vector<S> e = (z.array() - mx).exp().matrix();
    return e / e.sum();
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& z) {
    using S = typename Derived::Scalar;
    const S mx = z.maxCoeff();
    return mx + std::log((z.array() - mx).exp().sum());
}

template <typename Derived>
typename Derived::Scalar loss_value(LossKind kind, const Eigen::MatrixBase<Derived>& z, int y) {
    using S = typename Derived::Scalar;
    detail::check_label(z.size(), y);
    if (kind == LossKind::classification) return log_sum_exp(z) - z(y);
    S acc = 0;
    for (Index j = 0; j < z.size(); ++j) {
        const S d = z(j) - (j == y ? S(1) : S(0));
        acc += d * d;
    }
    return S(0.5) * acc;
}

template <typename D1, typename D2>
typename D1::Scalar squared_error_value(const Eigen::MatrixBase<D1>& z, const Eigen::MatrixBase<D2>& target) {
    if (z.size() != target.size()) throw ShapeError("squared_error_value: size mismatch");
    return typename D1::Scalar(0.5) * (z - target).squaredNorm();
}

template <typename D1, typename D2>
Vector<typename D1::Scalar> squared_error_grad(const Eigen::MatrixBase<D1>& z, const Eigen::MatrixBase<D2>& target) {
    if (z.size() != target.size()) throw ShapeError("squared_error_grad: size mismatch");
    return z - target;
}

template <typename Derived>
Vector<typename Derived::Scalar> loss_grad(LossKind kind, const Eigen::MatrixBase<Derived>& z, int y) {
    using S = typename Derived::Scalar;
    detail::check_label(z.size(), y);
    Vector<S> g = kind == LossKind::classification ? softmax(z) : Vector<S>(z);
    g(y) -= S(1);
    return g;
}

// diag(p) − p pᵀ for the classification loss, the identity for squared error.
template <typename Derived>
Matrix<typename Derived::Scalar> loss_hess(LossKind kind, const Eigen::MatrixBase<Derived>& z, int y) {
    using S = typename Derived::Scalar;
    detail::check_label(z.size(), y);
    if (kind == LossKind::squared_error) return Matrix<S>::Identity(z.size(), z.size());
    const Vector<S> p = softmax(z);
    Matrix<S> h = -p * p.transpose();
    h.diagonal() += p;
    return h;
}

// Third derivative of log-sum-exp:
//   T_abc = δ_abc p_a − δ_ab p_a p_c − δ_ac p_a p_b − δ_bc p_a p_b + 2 p_a p_b p_c.
// Zero for squared error.
template <typename Derived>
Tensor<typename Derived::Scalar> loss_tress(LossKind kind, const Eigen::MatrixBase<Derived>& z, int y) {
    using S = typename Derived::Scalar;
    detail::check_label(z.size(), y);
    const Index d = z.size();
    Tensor<S> t({d, d, d});
    if (kind == LossKind::squared_error) return t;
    const Vector<S> p = softmax(z);
    for (Index a = 0; a < d; ++a)
        for (Index b = 0; b < d; ++b)
            for (Index c = 0; c < d; ++c) {
                S v = S(2) * p(a) * p(b) * p(c);
                if (a == b) v -= p(a) * p(c);
                if (a == c) v -= p(a) * p(b);
                if (b == c) v -= p(a) * p(b);
                if (a == b && b == c) v += p(a);
                t(a, b, c) = v;
            }
    return t;
}

// Fills trace.losses and returns the (m_out × n) matrix of ∇ℓ columns.
template <typename Scalar>
Matrix<Scalar> evaluate_loss(LossKind kind, BatchTrace<Scalar>& trace, const std::vector<int>& labels) {
    const Index n = trace.n();
    if (static_cast<Index>(labels.size()) != n) throw ShapeError("evaluate_loss: label count differs from batch size");
    trace.losses.resize(n);
    Matrix<Scalar> g(trace.out.rows(), n);
    for (Index i = 0; i < n; ++i) {
        trace.losses(i) = loss_value(kind, trace.out.col(i), labels[static_cast<std::size_t>(i)]);
        g.col(i) = loss_grad(kind, trace.out.col(i), labels[static_cast<std::size_t>(i)]);
    }
    return g;
}

// 𝓛(θ) = (1/n) Σ_i ℓ(N_{x_i,θ}, y_i).
template <typename Scalar>
Scalar minibatch_loss(const NupConfig& cfg, const ParamSet<Scalar>& params, const Batch<Scalar>& batch) {
    if (batch.n() == 0) throw ConfigError("minibatch_loss: empty batch");
    auto tr = forward(cfg, params, batch.x);
    evaluate_loss(cfg.loss, tr, batch.labels);
    return tr.losses.mean();
}

// Forward, loss and backward in one call.
template <typename Scalar>
BatchTrace<Scalar> full_trace(const NupConfig& cfg, const ParamSet<Scalar>& params, const Batch<Scalar>& batch) {
    auto tr = forward(cfg, params, batch.x);
    const Matrix<Scalar> g = evaluate_loss(cfg.loss, tr, batch.labels);
    backward(cfg, params, tr, g);
    return tr;
}

}  // namespace nup
