// Gram-matrix scalars shared by training diagnostics and the Taylor tensors.
//
// Gram matrices are stored unnormalized: entry (i1, i2) is the raw inner
// product of the per-sample tensors. The 1/n of a minibatch average is applied
// only where a trace or norm is turned into an average (trace_n below).
#pragma once

#include <cmath>
#include <stdexcept>

#include "nup/tensor.hpp"

namespace nup {

struct DegenerateGram : std::domain_error {
    using std::domain_error::domain_error;
};

// Gram matrix of the columns of x: xᵀx.
template <typename Derived>
Mat gram(const Eigen::MatrixBase<Derived>& x) {
    const Mat xd = x.template cast<double>();
    return xd.transpose() * xd;
}

// tr(X / n) for an n×n Gram matrix.
template <typename Derived>
double trace_n(const Eigen::MatrixBase<Derived>& x) {
    return static_cast<double>(x.trace()) / static_cast<double>(x.rows());
}

// R(X) = tr(X)² / tr(XX). The ratio is scale invariant, so it is evaluated on
// X / max|X_ij| to stay clear of underflow for nearly vanishing Gram matrices.
template <typename Derived>
double soft_rank(const Eigen::MatrixBase<Derived>& x) {
    if (x.rows() != x.cols()) throw ShapeError("soft_rank: Gram matrix must be square");
    const double scale = x.size() == 0 ? 0.0 : static_cast<double>(x.cwiseAbs().maxCoeff());
    if (!(scale > 0.0)) throw DegenerateGram("soft_rank: tr(XX) is zero");
    const Mat y = x.template cast<double>() / scale;
    const double tt = (y * y).trace();
    if (!(tt > 0.0)) throw DegenerateGram("soft_rank: tr(XX) is zero");
    const double t = y.trace();
    return t * t / tt;
}

}  // namespace nup
