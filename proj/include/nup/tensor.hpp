// Dense row-major tensors and the norm / cosine primitives used throughout.
//
// Vectors and matrices are plain Eigen objects. Tensor<Scalar> covers the
// higher-order objects (loss third derivatives, materialized cross-layer
// third derivatives, inner-product tensors) and the general contraction.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nup/rng.hpp"

namespace nup {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Mat = Matrix<double>;
using Vec = Vector<double>;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<Index>;

inline std::string shape_string(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

template <typename Scalar>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
        for (Index d : shape_)
            if (d <= 0) throw ConfigError("tensor shape " + shape_string(shape_) + " has a non-positive extent");
        data_.assign(static_cast<std::size_t>(count(shape_)), fill);
    }

    static Index count(const Shape& s) {
        return std::accumulate(s.begin(), s.end(), Index{1}, std::multiplies<Index>());
    }

    static Tensor from_matrix(const Matrix<Scalar>& m) {
        Tensor t({m.rows(), m.cols()});
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j) t(i, j) = m(i, j);
        return t;
    }

    const Shape& shape() const { return shape_; }
    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index size() const { return static_cast<Index>(data_.size()); }
    Index dim(Index axis) const { return shape_[static_cast<std::size_t>(axis)]; }

    std::vector<Scalar>& data() { return data_; }
    const std::vector<Scalar>& data() const { return data_; }

    Eigen::Map<Vector<Scalar>> flat() { return {data_.data(), size()}; }
    Eigen::Map<const Vector<Scalar>> flat() const { return {data_.data(), size()}; }

    // Row-major offset of a multi-index.
    Index offset(const Index* idx) const {
        Index off = 0;
        for (std::size_t a = 0; a < shape_.size(); ++a) off = off * shape_[a] + idx[a];
        return off;
    }

    template <typename... I>
    Scalar& operator()(I... i) {
        const Index idx[] = {static_cast<Index>(i)...};
        return data_[static_cast<std::size_t>(offset(idx))];
    }
    template <typename... I>
    const Scalar& operator()(I... i) const {
        const Index idx[] = {static_cast<Index>(i)...};
        return data_[static_cast<std::size_t>(offset(idx))];
    }

    Matrix<Scalar> to_matrix() const {
        if (rank() != 2) throw ShapeError("to_matrix needs a rank-2 tensor, got " + shape_string(shape_));
        Matrix<Scalar> m(shape_[0], shape_[1]);
        for (Index i = 0; i < shape_[0]; ++i)
            for (Index j = 0; j < shape_[1]; ++j) m(i, j) = (*this)(i, j);
        return m;
    }

private:
    Shape shape_;
    std::vector<Scalar> data_;
};

// ---------------------------------------------------------------------------
// Sampling

template <typename Scalar = double>
Tensor<Scalar> gaussian(SeededRng& rng, const Shape& shape, double mean, double stddev) {
    if (stddev < 0) throw ConfigError("gaussian: negative standard deviation");
    Tensor<Scalar> t(shape);
    for (auto& x : t.data()) x = static_cast<Scalar>(rng.normal(mean, stddev));
    return t;
}

// Row-major fill order, so a matrix draw equals the rank-2 tensor draw.
template <typename Scalar = double>
Matrix<Scalar> gaussian_matrix(SeededRng& rng, Index rows, Index cols, double mean, double stddev) {
    if (rows <= 0 || cols <= 0) throw ConfigError("gaussian_matrix: non-positive extent");
    if (stddev < 0) throw ConfigError("gaussian_matrix: negative standard deviation");
    Matrix<Scalar> m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<Scalar>(rng.normal(mean, stddev));
    return m;
}

// ---------------------------------------------------------------------------
// Products and norms

template <typename A, typename B>
auto matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.rows()) + " differ");
    using S = typename A::Scalar;
    Matrix<S> out = a * b;
    return out;
}

template <typename Derived>
double frobenius_norm(const Eigen::MatrixBase<Derived>& x) {
    return static_cast<double>(x.norm());
}
template <typename Scalar>
double frobenius_norm(const Tensor<Scalar>& x) {
    return static_cast<double>(x.flat().norm());
}

template <typename Derived>
double norm3(const Eigen::MatrixBase<Derived>& x) {
    return std::cbrt(static_cast<double>(x.array().abs().cube().sum()));
}
template <typename Scalar>
double norm3(const Tensor<Scalar>& x) {
    return std::cbrt(static_cast<double>(x.flat().array().abs().cube().sum()));
}

template <typename D1, typename D2>
double inner(const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) throw ShapeError("inner: shape mismatch");
    return static_cast<double>(x.cwiseProduct(y).sum());
}

// Cosine of two same-shaped arrays; 0 when either has zero norm.
template <typename D1, typename D2>
double cosine_pair(const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) throw ShapeError("cosine_pair: shape mismatch");
    const double nx = frobenius_norm(x), ny = frobenius_norm(y);
    if (nx == 0.0 || ny == 0.0) return 0.0;
    return inner(x, y) / nx / ny;
}
template <typename Scalar>
double cosine_pair(const Tensor<Scalar>& x, const Tensor<Scalar>& y) {
    if (x.shape() != y.shape()) throw ShapeError("cosine_pair: shape mismatch");
    return cosine_pair(x.flat(), y.flat());
}

// Cosine of three n×n matrices: Σ_ij X1_ij X2_ij X3_ij / (‖X1‖₃‖X2‖₃‖X3‖₃).
// For Gram matrices the numerator is the entry sum of the Schur product
// X1∘X2∘X3, which is PSD, so the value lies in [0, 1]. 0 if any norm is 0.
template <typename D1, typename D2, typename D3>
double cosine_triplet(const Eigen::MatrixBase<D1>& x1, const Eigen::MatrixBase<D2>& x2,
                      const Eigen::MatrixBase<D3>& x3) {
    const auto square = [](const auto& m) { return m.rows() == m.cols(); };
    if (!square(x1) || !square(x2) || !square(x3) || x1.rows() != x2.rows() || x1.rows() != x3.rows())
        throw ShapeError("cosine_triplet: arguments must be n×n with a common n");
    const double n1 = norm3(x1), n2 = norm3(x2), n3 = norm3(x3);
    if (n1 == 0.0 || n2 == 0.0 || n3 == 0.0) return 0.0;
    const double s = static_cast<double>(x1.cwiseProduct(x2).cwiseProduct(x3).sum());
    return s / n1 / n2 / n3;
}

template <typename Derived>
auto hadamard_power(const Eigen::MatrixBase<Derived>& x, int p) {
    if (p < 1) throw ConfigError("hadamard_power: exponent must be >= 1");
    using S = typename Derived::Scalar;
    Matrix<S> out = x;
    for (int i = 1; i < p; ++i) out = out.cwiseProduct(x);
    return out;
}

// ---------------------------------------------------------------------------
// General contraction

using AxisPairs = std::vector<std::pair<Index, Index>>;

// Contract x and y over the paired axes (axis of x, axis of y). The result
// carries the free axes of x in order, followed by the free axes of y. A full
// pairing yields a rank-1 tensor of extent 1 holding the scalar.
template <typename Scalar>
Tensor<Scalar> contract(const Tensor<Scalar>& x, const Tensor<Scalar>& y, const AxisPairs& pairs) {
    std::vector<bool> xpaired(x.shape().size(), false), ypaired(y.shape().size(), false);
    for (auto [ax, ay] : pairs) {
        if (ax < 0 || ax >= x.rank() || ay < 0 || ay >= y.rank())
            throw ShapeError("contract: axis out of range");
        if (xpaired[ax] || ypaired[ay]) throw ShapeError("contract: axis paired twice");
        if (x.dim(ax) != y.dim(ay))
            throw ShapeError("contract: paired extents " + std::to_string(x.dim(ax)) + " and " +
                             std::to_string(y.dim(ay)) + " differ");
        xpaired[ax] = ypaired[ay] = true;
    }
    std::vector<Index> xfree, yfree;
    Shape out_shape;
    for (Index a = 0; a < x.rank(); ++a)
        if (!xpaired[a]) xfree.push_back(a), out_shape.push_back(x.dim(a));
    for (Index a = 0; a < y.rank(); ++a)
        if (!ypaired[a]) yfree.push_back(a), out_shape.push_back(y.dim(a));
    Shape sum_shape;
    for (auto [ax, ay] : pairs) sum_shape.push_back(x.dim(ax));
    if (out_shape.empty()) out_shape.push_back(1);

    Tensor<Scalar> out(out_shape);
    const Index n_out = out.size();
    const Index n_sum = Tensor<Scalar>::count(sum_shape);
    std::vector<Index> xi(x.shape().size()), yi(y.shape().size());
    std::vector<Index> oi(out_shape.size()), si(sum_shape.size());

    auto unravel = [](Index flat, const Shape& shape, std::vector<Index>& idx) {
        for (Index a = static_cast<Index>(shape.size()) - 1; a >= 0; --a) {
            idx[a] = flat % shape[a];
            flat /= shape[a];
        }
    };

    for (Index o = 0; o < n_out; ++o) {
        if (!xfree.empty() || !yfree.empty()) unravel(o, out_shape, oi);
        std::size_t k = 0;
        for (Index a : xfree) xi[a] = oi[k++];
        for (Index a : yfree) yi[a] = oi[k++];
        Scalar acc = 0;
        for (Index s = 0; s < n_sum; ++s) {
            unravel(s, sum_shape, si);
            for (std::size_t p = 0; p < pairs.size(); ++p) xi[pairs[p].first] = yi[pairs[p].second] = si[p];
            acc += x.data()[x.offset(xi.data())] * y.data()[y.offset(yi.data())];
        }
        out.data()[o] = acc;
    }
    return out;
}

// Contract a rank-3 tensor against three vectors: Σ T[a,b,c] u[a] v[b] w[c].
template <typename Scalar, typename D1, typename D2, typename D3>
double contract3(const Tensor<Scalar>& t, const Eigen::MatrixBase<D1>& u, const Eigen::MatrixBase<D2>& v,
                 const Eigen::MatrixBase<D3>& w) {
    if (t.rank() != 3 || t.dim(0) != u.size() || t.dim(1) != v.size() || t.dim(2) != w.size())
        throw ShapeError("contract3: shape mismatch");
    double acc = 0;
    const Index n1 = t.dim(0), n2 = t.dim(1), n3 = t.dim(2);
    const Scalar* p = t.data().data();
    for (Index a = 0; a < n1; ++a) {
        double sa = 0;
        for (Index b = 0; b < n2; ++b) {
            double sb = 0;
            for (Index c = 0; c < n3; ++c) sb += static_cast<double>(p[(a * n2 + b) * n3 + c]) * w(c);
            sa += sb * v(b);
        }
        acc += sa * u(a);
    }
    return acc;
}

}  // namespace nup
