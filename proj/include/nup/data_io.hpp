// Datasets: MNIST IDX files, synthetic Gaussian classes, minibatch sampling.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nup/loss.hpp"

namespace nup {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// How raw inputs were turned into features. For IDX images the transform is
// x = byte / divisor; synthetic data records kind = "synthetic_gaussian".
struct Normalization {
    std::string kind = "none";
    double divisor = 1.0;

    double apply(std::uint8_t byte) const { return static_cast<double>(byte) / divisor; }
};

struct Dataset {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> inputs;  // N × m_0
    std::vector<int> labels;
    int classes = 0;
    Normalization normalization;
    std::string source;

    Index size() const { return inputs.rows(); }
    Index dim() const { return inputs.cols(); }
};

// Images: magic 2051, dims (N, rows, cols); labels: magic 2049, dim N. Pixels
// are flattened row-major and scaled by 1/255.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// Writes images as IDX bytes round(255·x) with shape (N, rows, cols), and the
// labels file. rows·cols must equal the input dimension.
void write_mnist_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path,
                     std::uint32_t rows, std::uint32_t cols);

// Class c has mean μ_c = radius · g_c/‖g_c‖ with g_c a standard Gaussian
// direction drawn from rng (nearly orthogonal in high dimension); samples add
// isotropic N(0, spread²) noise per coordinate. Samples are class-interleaved.
Dataset synth_gaussian(int classes, Index per_class, Index dim, double spread, SeededRng& rng,
                       double radius = 1.0);

// First `count` rows (all rows if count exceeds the size).
Dataset subset(const Dataset& ds, Index count);

struct Minibatch {
    std::vector<Index> indices;
    Batch<double> batch;
};

// n indices uniformly with replacement.
std::vector<Index> sample_indices(Index dataset_size, Index n, SeededRng& rng);

template <typename Scalar>
Batch<Scalar> gather(const Dataset& ds, const std::vector<Index>& idx) {
    Batch<Scalar> b;
    b.x.resize(ds.dim(), static_cast<Index>(idx.size()));
    b.labels.resize(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
        b.x.col(static_cast<Index>(j)) = ds.inputs.row(idx[j]).transpose().template cast<Scalar>();
        b.labels[j] = ds.labels[static_cast<std::size_t>(idx[j])];
    }
    return b;
}

Minibatch sample_minibatch(const Dataset& ds, Index n, SeededRng& rng);

}  // namespace nup
