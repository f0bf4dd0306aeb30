#include "nup/data_io.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

namespace nup {

namespace {

constexpr std::uint32_t kImageMagic = 2051;  // 0x00000803
constexpr std::uint32_t kLabelMagic = 2049;  // 0x00000801

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t off, const std::string& path) {
    if (off + 4 > buf.size()) throw FormatError("'" + path + "' is truncated inside its header");
    return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
           (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                           static_cast<char>(v)};
    out.write(bytes, 4);
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_file(images_path);
    const auto lbl = read_file(labels_path);

    const std::uint32_t img_magic = read_be32(img, 0, images_path);
    if (img_magic != kImageMagic)
        throw FormatError("'" + images_path + "': image magic is " + std::to_string(img_magic) + ", expected 2051");
    const std::uint32_t lbl_magic = read_be32(lbl, 0, labels_path);
    if (lbl_magic != kLabelMagic)
        throw FormatError("'" + labels_path + "': label magic is " + std::to_string(lbl_magic) + ", expected 2049");

    const std::uint64_t count = read_be32(img, 4, images_path);
    const std::uint64_t rows = read_be32(img, 8, images_path);
    const std::uint64_t cols = read_be32(img, 12, images_path);
    const std::uint64_t label_count = read_be32(lbl, 4, labels_path);
    if (count != label_count)
        throw FormatError("image count " + std::to_string(count) + " differs from label count " +
                          std::to_string(label_count));
    const std::uint64_t pixels = rows * cols;
    if (img.size() < 16 + count * pixels) throw FormatError("'" + images_path + "' is truncated");
    if (lbl.size() < 8 + count) throw FormatError("'" + labels_path + "' is truncated");

    Dataset ds;
    ds.normalization = {"scale", 255.0};
    ds.source = "idx:" + images_path;
    ds.inputs.resize(static_cast<Index>(count), static_cast<Index>(pixels));
    ds.labels.resize(count);
    int max_label = -1;
    for (std::uint64_t i = 0; i < count; ++i) {
        for (std::uint64_t p = 0; p < pixels; ++p)
            ds.inputs(static_cast<Index>(i), static_cast<Index>(p)) = ds.normalization.apply(img[16 + i * pixels + p]);
        ds.labels[i] = lbl[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.classes = std::max(max_label + 1, 10);
    return ds;
}

void write_mnist_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path,
                     std::uint32_t rows, std::uint32_t cols) {
    if (static_cast<Index>(rows) * cols != ds.dim())
        throw FormatError("write_mnist_idx: rows·cols differs from the input dimension");
    std::ofstream img(images_path, std::ios::binary), lbl(labels_path, std::ios::binary);
    if (!img || !lbl) throw FormatError("write_mnist_idx: cannot open output files");
    write_be32(img, kImageMagic);
    write_be32(img, static_cast<std::uint32_t>(ds.size()));
    write_be32(img, rows);
    write_be32(img, cols);
    for (Index i = 0; i < ds.size(); ++i)
        for (Index p = 0; p < ds.dim(); ++p) {
            const double v = std::round(ds.inputs(i, p) * 255.0);
            img.put(static_cast<char>(static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0))));
        }
    write_be32(lbl, kLabelMagic);
    write_be32(lbl, static_cast<std::uint32_t>(ds.size()));
    for (int y : ds.labels) lbl.put(static_cast<char>(static_cast<std::uint8_t>(y)));
}

Dataset synth_gaussian(int classes, Index per_class, Index dim, double spread, SeededRng& rng, double radius) {
    if (classes < 2) throw ConfigError("synth_gaussian: need at least 2 classes");
    if (per_class < 1 || dim < 1) throw ConfigError("synth_gaussian: per_class and dim must be positive");
    if (spread < 0) throw ConfigError("synth_gaussian: negative spread");
    Mat means(classes, dim);
    for (int c = 0; c < classes; ++c) {
        for (Index j = 0; j < dim; ++j) means(c, j) = rng.normal();
        means.row(c) *= radius / means.row(c).norm();
    }
    Dataset ds;
    ds.classes = classes;
    ds.normalization = {"synthetic_gaussian", 1.0};
    ds.source = "synthetic";
    ds.inputs.resize(classes * per_class, dim);
    ds.labels.resize(static_cast<std::size_t>(classes * per_class));
    for (Index s = 0; s < per_class; ++s)
        for (int c = 0; c < classes; ++c) {
            const Index row = s * classes + c;
            for (Index j = 0; j < dim; ++j) ds.inputs(row, j) = means(c, j) + spread * rng.normal();
            ds.labels[static_cast<std::size_t>(row)] = c;
        }
    return ds;
}

Dataset subset(const Dataset& ds, Index count) {
    Dataset out = ds;
    const Index keep = std::min(count, ds.size());
    out.inputs = ds.inputs.topRows(keep);
    out.labels.resize(static_cast<std::size_t>(keep));
    return out;
}

std::vector<Index> sample_indices(Index dataset_size, Index n, SeededRng& rng) {
    if (dataset_size < 1) throw ConfigError("sample_indices: empty dataset");
    std::vector<Index> idx(static_cast<std::size_t>(n));
    for (auto& i : idx) i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(dataset_size)));
    return idx;
}

Minibatch sample_minibatch(const Dataset& ds, Index n, SeededRng& rng) {
    Minibatch mb;
    mb.indices = sample_indices(ds.size(), n, rng);
    mb.batch = gather<double>(ds, mb.indices);
    return mb;
}

}  // namespace nup
