#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "dcfl/dataset.hpp"
#include "dcfl/rng.hpp"

namespace dcfl {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
    if (b.size() < at + 4) throw IoError("IDX: truncated header");
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void Dataset::validate() const {
    if (labels.empty()) throw ConsistencyError("dataset: no examples");
    if (images.rows() != labels.size()) throw ConsistencyError("dataset: image rows != label count");
    if (images.cols() != shape.size()) throw ConsistencyError("dataset: image dim != channels*height*width");
    for (int y : labels)
        if (y < 0 || y >= num_classes) throw ConsistencyError("dataset: label out of range");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.images = gather_rows(images, indices);
    out.labels.reserve(indices.size());
    for (auto i : indices) out.labels.push_back(labels[i]);
    out.num_classes = num_classes;
    out.shape = shape;
    return out;
}

std::uint64_t fingerprint(const Dataset& ds) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    const std::uint64_t dims[5] = {ds.shape.channels, ds.shape.height, ds.shape.width, ds.size(),
                                   static_cast<std::uint64_t>(ds.num_classes)};
    mix(dims, sizeof dims);
    mix(ds.labels.data(), ds.labels.size() * sizeof(int));
    mix(ds.images.storage().data(), ds.images.size() * sizeof(double));
    return h;
}

Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes,
                  int num_classes) {
    if (read_be32(image_bytes, 0) != kIdxImages) throw FormatError("IDX: image file has wrong magic");
    if (read_be32(label_bytes, 0) != kIdxLabels) throw FormatError("IDX: label file has wrong magic");
    const std::size_t n = read_be32(image_bytes, 4);
    const std::size_t h = read_be32(image_bytes, 8);
    const std::size_t w = read_be32(image_bytes, 12);
    const std::size_t nl = read_be32(label_bytes, 4);
    if (n != nl)
        throw ConsistencyError("IDX: " + std::to_string(n) + " images but " + std::to_string(nl) + " labels");
    if (n == 0) throw ConsistencyError("IDX: empty dataset");
    if (image_bytes.size() - 16 < n * h * w) throw IoError("IDX: image payload truncated");
    if (label_bytes.size() - 8 < n) throw IoError("IDX: label payload truncated");

    Dataset ds;
    ds.shape = {1, h, w};
    ds.images = Tensor2(n, h * w);
    auto px = ds.images.flat();
    for (std::size_t i = 0; i < n * h * w; ++i) px[i] = static_cast<double>(image_bytes[16 + i]) / 255.0;
    ds.labels.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = label_bytes[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = num_classes > 0 ? num_classes : max_label + 1;
    ds.validate();
    return ds;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 int num_classes) {
    const auto img = slurp(images_path);
    const auto lab = slurp(labels_path);
    return parse_idx(img, lab, num_classes);
}

Dataset synthetic_blobs(int num_classes, std::size_t per_class, std::size_t dim, double spread,
                        std::uint64_t seed) {
    if (num_classes < 1 || per_class < 1 || dim < 1) throw ArgumentError("synthetic_blobs: counts must be >= 1");
    if (!(spread > 0.0)) throw ArgumentError("synthetic_blobs: spread must be positive");
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, spread);

    Dataset ds;
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
    ds.shape = side * side == dim ? ImageShape{1, side, side} : ImageShape{1, 1, dim};
    ds.num_classes = num_classes;
    const std::size_t n = per_class * static_cast<std::size_t>(num_classes);
    ds.images = Tensor2(n, dim);
    ds.labels.resize(n);

    Tensor2 centers(static_cast<std::size_t>(num_classes), dim);
    for (auto& v : centers.flat()) v = 0.15 + 0.7 * uniform01(rng);

    std::size_t row = 0;
    for (int c = 0; c < num_classes; ++c) {
        const auto center = centers.row(static_cast<std::size_t>(c));
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            auto x = ds.images.row(row);
            for (std::size_t j = 0; j < dim; ++j) x[j] = std::clamp(center[j] + noise(rng), 0.0, 1.0);
            ds.labels[row] = c;
        }
    }
    return ds;
}

std::pair<Dataset, Dataset> split_per_class(const Dataset& ds, std::size_t train_per_class) {
    std::vector<std::size_t> seen(static_cast<std::size_t>(ds.num_classes), 0);
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto& s = seen[static_cast<std::size_t>(ds.labels[i])];
        (s++ < train_per_class ? train : test).push_back(i);
    }
    if (train.empty() || test.empty()) throw ArgumentError("split_per_class: one side would be empty");
    return {ds.subset(train), ds.subset(test)};
}

}  // namespace dcfl
