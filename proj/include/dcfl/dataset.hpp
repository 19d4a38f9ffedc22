#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dcfl/tensor.hpp"

namespace dcfl {

struct ImageShape {
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    std::size_t size() const noexcept { return channels * height * width; }
    friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Labeled examples. Row i of `images` is example i, pixels in [0, 1].
struct Dataset {
    Tensor2 images;
    std::vector<int> labels;
    int num_classes = 0;
    ImageShape shape;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return images.cols(); }

    /// Throws ConsistencyError when the invariants do not hold.
    void validate() const;

    /// New dataset holding the listed examples, in order.
    Dataset subset(std::span<const std::size_t> indices) const;
};

/// 64-bit FNV-1a over shape, labels and pixel bytes.
std::uint64_t fingerprint(const Dataset& ds);

/// Reads big-endian IDX image (magic 0x00000803) and label (0x00000801)
/// files. Pixels are divided by 255. num_classes is max(label) + 1 unless
/// `num_classes` is positive.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 int num_classes = 0);

/// Same as load_idx, from in-memory byte buffers.
Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes,
                  int num_classes = 0);

/// Gaussian blobs: class c samples ~ N(center_c, spread^2 I), clamped to
/// [0, 1]; centers uniform in [0.15, 0.85]^dim. Examples are ordered class
/// by class. The image shape is 1 x s x s when dim == s*s, else 1 x 1 x dim.
Dataset synthetic_blobs(int num_classes, std::size_t per_class, std::size_t dim, double spread,
                        std::uint64_t seed);

/// Splits every class's first `train_per_class` examples into the first
/// dataset and the rest into the second.
std::pair<Dataset, Dataset> split_per_class(const Dataset& ds, std::size_t train_per_class);

}  // namespace dcfl
