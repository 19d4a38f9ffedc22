#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dcfl/dataset.hpp"
#include "dcfl/rng.hpp"
#include "dcfl/tensor.hpp"

namespace dcfl {

enum class AugmentOp { Flip, Crop, Scale, Brightness, Cutout };

std::string_view to_string(AugmentOp op);

struct AugmentPolicy {
    bool enabled = false;
    std::vector<AugmentOp> ops;
    int crop_pad = 2;            // translation range in pixels, both axes
    double scale_min = 0.9;
    double scale_max = 1.1;
    double brightness = 0.2;     // additive shift drawn from [-b, b]
    double cutout_fraction = 0.25;  // side of the zeroed square relative to the image side

    /// Augmentation switched off.
    static AugmentPolicy none() { return {}; }
    /// Enabled with all five ops and default parameters.
    static AugmentPolicy all_ops();
    /// Enabled with a comma-separated op list ("flip,crop,..."); "none" or
    /// an empty string turns augmentation off.
    static AugmentPolicy from_list(std::string_view list);
    std::string op_list() const;
};

/// One concrete transform drawn from a policy. Applying the same instance
/// to several batches gives them identical transform parameters.
class SampledTransform {
public:
    /// Identity transform.
    SampledTransform() = default;

    /// Draws one op uniformly from the enabled set and then its parameters.
    /// Throws PolicyError for an enabled policy without ops.
    static SampledTransform draw(const AugmentPolicy& policy, const ImageShape& shape, Rng& rng);

    bool is_identity() const noexcept { return identity_; }
    AugmentOp op() const noexcept { return op_; }

    Tensor2 apply(const Tensor2& batch) const;

    /// Gradient w.r.t. the transform input given the gradient w.r.t. its
    /// output. `input` is the batch apply() was called with.
    Tensor2 backprop(const Tensor2& input, const Tensor2& grad_out) const;

private:
    bool identity_ = true;
    AugmentOp op_ = AugmentOp::Flip;
    // Pixel routing for the spatial ops: out[p] = in[source_[p]], or 0 when -1.
    std::vector<std::ptrdiff_t> source_;
    double shift_ = 0.0;
    std::size_t dim_ = 0;
};

/// Draws one transform with Rng(seed) and applies it to every row of batch.
/// A disabled policy returns the batch unchanged.
Tensor2 dsa_augment(const Tensor2& batch, const ImageShape& shape, const AugmentPolicy& policy, std::uint64_t seed);

}  // namespace dcfl
