#include "dcfl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dcfl {

std::string_view to_string(AugmentOp op) {
    switch (op) {
        case AugmentOp::Flip: return "flip";
        case AugmentOp::Crop: return "crop";
        case AugmentOp::Scale: return "scale";
        case AugmentOp::Brightness: return "brightness";
        case AugmentOp::Cutout: return "cutout";
    }
    return "?";
}

AugmentPolicy AugmentPolicy::all_ops() {
    AugmentPolicy p;
    p.enabled = true;
    p.ops = {AugmentOp::Flip, AugmentOp::Crop, AugmentOp::Scale, AugmentOp::Brightness, AugmentOp::Cutout};
    return p;
}

AugmentPolicy AugmentPolicy::from_list(std::string_view list) {
    AugmentPolicy p;
    if (list.empty() || list == "none") return p;
    p.enabled = true;
    std::string item;
    std::stringstream ss{std::string(list)};
    while (std::getline(ss, item, ',')) {
        std::erase(item, ' ');
        if (item == "flip") p.ops.push_back(AugmentOp::Flip);
        else if (item == "crop") p.ops.push_back(AugmentOp::Crop);
        else if (item == "scale") p.ops.push_back(AugmentOp::Scale);
        else if (item == "brightness") p.ops.push_back(AugmentOp::Brightness);
        else if (item == "cutout") p.ops.push_back(AugmentOp::Cutout);
        else throw PolicyError("unknown augmentation op '" + item + "'");
    }
    return p;
}

std::string AugmentPolicy::op_list() const {
    if (!enabled) return "none";
    std::string s;
    for (auto op : ops) {
        if (!s.empty()) s += ',';
        s += to_string(op);
    }
    return s;
}

SampledTransform SampledTransform::draw(const AugmentPolicy& policy, const ImageShape& shape, Rng& rng) {
    SampledTransform t;
    if (!policy.enabled) return t;
    if (policy.ops.empty()) throw PolicyError("augmentation enabled with no ops");
    t.identity_ = false;
    t.op_ = policy.ops[uniform_index(rng, policy.ops.size())];
    t.dim_ = shape.size();

    const auto H = static_cast<std::ptrdiff_t>(shape.height);
    const auto W = static_cast<std::ptrdiff_t>(shape.width);
    const auto C = static_cast<std::ptrdiff_t>(shape.channels);
    auto route = [&](auto&& src_of) {
        t.source_.assign(t.dim_, -1);
        for (std::ptrdiff_t c = 0; c < C; ++c)
            for (std::ptrdiff_t y = 0; y < H; ++y)
                for (std::ptrdiff_t x = 0; x < W; ++x) {
                    auto [sy, sx] = src_of(y, x);
                    if (sy >= 0 && sy < H && sx >= 0 && sx < W)
                        t.source_[static_cast<std::size_t>((c * H + y) * W + x)] = (c * H + sy) * W + sx;
                }
    };

    switch (t.op_) {
        case AugmentOp::Flip:
            route([&](std::ptrdiff_t y, std::ptrdiff_t x) { return std::pair{y, W - 1 - x}; });
            break;
        case AugmentOp::Crop: {
            const auto span = static_cast<std::size_t>(2 * policy.crop_pad + 1);
            const auto dx = static_cast<std::ptrdiff_t>(uniform_index(rng, span)) - policy.crop_pad;
            const auto dy = H > 1 ? static_cast<std::ptrdiff_t>(uniform_index(rng, span)) - policy.crop_pad : 0;
            route([&](std::ptrdiff_t y, std::ptrdiff_t x) { return std::pair{y - dy, x - dx}; });
            break;
        }
        case AugmentOp::Scale: {
            const double sx = policy.scale_min + (policy.scale_max - policy.scale_min) * uniform01(rng);
            const double sy = policy.scale_min + (policy.scale_max - policy.scale_min) * uniform01(rng);
            const double cx = 0.5 * static_cast<double>(W - 1), cy = 0.5 * static_cast<double>(H - 1);
            route([&](std::ptrdiff_t y, std::ptrdiff_t x) {
                return std::pair{static_cast<std::ptrdiff_t>(std::lround((static_cast<double>(y) - cy) / sy + cy)),
                                 static_cast<std::ptrdiff_t>(std::lround((static_cast<double>(x) - cx) / sx + cx))};
            });
            break;
        }
        case AugmentOp::Brightness:
            t.shift_ = policy.brightness * (2.0 * uniform01(rng) - 1.0);
            break;
        case AugmentOp::Cutout: {
            const auto side_w = std::max<std::ptrdiff_t>(1, std::lround(policy.cutout_fraction * static_cast<double>(W)));
            const auto side_h = std::max<std::ptrdiff_t>(1, std::lround(policy.cutout_fraction * static_cast<double>(H)));
            const auto x0 = static_cast<std::ptrdiff_t>(uniform_index(rng, static_cast<std::size_t>(W - side_w + 1)));
            const auto y0 = static_cast<std::ptrdiff_t>(uniform_index(rng, static_cast<std::size_t>(H - side_h + 1)));
            route([&](std::ptrdiff_t y, std::ptrdiff_t x) {
                const bool inside = y >= y0 && y < y0 + side_h && x >= x0 && x < x0 + side_w;
                return inside ? std::pair<std::ptrdiff_t, std::ptrdiff_t>{-1, -1} : std::pair{y, x};
            });
            break;
        }
    }
    return t;
}

Tensor2 SampledTransform::apply(const Tensor2& batch) const {
    if (identity_) return batch;
    if (batch.cols() != dim_) throw ShapeError("augment: batch columns != image size");
    Tensor2 out(batch.rows(), batch.cols());
    for (std::size_t b = 0; b < batch.rows(); ++b) {
        const auto in = batch.row(b);
        auto o = out.row(b);
        if (op_ == AugmentOp::Brightness) {
            for (std::size_t p = 0; p < dim_; ++p) o[p] = std::clamp(in[p] + shift_, 0.0, 1.0);
        } else {
            for (std::size_t p = 0; p < dim_; ++p)
                o[p] = source_[p] >= 0 ? in[static_cast<std::size_t>(source_[p])] : 0.0;
        }
    }
    return out;
}

Tensor2 SampledTransform::backprop(const Tensor2& input, const Tensor2& grad_out) const {
    if (identity_) return grad_out;
    if (!input.same_shape(grad_out) || grad_out.cols() != dim_) throw ShapeError("augment backprop: shape mismatch");
    Tensor2 g(grad_out.rows(), grad_out.cols());
    for (std::size_t b = 0; b < grad_out.rows(); ++b) {
        const auto go = grad_out.row(b);
        auto gi = g.row(b);
        if (op_ == AugmentOp::Brightness) {
            const auto in = input.row(b);
            for (std::size_t p = 0; p < dim_; ++p) {
                const double v = in[p] + shift_;
                gi[p] = v > 0.0 && v < 1.0 ? go[p] : 0.0;
            }
        } else {
            for (std::size_t p = 0; p < dim_; ++p)
                if (source_[p] >= 0) gi[static_cast<std::size_t>(source_[p])] += go[p];
        }
    }
    return g;
}

Tensor2 dsa_augment(const Tensor2& batch, const ImageShape& shape, const AugmentPolicy& policy, std::uint64_t seed) {
    if (batch.cols() != shape.size()) throw ShapeError("dsa_augment: batch columns != image size");
    Rng rng(seed);
    return SampledTransform::draw(policy, shape, rng).apply(batch);
}

}  // namespace dcfl
