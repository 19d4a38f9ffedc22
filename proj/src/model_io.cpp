#include <string>

#include "bytes.hpp"
#include "dcfl/nn.hpp"

namespace dcfl {

namespace {
constexpr std::string_view kModelMagic{"DCFLW\0", 6};
}

std::vector<std::uint8_t> serialize(const ModelParams& params) {
    detail::ByteWriter w;
    w.raw(kModelMagic);
    w.u32(static_cast<std::uint32_t>(params.depth()));
    for (const auto& l : params.layers()) {
        w.u32(static_cast<std::uint32_t>(l.weight.rows()));
        w.u32(static_cast<std::uint32_t>(l.weight.cols()));
        w.f64s(l.weight.flat());
        w.f64s(l.bias);
    }
    return w.take();
}

ModelParams deserialize_model(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic(kModelMagic);
    const std::uint32_t n = r.u32();
    std::vector<Layer> layers;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t rows = r.u32(), cols = r.u32();
        Layer l{Tensor2(rows, cols), std::vector<double>(rows)};
        r.f64s(l.weight.storage().data(), l.weight.size());
        r.f64s(l.bias.data(), rows);
        layers.push_back(std::move(l));
    }
    if (!r.done()) throw FormatError("model payload: trailing bytes");
    return ModelParams(std::move(layers));
}

std::size_t model_payload_floats(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic(kModelMagic);
    const std::uint32_t n = r.u32();
    std::size_t floats = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::size_t rows = r.u32(), cols = r.u32();
        r.skip_f64s(rows * cols + rows);
        floats += rows * cols + rows;
    }
    if (!r.done()) throw FormatError("model payload: trailing bytes");
    return floats;
}

}  // namespace dcfl
