#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dcfl/dataset.hpp"
#include "dcfl/tensor.hpp"

namespace dcfl {

/// One dense layer: y = W x + b with W stored [out x in].
struct Layer {
    Tensor2 weight;
    std::vector<double> bias;

    std::size_t in_dim() const noexcept { return weight.cols(); }
    std::size_t out_dim() const noexcept { return weight.rows(); }
    std::size_t param_count() const noexcept { return weight.size() + bias.size(); }
    friend bool operator==(const Layer&, const Layer&) = default;
};

/// MLP parameters. ReLU after every layer except the last; the last layer
/// is the classifier.
class ModelParams {
public:
    ModelParams() = default;
    explicit ModelParams(std::vector<Layer> layers);

    /// widths = {d_in, hidden..., num_classes}. Weights uniform in
    /// +-sqrt(6 / (fan_in + fan_out)), biases zero.
    static ModelParams glorot(std::span<const std::size_t> widths, std::uint64_t seed);

    /// All-zero parameters with the given widths.
    static ModelParams zeros(std::span<const std::size_t> widths);

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::vector<Layer>& layers() noexcept { return layers_; }
    std::size_t depth() const noexcept { return layers_.size(); }

    Layer& classifier();
    const Layer& classifier() const;

    std::size_t input_dim() const;
    std::size_t num_classes() const;
    std::size_t param_count() const noexcept;
    std::vector<std::size_t> widths() const;

    bool same_shape(const ModelParams& other) const noexcept;

    /// Weights then bias, layer by layer.
    std::vector<double> flatten() const;
    void assign_flat(std::span<const double> flat);

    /// Model with the classifier dropped (hidden stack only).
    ModelParams feature_extractor() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
    void validate() const;
    std::vector<Layer> layers_;
};

/// Per-layer inputs recorded by forward(); consumed by backward().
struct ForwardCache {
    std::vector<Tensor2> inputs;  // inputs[l] is the input of layer l
    Tensor2 logits;
    std::uint64_t params_hash = 0;
    bool relu_on_last = false;
};

struct LayerGrad {
    Tensor2 dweight;
    std::vector<double> dbias;
};

struct GradBundle {
    std::vector<LayerGrad> layers;
    std::optional<Tensor2> dinput;

    static GradBundle zeros_like(const ModelParams& params);
    bool matches(const ModelParams& params) const noexcept;
    void add_scaled(const GradBundle& other, double scale);
};

/// Batch forward pass. With `relu_on_last` the final layer also gets a
/// ReLU (used when a hidden stack serves as a feature extractor).
ForwardCache forward(const ModelParams& params, const Tensor2& batch, bool relu_on_last = false);

struct LossResult {
    double loss = 0.0;
    Tensor2 dlogits;
};

/// Mean softmax cross-entropy; dlogits = (softmax - onehot) / B.
LossResult cross_entropy(const Tensor2& logits, std::span<const int> labels);

/// Per-row cross-entropy losses.
std::vector<double> per_example_loss(const Tensor2& logits, std::span<const int> labels);

/// Gradients of the batch loss w.r.t. every parameter; dinput is filled
/// iff `want_input_grad`. Throws StateError if `cache` was not produced by
/// forward(params, ...).
GradBundle backward(const ModelParams& params, const ForwardCache& cache, const Tensor2& dlogits,
                    bool want_input_grad = false);

/// p <- p - lr * g, returning the updated copy.
ModelParams sgd_step(const ModelParams& params, const GradBundle& grads, double lr);
void sgd_step_inplace(ModelParams& params, const GradBundle& grads, double lr);

/// Adds mu * (params - anchor) to the parameter gradients (FedProx term).
void add_proximal(GradBundle& grads, const ModelParams& params, const ModelParams& anchor, double mu);

/// Row-wise argmax, ties to the lowest class index.
std::vector<int> predict(const ModelParams& params, const Tensor2& images);

/// Fraction of `indices` whose prediction equals the label.
double evaluate(const ModelParams& params, const Dataset& ds, std::span<const std::size_t> indices);
double evaluate(const ModelParams& params, const Dataset& ds);

/// Mean cross-entropy over a labeled set.
double mean_loss(const ModelParams& params, const Tensor2& images, std::span<const int> labels);

// Binary format: "DCFLW\0", u32 layer count, then per layer u32 rows,
// u32 cols, rows*cols f64 weights, rows f64 biases. Little-endian.
std::vector<std::uint8_t> serialize(const ModelParams& params);
ModelParams deserialize_model(std::span<const std::uint8_t> bytes);
/// Number of f64 values carried by a serialized model payload.
std::size_t model_payload_floats(std::span<const std::uint8_t> bytes);

}  // namespace dcfl
