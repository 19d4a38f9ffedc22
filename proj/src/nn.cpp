#include "dcfl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "dcfl/kernels.hpp"
#include "dcfl/rng.hpp"

namespace dcfl {

namespace {

std::uint64_t hash_params(const ModelParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const double* p, std::size_t n) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& l : params.layers()) {
        const double dims[2] = {static_cast<double>(l.weight.rows()), static_cast<double>(l.weight.cols())};
        mix(dims, 2);
        mix(l.weight.storage().data(), l.weight.size());
        mix(l.bias.data(), l.bias.size());
    }
    return h;
}

void relu_inplace(Tensor2& t) {
    for (auto& v : t.flat()) v = v > 0.0 ? v : 0.0;
}

}  // namespace

ModelParams::ModelParams(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

void ModelParams::validate() const {
    if (layers_.empty()) throw ShapeError("ModelParams: no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.bias.size() != l.weight.rows())
            throw ShapeError("ModelParams: layer " + std::to_string(i) + " bias length != out dim");
        if (i > 0 && layers_[i - 1].out_dim() != l.in_dim())
            throw ShapeError("ModelParams: layer " + std::to_string(i) + " does not chain with its predecessor");
    }
}

ModelParams ModelParams::glorot(std::span<const std::size_t> widths, std::uint64_t seed) {
    if (widths.size() < 2) throw ShapeError("ModelParams::glorot: need at least input and output width");
    Rng rng(seed);
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const std::size_t in = widths[i], out = widths[i + 1];
        if (in == 0 || out == 0) throw ShapeError("ModelParams::glorot: zero width");
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        Layer l{Tensor2(out, in), std::vector<double>(out, 0.0)};
        for (auto& w : l.weight.flat()) w = (2.0 * uniform01(rng) - 1.0) * limit;
        layers.push_back(std::move(l));
    }
    return ModelParams(std::move(layers));
}

ModelParams ModelParams::zeros(std::span<const std::size_t> widths) {
    if (widths.size() < 2) throw ShapeError("ModelParams::zeros: need at least input and output width");
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
        layers.push_back({Tensor2(widths[i + 1], widths[i]), std::vector<double>(widths[i + 1], 0.0)});
    return ModelParams(std::move(layers));
}

Layer& ModelParams::classifier() {
    if (layers_.empty()) throw StateError("classifier(): empty model");
    return layers_.back();
}

const Layer& ModelParams::classifier() const {
    if (layers_.empty()) throw StateError("classifier(): empty model");
    return layers_.back();
}

std::size_t ModelParams::input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
std::size_t ModelParams::num_classes() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

std::size_t ModelParams::param_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.param_count();
    return n;
}

std::vector<std::size_t> ModelParams::widths() const {
    std::vector<std::size_t> w;
    if (layers_.empty()) return w;
    w.push_back(layers_.front().in_dim());
    for (const auto& l : layers_) w.push_back(l.out_dim());
    return w;
}

bool ModelParams::same_shape(const ModelParams& other) const noexcept {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (!layers_[i].weight.same_shape(other.layers_[i].weight)) return false;
    return true;
}

std::vector<double> ModelParams::flatten() const {
    std::vector<double> out;
    out.reserve(param_count());
    for (const auto& l : layers_) {
        out.insert(out.end(), l.weight.storage().begin(), l.weight.storage().end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
}

void ModelParams::assign_flat(std::span<const double> flat) {
    if (flat.size() != param_count()) throw ShapeError("assign_flat: length mismatch");
    std::size_t k = 0;
    for (auto& l : layers_) {
        std::copy_n(flat.data() + k, l.weight.size(), l.weight.storage().data());
        k += l.weight.size();
        std::copy_n(flat.data() + k, l.bias.size(), l.bias.data());
        k += l.bias.size();
    }
}

ModelParams ModelParams::feature_extractor() const {
    if (layers_.size() < 2) throw ShapeError("feature_extractor: model has no hidden layer");
    return ModelParams(std::vector<Layer>(layers_.begin(), layers_.end() - 1));
}

GradBundle GradBundle::zeros_like(const ModelParams& params) {
    GradBundle g;
    for (const auto& l : params.layers())
        g.layers.push_back({Tensor2(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size(), 0.0)});
    return g;
}

bool GradBundle::matches(const ModelParams& params) const noexcept {
    if (layers.size() != params.depth()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = params.layers()[i];
        if (!layers[i].dweight.same_shape(l.weight) || layers[i].dbias.size() != l.bias.size()) return false;
    }
    return true;
}

void GradBundle::add_scaled(const GradBundle& other, double scale) {
    if (other.layers.size() != layers.size()) throw ShapeError("GradBundle::add_scaled: depth mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& a = layers[i];
        const auto& b = other.layers[i];
        if (!a.dweight.same_shape(b.dweight) || a.dbias.size() != b.dbias.size())
            throw ShapeError("GradBundle::add_scaled: layer shape mismatch");
        auto af = a.dweight.flat();
        auto bf = b.dweight.flat();
        for (std::size_t k = 0; k < af.size(); ++k) af[k] += scale * bf[k];
        for (std::size_t k = 0; k < a.dbias.size(); ++k) a.dbias[k] += scale * b.dbias[k];
    }
}

ForwardCache forward(const ModelParams& params, const Tensor2& batch, bool relu_on_last) {
    if (params.depth() == 0) throw ShapeError("forward: empty model");
    if (batch.cols() != params.input_dim())
        throw ShapeError("forward: batch has " + std::to_string(batch.cols()) + " columns, model expects " +
                         std::to_string(params.input_dim()));
    ForwardCache cache;
    cache.relu_on_last = relu_on_last;
    cache.params_hash = hash_params(params);
    cache.inputs.reserve(params.depth());
    cache.inputs.push_back(batch);
    const auto& layers = params.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Tensor2 z;
        kernels::affine(cache.inputs.back(), layers[l].weight, layers[l].bias, z);
        const bool last = l + 1 == layers.size();
        if (!last || relu_on_last) relu_inplace(z);
        if (last)
            cache.logits = std::move(z);
        else
            cache.inputs.push_back(std::move(z));
    }
    return cache;
}

std::vector<double> per_example_loss(const Tensor2& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows()) throw ArgumentError("cross_entropy: label count != logits rows");
    const auto classes = static_cast<int>(logits.cols());
    std::vector<double> out(logits.rows());
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        const int y = labels[b];
        if (y < 0 || y >= classes) throw ArgumentError("cross_entropy: label " + std::to_string(y) + " out of range");
        const auto row = logits.row(b);
        const double m = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double v : row) s += std::exp(v - m);
        out[b] = std::log(s) + m - row[static_cast<std::size_t>(y)];
    }
    return out;
}

LossResult cross_entropy(const Tensor2& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows()) throw ArgumentError("cross_entropy: label count != logits rows");
    if (logits.rows() == 0) throw ArgumentError("cross_entropy: empty batch");
    const auto classes = static_cast<int>(logits.cols());
    const double inv_b = 1.0 / static_cast<double>(logits.rows());
    LossResult r;
    r.dlogits = Tensor2(logits.rows(), logits.cols());
    double total = 0.0;
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        const int y = labels[b];
        if (y < 0 || y >= classes) throw ArgumentError("cross_entropy: label " + std::to_string(y) + " out of range");
        const auto row = logits.row(b);
        auto drow = r.dlogits.row(b);
        const double m = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) {
            drow[c] = std::exp(row[c] - m);
            s += drow[c];
        }
        total += std::log(s) + m - row[static_cast<std::size_t>(y)];
        for (std::size_t c = 0; c < row.size(); ++c) drow[c] = drow[c] / s * inv_b;
        drow[static_cast<std::size_t>(y)] -= inv_b;
    }
    r.loss = total * inv_b;
    if (!std::isfinite(r.loss)) throw NumericError("cross_entropy: non-finite loss");
    return r;
}

GradBundle backward(const ModelParams& params, const ForwardCache& cache, const Tensor2& dlogits,
                    bool want_input_grad) {
    const auto& layers = params.layers();
    if (cache.inputs.size() != layers.size() || cache.params_hash != hash_params(params))
        throw StateError("backward: activation cache does not belong to these parameters");
    if (!dlogits.same_shape(cache.logits)) throw ShapeError("backward: dlogits shape != logits shape");

    GradBundle g;
    g.layers.resize(layers.size());
    Tensor2 delta = dlogits;
    if (cache.relu_on_last) {
        auto d = delta.flat();
        auto z = cache.logits.flat();
        for (std::size_t k = 0; k < d.size(); ++k)
            if (z[k] <= 0.0) d[k] = 0.0;
    }
    for (std::size_t li = layers.size(); li-- > 0;) {
        const Tensor2& in = cache.inputs[li];
        auto& lg = g.layers[li];
        kernels::matmul_tn(delta, in, lg.dweight);
        lg.dbias.assign(layers[li].out_dim(), 0.0);
        for (std::size_t b = 0; b < delta.rows(); ++b) {
            const auto row = delta.row(b);
            for (std::size_t o = 0; o < row.size(); ++o) lg.dbias[o] += row[o];
        }
        if (li == 0 && !want_input_grad) break;
        Tensor2 prev;
        kernels::matmul_nn(delta, layers[li].weight, prev);
        if (li > 0) {
            // ReLU mask: the stored input of layer li is relu(z_{li-1}).
            auto p = prev.flat();
            auto a = in.flat();
            for (std::size_t k = 0; k < p.size(); ++k)
                if (a[k] <= 0.0) p[k] = 0.0;
            delta = std::move(prev);
        } else {
            g.dinput = std::move(prev);
        }
    }
    return g;
}

void sgd_step_inplace(ModelParams& params, const GradBundle& grads, double lr) {
    if (!(lr > 0.0)) throw ArgumentError("sgd_step: learning rate must be positive");
    if (!grads.matches(params)) throw ShapeError("sgd_step: gradient shapes do not match parameters");
    for (std::size_t i = 0; i < params.depth(); ++i) {
        auto& l = params.layers()[i];
        const auto& gl = grads.layers[i];
        auto w = l.weight.flat();
        auto gw = gl.dweight.flat();
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * gw[k];
        for (std::size_t k = 0; k < l.bias.size(); ++k) l.bias[k] -= lr * gl.dbias[k];
    }
}

ModelParams sgd_step(const ModelParams& params, const GradBundle& grads, double lr) {
    ModelParams out = params;
    sgd_step_inplace(out, grads, lr);
    return out;
}

void add_proximal(GradBundle& grads, const ModelParams& params, const ModelParams& anchor, double mu) {
    if (mu == 0.0) return;
    if (!params.same_shape(anchor) || !grads.matches(params)) throw ShapeError("add_proximal: shape mismatch");
    for (std::size_t i = 0; i < params.depth(); ++i) {
        const auto& p = params.layers()[i];
        const auto& a = anchor.layers()[i];
        auto& g = grads.layers[i];
        auto gw = g.dweight.flat();
        auto pw = p.weight.flat();
        auto aw = a.weight.flat();
        for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += mu * (pw[k] - aw[k]);
        for (std::size_t k = 0; k < g.dbias.size(); ++k) g.dbias[k] += mu * (p.bias[k] - a.bias[k]);
    }
}

std::vector<int> predict(const ModelParams& params, const Tensor2& images) {
    const auto cache = forward(params, images);
    std::vector<int> out(images.rows());
    for (std::size_t b = 0; b < images.rows(); ++b) {
        const auto row = cache.logits.row(b);
        out[b] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

double evaluate(const ModelParams& params, const Dataset& ds, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ArgumentError("evaluate: empty index set");
    constexpr std::size_t kChunk = 512;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < indices.size(); start += kChunk) {
        const auto part = indices.subspan(start, std::min(kChunk, indices.size() - start));
        const auto pred = predict(params, gather_rows(ds.images, part));
        for (std::size_t i = 0; i < part.size(); ++i)
            if (pred[i] == ds.labels[part[i]]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

double evaluate(const ModelParams& params, const Dataset& ds) {
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return evaluate(params, ds, all);
}

double mean_loss(const ModelParams& params, const Tensor2& images, std::span<const int> labels) {
    return cross_entropy(forward(params, images).logits, labels).loss;
}

}  // namespace dcfl
