#pragma once

#include <span>

#include "dcfl/tensor.hpp"

// Dense kernels used by the MLP. Every kernel has a serial reference and an
// OpenMP variant. Both assign each output element to exactly one thread and
// accumulate it in the same order, so they agree bit for bit; the dispatching
// entry points pick the parallel variant only for large enough problems.
namespace dcfl::kernels {

/// out[b, o] = bias[o] + sum_i in[b, i] * w[o, i]   (out = in * w^T + bias)
void affine(const Tensor2& in, const Tensor2& w, std::span<const double> bias, Tensor2& out);

/// out[b, i] = sum_o g[b, o] * w[o, i]   (out = g * w)
void matmul_nn(const Tensor2& g, const Tensor2& w, Tensor2& out);

/// out[o, i] = sum_b g[b, o] * in[b, i]   (out = g^T * in)
void matmul_tn(const Tensor2& g, const Tensor2& in, Tensor2& out);

namespace serial {
void affine(const Tensor2& in, const Tensor2& w, std::span<const double> bias, Tensor2& out);
void matmul_nn(const Tensor2& g, const Tensor2& w, Tensor2& out);
void matmul_tn(const Tensor2& g, const Tensor2& in, Tensor2& out);
}  // namespace serial

namespace parallel {
void affine(const Tensor2& in, const Tensor2& w, std::span<const double> bias, Tensor2& out);
void matmul_nn(const Tensor2& g, const Tensor2& w, Tensor2& out);
void matmul_tn(const Tensor2& g, const Tensor2& in, Tensor2& out);
}  // namespace parallel

/// Fixed-order dot product (four interleaved partial sums).
double dot(const double* a, const double* b, std::size_t n) noexcept;

/// True when the OpenMP variants were compiled in.
bool openmp_enabled() noexcept;

/// Threads the parallel variants would use from the current context.
int max_threads() noexcept;

}  // namespace dcfl::kernels
