#include "dcfl/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef DCFL_HAVE_OPENMP
#include <omp.h>
#endif

namespace dcfl {

bool Tensor2::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor2 gather_rows(const Tensor2& src, std::span<const std::size_t> rows) {
    Tensor2 out(rows.size(), src.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= src.rows()) throw ArgumentError("gather_rows: row index out of range");
        std::copy_n(src.row(rows[i]).data(), src.cols(), out.row(i).data());
    }
    return out;
}

}  // namespace dcfl

namespace dcfl::kernels {

namespace {

void check_affine(const Tensor2& in, const Tensor2& w, std::span<const double> bias, Tensor2& out) {
    if (in.cols() != w.cols()) throw ShapeError("affine: input cols != weight cols");
    if (bias.size() != w.rows()) throw ShapeError("affine: bias length != weight rows");
    if (out.rows() != in.rows() || out.cols() != w.rows()) out = Tensor2(in.rows(), w.rows());
}

void check_nn(const Tensor2& g, const Tensor2& w, Tensor2& out) {
    if (g.cols() != w.rows()) throw ShapeError("matmul_nn: inner dimensions differ");
    if (out.rows() != g.rows() || out.cols() != w.cols()) out = Tensor2(g.rows(), w.cols());
}

void check_tn(const Tensor2& g, const Tensor2& in, Tensor2& out) {
    if (g.rows() != in.rows()) throw ShapeError("matmul_tn: batch dimensions differ");
    if (out.rows() != g.cols() || out.cols() != in.cols()) out = Tensor2(g.cols(), in.cols());
}

// Row kernels shared by both variants; they fix the accumulation order.
inline void affine_row(const Tensor2& in, const Tensor2& w, std::span<const double> bias, Tensor2& out,
                       std::size_t b) {
    const double* x = in.row(b).data();
    double* y = out.row(b).data();
    for (std::size_t o = 0; o < w.rows(); ++o) y[o] = bias[o] + dot(x, w.row(o).data(), w.cols());
}

inline void nn_row(const Tensor2& g, const Tensor2& w, Tensor2& out, std::size_t b) {
    double* y = out.row(b).data();
    std::fill_n(y, out.cols(), 0.0);
    const double* gr = g.row(b).data();
    for (std::size_t o = 0; o < w.rows(); ++o) {
        const double s = gr[o];
        if (s == 0.0) continue;
        const double* wr = w.row(o).data();
        for (std::size_t i = 0; i < w.cols(); ++i) y[i] += s * wr[i];
    }
}

inline void tn_row(const Tensor2& g, const Tensor2& in, Tensor2& out, std::size_t o) {
    double* y = out.row(o).data();
    std::fill_n(y, out.cols(), 0.0);
    for (std::size_t b = 0; b < g.rows(); ++b) {
        const double s = g(b, o);
        if (s == 0.0) continue;
        const double* xr = in.row(b).data();
        for (std::size_t i = 0; i < in.cols(); ++i) y[i] += s * xr[i];
    }
}

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelThreshold = 1u << 16;

bool use_parallel(std::size_t work) {
#ifdef DCFL_HAVE_OPENMP
    return work >= kParallelThreshold && !omp_in_parallel() && omp_get_max_threads() > 1;
#else
    (void)work;
    return false;
#endif
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) noexcept {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

bool openmp_enabled() noexcept {
#ifdef DCFL_HAVE_OPENMP
    return true;
#else
    return false;
#endif
}

int max_threads() noexcept {
#ifdef DCFL_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace serial {

void affine(const Tensor2& in, const Tensor2& w, std::span<const double> bias, Tensor2& out) {
    check_affine(in, w, bias, out);
    for (std::size_t b = 0; b < in.rows(); ++b) affine_row(in, w, bias, out, b);
}

void matmul_nn(const Tensor2& g, const Tensor2& w, Tensor2& out) {
    check_nn(g, w, out);
    for (std::size_t b = 0; b < g.rows(); ++b) nn_row(g, w, out, b);
}

void matmul_tn(const Tensor2& g, const Tensor2& in, Tensor2& out) {
    check_tn(g, in, out);
    for (std::size_t o = 0; o < g.cols(); ++o) tn_row(g, in, out, o);
}

}  // namespace serial

namespace parallel {

void affine(const Tensor2& in, const Tensor2& w, std::span<const double> bias, Tensor2& out) {
    check_affine(in, w, bias, out);
    const auto n = static_cast<std::ptrdiff_t>(in.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < n; ++b) affine_row(in, w, bias, out, static_cast<std::size_t>(b));
}

void matmul_nn(const Tensor2& g, const Tensor2& w, Tensor2& out) {
    check_nn(g, w, out);
    const auto n = static_cast<std::ptrdiff_t>(g.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < n; ++b) nn_row(g, w, out, static_cast<std::size_t>(b));
}

void matmul_tn(const Tensor2& g, const Tensor2& in, Tensor2& out) {
    check_tn(g, in, out);
    const auto n = static_cast<std::ptrdiff_t>(g.cols());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t o = 0; o < n; ++o) tn_row(g, in, out, static_cast<std::size_t>(o));
}

}  // namespace parallel

void affine(const Tensor2& in, const Tensor2& w, std::span<const double> bias, Tensor2& out) {
    if (use_parallel(in.rows() * w.rows() * w.cols()))
        parallel::affine(in, w, bias, out);
    else
        serial::affine(in, w, bias, out);
}

void matmul_nn(const Tensor2& g, const Tensor2& w, Tensor2& out) {
    if (use_parallel(g.rows() * w.rows() * w.cols()))
        parallel::matmul_nn(g, w, out);
    else
        serial::matmul_nn(g, w, out);
}

void matmul_tn(const Tensor2& g, const Tensor2& in, Tensor2& out) {
    if (use_parallel(g.rows() * g.cols() * in.cols()))
        parallel::matmul_tn(g, in, out);
    else
        serial::matmul_tn(g, in, out);
}

}  // namespace dcfl::kernels
