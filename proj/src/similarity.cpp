#include "dcfl/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "dcfl/kernels.hpp"

namespace dcfl {

namespace {

Tensor2 center_columns(const Tensor2& x) {
    Tensor2 c = x;
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) m += x(i, j);
        m *= inv_n;
        for (std::size_t i = 0; i < x.rows(); ++i) c(i, j) -= m;
    }
    return c;
}

// Squared Frobenius norm of a^T b for row-aligned a, b.
double cross_frobenius_sq(const Tensor2& a, const Tensor2& b) {
    Tensor2 prod;
    kernels::matmul_tn(a, b, prod);
    double s = 0.0;
    for (double v : prod.flat()) s += v * v;
    return s;
}

std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double linear_cka(const Tensor2& x, const Tensor2& y) {
    if (x.rows() != y.rows()) throw ShapeError("linear_cka: inputs have different row counts");
    if (x.rows() < 2) throw ShapeError("linear_cka: need at least two rows");
    const Tensor2 xc = center_columns(x);
    const Tensor2 yc = center_columns(y);
    const double xx = std::sqrt(cross_frobenius_sq(xc, xc));
    const double yy = std::sqrt(cross_frobenius_sq(yc, yc));
    if (!(xx > 0.0) || !(yy > 0.0)) throw DegenerateInputError("linear_cka: zero-variance input");
    const double v = cross_frobenius_sq(yc, xc) / (xx * yy);
    return std::clamp(v, 0.0, 1.0);
}

Tensor2 classifier_representation(const Layer& classifier) {
    const std::size_t c = classifier.weight.rows(), h = classifier.weight.cols();
    Tensor2 rep(c, h + 1);
    for (std::size_t i = 0; i < c; ++i) {
        std::copy_n(classifier.weight.row(i).data(), h, rep.row(i).data());
        rep(i, h) = classifier.bias[i];
    }
    return rep;
}

double cka_between_classifiers(const Layer& a, const Layer& b) {
    if (!a.weight.same_shape(b.weight) || a.bias.size() != b.bias.size())
        throw ShapeError("cka_between_classifiers: classifier shapes differ");
    return linear_cka(classifier_representation(a), classifier_representation(b));
}

Tensor2 activation_representation(const ModelParams& model, const Tensor2& probe) {
    auto cache = forward(model, probe);
    return std::move(cache.inputs.back());
}

bool CkaMatrix::contains(std::size_t client) const noexcept {
    return std::binary_search(ids_.begin(), ids_.end(), client);
}

std::size_t CkaMatrix::position(std::size_t client) const {
    const auto it = std::lower_bound(ids_.begin(), ids_.end(), client);
    if (it == ids_.end() || *it != client) throw ArgumentError("CkaMatrix: unknown client " + std::to_string(client));
    return static_cast<std::size_t>(it - ids_.begin());
}

double CkaMatrix::score(const Tensor2& a, const Tensor2& b) const {
    try {
        return linear_cka(a, b);
    } catch (const DegenerateInputError&) {
        return 0.0;  // an all-constant representation carries no similarity signal
    }
}

CkaMatrix CkaMatrix::from_scores(std::vector<std::size_t> ids, std::vector<double> values) {
    const std::size_t n = ids.size();
    if (values.size() != n * n) throw ShapeError("CkaMatrix: need ids.size()^2 scores");
    if (!std::is_sorted(ids.begin(), ids.end()) || std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ArgumentError("CkaMatrix: ids must be strictly ascending");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (values[i * n + j] != values[j * n + i]) throw ArgumentError("CkaMatrix: scores must be symmetric");
    CkaMatrix m;
    m.ids_ = std::move(ids);
    m.values_ = std::move(values);
    m.reps_.assign(n, Tensor2());
    return m;
}

void CkaMatrix::update(std::span<const Entry> entries) {
    const std::vector<std::size_t> old_ids = ids_;
    const std::vector<double> old_values = values_;
    std::vector<std::size_t> dirty;
    for (const auto& e : entries) {
        if (!reps_.empty() && !e.representation.same_shape(reps_.front()))
            throw ShapeError("CkaMatrix: representation shape differs from stored entries");
        const auto it = std::lower_bound(ids_.begin(), ids_.end(), e.client);
        const auto pos = it - ids_.begin();
        if (it != ids_.end() && *it == e.client) {
            reps_[static_cast<std::size_t>(pos)] = e.representation;
        } else {
            ids_.insert(it, e.client);
            reps_.insert(reps_.begin() + pos, e.representation);
        }
        dirty.push_back(e.client);
    }
    std::sort(dirty.begin(), dirty.end());

    // Scores between clients untouched by this update are carried over.
    const std::size_t n = ids_.size(), old_n = old_ids.size();
    auto old_pos = [&](std::size_t id) -> std::ptrdiff_t {
        if (std::binary_search(dirty.begin(), dirty.end(), id)) return -1;
        const auto it = std::lower_bound(old_ids.begin(), old_ids.end(), id);
        return it != old_ids.end() && *it == id ? it - old_ids.begin() : -1;
    };
    std::vector<std::ptrdiff_t> prev(n);
    for (std::size_t i = 0; i < n; ++i) prev[i] = old_pos(ids_[i]);

    std::vector<double> fresh(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double v = prev[i] >= 0 && prev[j] >= 0
                                 ? old_values[static_cast<std::size_t>(prev[i]) * old_n + static_cast<std::size_t>(prev[j])]
                                 : score(reps_[i], reps_[j]);
            fresh[i * n + j] = fresh[j * n + i] = v;
        }
    }
    values_ = std::move(fresh);
}

double CkaMatrix::at(std::size_t client_a, std::size_t client_b) const {
    return value(position(client_a), position(client_b));
}

double CkaMatrix::off_diagonal_row_sum(std::size_t client) const {
    const std::size_t i = position(client);
    double s = 0.0;
    for (std::size_t j = 0; j < ids_.size(); ++j)
        if (j != i) s += value(i, j);
    return s;
}

void CkaMatrix::write_csv(std::ostream& out) const {
    out << "client";
    for (auto id : ids_) out << ',' << id;
    out << '\n';
    out.precision(17);
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        out << ids_[i];
        for (std::size_t j = 0; j < ids_.size(); ++j) out << ',' << value(i, j);
        out << '\n';
    }
}

CkaMatrix build_cka_matrix(std::span<const CkaMatrix::Entry> entries) {
    CkaMatrix m;
    m.update(entries);
    return m;
}

double emd(const LabelDistribution& p, const LabelDistribution& q) {
    if (p.probs.size() != q.probs.size()) throw ShapeError("emd: distributions have different lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < p.probs.size(); ++i) s += std::abs(p.probs[i] - q.probs[i]);
    return s;
}

namespace {

double flat_distance(const ModelParams& a, const ModelParams& b) {
    if (!a.same_shape(b)) throw ShapeError("weight_divergence: model shapes differ");
    const auto fa = a.flatten(), fb = b.flatten();
    double s = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) s += (fa[i] - fb[i]) * (fa[i] - fb[i]);
    return std::sqrt(s);
}

double flat_norm(const ModelParams& a) {
    double s = 0.0;
    for (double v : a.flatten()) s += v * v;
    return std::sqrt(s);
}

}  // namespace

double weight_divergence(const ModelParams& w_a, const ModelParams& w_ref) {
    return weight_divergence(w_a, w_ref, w_ref);
}

double weight_divergence(const ModelParams& w_m, const ModelParams& w_n, const ModelParams& w_ref) {
    if (!w_m.same_shape(w_ref)) throw ShapeError("weight_divergence: model shapes differ");
    const double ref = flat_norm(w_ref);
    if (!(ref > 0.0)) throw DegenerateInputError("weight_divergence: reference model has zero norm");
    return flat_distance(w_m, w_n) / ref;
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("spearman: length mismatch");
    if (a.size() < 2) throw ArgumentError("spearman: need at least two observations");
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace dcfl
