#include "dcfl/condense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bytes.hpp"
#include "dcfl/rng.hpp"

namespace dcfl {

namespace {

struct ClassIndex {
    std::vector<int> classes;
    std::vector<std::vector<std::size_t>> members;  // aligned with classes
};

ClassIndex group_by_class(const Dataset& ds, std::span<const std::size_t> indices) {
    std::vector<std::vector<std::size_t>> by(static_cast<std::size_t>(ds.num_classes));
    for (auto i : indices) {
        if (i >= ds.size()) throw ArgumentError("condense: index out of range");
        by[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    }
    ClassIndex ci;
    for (std::size_t c = 0; c < by.size(); ++c) {
        if (by[c].empty()) continue;
        ci.classes.push_back(static_cast<int>(c));
        ci.members.push_back(std::move(by[c]));
    }
    return ci;
}

// k distinct picks when possible, otherwise every member cycled.
std::vector<std::size_t> sample_members(const std::vector<std::size_t>& members, std::size_t k, Rng& rng) {
    std::vector<std::size_t> pool = members;
    std::vector<std::size_t> out;
    out.reserve(k);
    while (out.size() < k) {
        const std::size_t take = std::min(k - out.size(), pool.size());
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t j = i + uniform_index(rng, pool.size() - i);
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
    }
    return out;
}

std::vector<double> column_mean(const Tensor2& t) {
    std::vector<double> m(t.cols(), 0.0);
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto row = t.row(r);
        for (std::size_t j = 0; j < m.size(); ++j) m[j] += row[j];
    }
    for (auto& v : m) v /= static_cast<double>(t.rows());
    return m;
}

std::vector<std::size_t> extractor_widths(std::size_t dim, std::span<const std::size_t> hidden) {
    std::vector<std::size_t> w{dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    return w;
}

// Embedding of a batch; identity when there is no hidden layer.
struct Embedder {
    std::optional<ModelParams> net;

    Embedder(std::size_t dim, std::span<const std::size_t> hidden, std::uint64_t seed) {
        if (!hidden.empty()) net = ModelParams::glorot(extractor_widths(dim, hidden), seed);
    }
    Tensor2 embed(const Tensor2& x) const { return net ? forward(*net, x, true).logits : x; }
};

Tensor2 rows_of_class(const CondensedSet& s, std::size_t first, std::size_t count) {
    std::vector<std::size_t> rows(count);
    std::iota(rows.begin(), rows.end(), first);
    return gather_rows(s.images, rows);
}

}  // namespace

CondensedSet condense_dm(const Dataset& ds, std::span<const std::size_t> indices, std::uint64_t seed,
                         const DmOptions& opts, DmTrace* trace) {
    if (opts.ipc < 1) throw ArgumentError("condense_dm: ipc must be >= 1");
    if (indices.empty()) throw CondensationError("condense_dm: client owns no real samples");
    const ClassIndex ci = group_by_class(ds, indices);
    const std::size_t dim = ds.dim();
    const std::size_t ipc = opts.ipc;

    Rng rng = make_rng(seed, {kStreamCondense});
    CondensedSet out;
    out.ipc = ipc;
    out.classes = ci.classes;
    out.images = Tensor2(ci.classes.size() * ipc, dim);
    for (std::size_t k = 0; k < ci.classes.size(); ++k) {
        const auto picks = sample_members(ci.members[k], ipc, rng);
        for (std::size_t s = 0; s < ipc; ++s) {
            std::copy_n(ds.images.row(picks[s]).data(), dim, out.images.row(k * ipc + s).data());
            out.labels.push_back(ci.classes[k]);
        }
    }
    if (trace) trace->loss.clear();

    for (std::size_t it = 0; it < opts.iterations; ++it) {
        const Embedder emb(dim, opts.hidden, derive_seed(seed, {kStreamCondense, it, 1}));
        double total = 0.0;
        for (std::size_t k = 0; k < ci.classes.size(); ++k) {
            const auto real_idx = sample_members(ci.members[k], std::min(opts.real_batch, ci.members[k].size()), rng);
            const Tensor2 syn = rows_of_class(out, k * ipc, ipc);
            const auto transform = SampledTransform::draw(opts.augment, ds.shape, rng);
            const Tensor2 real_aug = transform.apply(gather_rows(ds.images, real_idx));
            const Tensor2 syn_aug = transform.apply(syn);

            const auto mean_real = column_mean(emb.embed(real_aug));
            Tensor2 grad_in;
            if (emb.net) {
                const auto cache = forward(*emb.net, syn_aug, true);
                const auto mean_syn = column_mean(cache.logits);
                Tensor2 dfeat(ipc, mean_syn.size());
                for (std::size_t j = 0; j < mean_syn.size(); ++j) {
                    const double diff = mean_syn[j] - mean_real[j];
                    total += diff * diff;
                    for (std::size_t s = 0; s < ipc; ++s) dfeat(s, j) = 2.0 * diff / static_cast<double>(ipc);
                }
                grad_in = std::move(*backward(*emb.net, cache, dfeat, true).dinput);
            } else {
                const auto mean_syn = column_mean(syn_aug);
                grad_in = Tensor2(ipc, dim);
                for (std::size_t j = 0; j < dim; ++j) {
                    const double diff = mean_syn[j] - mean_real[j];
                    total += diff * diff;
                    for (std::size_t s = 0; s < ipc; ++s) grad_in(s, j) = 2.0 * diff / static_cast<double>(ipc);
                }
            }
            const Tensor2 grad = transform.backprop(syn, grad_in);
            for (std::size_t s = 0; s < ipc; ++s) {
                auto row = out.images.row(k * ipc + s);
                const auto g = grad.row(s);
                for (std::size_t j = 0; j < dim; ++j) row[j] = std::clamp(row[j] - opts.lr * g[j], 0.0, 1.0);
            }
        }
        if (!std::isfinite(total)) throw NumericError("condense_dm: non-finite matching loss");
        if (trace) trace->loss.push_back(total);
    }
    return out;
}

CondensedSet DmCondenser::condense(const Dataset& ds, std::span<const std::size_t> indices, std::size_t owner,
                                   std::uint64_t seed) const {
    CondensedSet s = condense_dm(ds, indices, seed, opts_);
    s.owner = owner;
    return s;
}

double dm_matching_loss(const Dataset& ds, std::span<const std::size_t> indices, const CondensedSet& syn,
                        std::span<const std::size_t> hidden, std::uint64_t seed, std::size_t extractors) {
    const ClassIndex ci = group_by_class(ds, indices);
    double total = 0.0;
    for (std::size_t e = 0; e < extractors; ++e) {
        const Embedder emb(ds.dim(), hidden, derive_seed(seed, {kStreamCondense, e, 2}));
        for (std::size_t k = 0; k < ci.classes.size(); ++k) {
            std::vector<std::size_t> rows;
            for (std::size_t r = 0; r < syn.size(); ++r)
                if (syn.labels[r] == ci.classes[k]) rows.push_back(r);
            if (rows.empty()) continue;
            const auto mr = column_mean(emb.embed(gather_rows(ds.images, ci.members[k])));
            const auto ms = column_mean(emb.embed(gather_rows(syn.images, rows)));
            for (std::size_t j = 0; j < mr.size(); ++j) total += (mr[j] - ms[j]) * (mr[j] - ms[j]);
        }
    }
    return total / static_cast<double>(extractors);
}

std::vector<CondensedSet> filter_by_scores(std::span<const CondensedSet> sets,
                                           const std::vector<std::vector<double>>& scores, double r,
                                           FilterKeep keep) {
    if (!(r >= 0.0 && r <= 1.0)) throw ArgumentError("filter_condensed: ratio must lie in [0, 1]");
    if (scores.size() != sets.size()) throw ShapeError("filter_condensed: one score list per set required");
    struct Item {
        double score;
        std::size_t set, row;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        if (scores[i].size() != sets[i].size()) throw ShapeError("filter_condensed: score count != set size");
        for (std::size_t j = 0; j < sets[i].size(); ++j) items.push_back({scores[i][j], i, j});
    }
    const auto drop = static_cast<std::size_t>(std::floor(r * static_cast<double>(items.size())));
    // Drop order: worst first under the chosen criterion, then by position.
    std::stable_sort(items.begin(), items.end(), [keep](const Item& a, const Item& b) {
        return keep == FilterKeep::LowLoss ? a.score > b.score : a.score < b.score;
    });
    std::vector<std::vector<char>> dropped(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i) dropped[i].assign(sets[i].size(), 0);
    for (std::size_t k = 0; k < drop; ++k) dropped[items[k].set][items[k].row] = 1;

    std::vector<CondensedSet> out;
    out.reserve(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const auto& s = sets[i];
        std::vector<std::size_t> keep_rows;
        for (std::size_t j = 0; j < s.size(); ++j)
            if (!dropped[i][j]) keep_rows.push_back(j);
        CondensedSet f;
        f.owner = s.owner;
        f.ipc = s.ipc;
        f.round_created = s.round_created;
        f.images = keep_rows.size() == s.size() ? s.images : gather_rows(s.images, keep_rows);
        if (keep_rows.empty()) f.images = Tensor2(0, s.images.cols());
        for (auto j : keep_rows) f.labels.push_back(s.labels[j]);
        for (int c : s.classes)
            if (std::find(f.labels.begin(), f.labels.end(), c) != f.labels.end()) f.classes.push_back(c);
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<CondensedSet> filter_condensed(std::span<const CondensedSet> sets, const ModelParams& scorer, double r,
                                           FilterKeep keep) {
    if (!(r >= 0.0 && r <= 1.0)) throw ArgumentError("filter_condensed: ratio must lie in [0, 1]");
    if (r == 0.0) return {sets.begin(), sets.end()};
    std::vector<std::vector<double>> scores;
    scores.reserve(sets.size());
    for (const auto& s : sets)
        scores.push_back(s.empty() ? std::vector<double>{} : per_example_loss(forward(scorer, s.images).logits, s.labels));
    return filter_by_scores(sets, scores, r, keep);
}

CondensedSet pool(std::span<const CondensedSet> sets, std::size_t owner) {
    CondensedSet p;
    p.owner = owner;
    std::size_t rows = 0, cols = 0;
    for (const auto& s : sets) {
        rows += s.size();
        if (!s.empty()) cols = s.images.cols();
    }
    p.images = Tensor2(rows, cols);
    std::size_t r = 0;
    for (const auto& s : sets) {
        for (std::size_t j = 0; j < s.size(); ++j, ++r) {
            if (s.images.cols() != cols) throw ShapeError("pool: image sizes differ");
            std::copy_n(s.images.row(j).data(), cols, p.images.row(r).data());
            p.labels.push_back(s.labels[j]);
        }
        p.ipc = std::max(p.ipc, s.ipc);
    }
    p.classes = p.labels;
    std::sort(p.classes.begin(), p.classes.end());
    p.classes.erase(std::unique(p.classes.begin(), p.classes.end()), p.classes.end());
    return p;
}

namespace {
constexpr std::string_view kCondensedMagic{"DCFLC\0", 6};
}

std::vector<std::uint8_t> serialize(const CondensedSet& set) {
    detail::ByteWriter w;
    w.raw(kCondensedMagic);
    w.u32(static_cast<std::uint32_t>(set.owner));
    w.u32(static_cast<std::uint32_t>(set.ipc));
    w.u32(static_cast<std::uint32_t>(set.classes.size()));
    for (int c : set.classes) w.u32(static_cast<std::uint32_t>(c));
    w.u32(static_cast<std::uint32_t>(set.images.rows()));
    w.u32(static_cast<std::uint32_t>(set.images.cols()));
    w.f64s(set.images.flat());
    for (int y : set.labels) w.u32(static_cast<std::uint32_t>(y));
    return w.take();
}

CondensedSet deserialize_condensed(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic(kCondensedMagic);
    CondensedSet s;
    s.owner = r.u32();
    s.ipc = r.u32();
    const std::uint32_t nc = r.u32();
    for (std::uint32_t i = 0; i < nc; ++i) s.classes.push_back(static_cast<int>(r.u32()));
    const std::uint32_t rows = r.u32(), cols = r.u32();
    s.images = Tensor2(rows, cols);
    r.f64s(s.images.storage().data(), s.images.size());
    for (std::uint32_t i = 0; i < rows; ++i) s.labels.push_back(static_cast<int>(r.u32()));
    if (!r.done()) throw FormatError("condensed payload: trailing bytes");
    return s;
}

std::size_t condensed_payload_floats(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic(kCondensedMagic);
    r.u32();
    r.u32();
    const std::uint32_t nc = r.u32();
    for (std::uint32_t i = 0; i < nc; ++i) r.u32();
    const std::size_t rows = r.u32(), cols = r.u32();
    r.skip_f64s(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) r.u32();
    if (!r.done()) throw FormatError("condensed payload: trailing bytes");
    return rows * cols;
}

}  // namespace dcfl
