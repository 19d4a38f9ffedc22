#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dcfl/augment.hpp"
#include "dcfl/dataset.hpp"
#include "dcfl/nn.hpp"

namespace dcfl {

/// Synthetic labeled images produced by one client. Rows are ordered by
/// class, then slot; freshly condensed sets hold exactly `ipc` rows for
/// each class in `classes`. Filtering may leave fewer.
struct CondensedSet {
    std::size_t owner = 0;
    Tensor2 images;
    std::vector<int> labels;
    std::vector<int> classes;
    std::size_t ipc = 0;
    std::size_t round_created = 0;

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }
    friend bool operator==(const CondensedSet&, const CondensedSet&) = default;
};

struct DmOptions {
    std::size_t ipc = 10;
    std::size_t iterations = 100;
    double lr = 0.1;                     // step size on synthetic pixels
    std::size_t real_batch = 64;         // real samples per class per iteration
    std::vector<std::size_t> hidden = {128};  // extractor hidden widths; empty = identity
    AugmentPolicy augment;
};

/// Per-iteration matching loss (before that iteration's update).
struct DmTrace {
    std::vector<double> loss;
};

/// Condensation backend.
class Condenser {
public:
    virtual ~Condenser() = default;
    virtual CondensedSet condense(const Dataset& ds, std::span<const std::size_t> indices, std::size_t owner,
                                  std::uint64_t seed) const = 0;
};

/// Distribution matching: synthetic images start as random real samples of
/// their class and are moved so that their mean embedding under a freshly
/// drawn random extractor matches the real class mean embedding.
CondensedSet condense_dm(const Dataset& ds, std::span<const std::size_t> indices, std::uint64_t seed,
                         const DmOptions& opts, DmTrace* trace = nullptr);

class DmCondenser final : public Condenser {
public:
    explicit DmCondenser(DmOptions opts) : opts_(std::move(opts)) {}
    CondensedSet condense(const Dataset& ds, std::span<const std::size_t> indices, std::size_t owner,
                          std::uint64_t seed) const override;
    const DmOptions& options() const noexcept { return opts_; }

private:
    DmOptions opts_;
};

/// Matching loss sum_c ||mean f(real_c) - mean f(syn_c)||^2 averaged over
/// `extractors` seeded random extractors, full real class sets, no
/// augmentation.
double dm_matching_loss(const Dataset& ds, std::span<const std::size_t> indices, const CondensedSet& syn,
                        std::span<const std::size_t> hidden, std::uint64_t seed, std::size_t extractors = 8);

enum class FilterKeep { LowLoss, HighLoss };

/// Scores every synthetic example by its cross-entropy under `scorer` and
/// drops floor(r * N) of them across the pooled sets: the highest-loss ones
/// for FilterKeep::LowLoss, the lowest-loss ones for HighLoss. Ties go by
/// set position then row. Survivors keep their set and order.
std::vector<CondensedSet> filter_condensed(std::span<const CondensedSet> sets, const ModelParams& scorer, double r,
                                           FilterKeep keep = FilterKeep::LowLoss);

/// Same, with caller-supplied per-example scores (scores[i][j] for row j of
/// set i).
std::vector<CondensedSet> filter_by_scores(std::span<const CondensedSet> sets,
                                           const std::vector<std::vector<double>>& scores, double r,
                                           FilterKeep keep = FilterKeep::LowLoss);

/// Concatenates the images and labels of several sets.
CondensedSet pool(std::span<const CondensedSet> sets, std::size_t owner = 0);

// Binary format: "DCFLC\0", u32 owner, u32 ipc, u32 class count, u32 per
// class, u32 rows, u32 cols, rows*cols f64 pixels, rows u32 labels.
std::vector<std::uint8_t> serialize(const CondensedSet& set);
CondensedSet deserialize_condensed(std::span<const std::uint8_t> bytes);
/// Number of f64 values (pixels) carried by a serialized condensed payload.
std::size_t condensed_payload_floats(std::span<const std::uint8_t> bytes);

}  // namespace dcfl
