#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dcfl/dataset.hpp"

namespace dcfl {

/// Per-client index sets into one Dataset.
struct Partition {
    std::vector<std::vector<std::size_t>> clients;

    std::size_t num_clients() const noexcept { return clients.size(); }
    std::size_t total() const noexcept;

    /// Checks disjointness, bounds and non-emptiness; throws PartitionError.
    void validate(std::size_t dataset_size) const;

    friend bool operator==(const Partition&, const Partition&) = default;
};

struct LabelDistribution {
    std::vector<double> probs;
};

/// Retry budget for partitioners that re-draw when a client ends up empty.
inline constexpr int kPartitionRetries = 32;

/// Per class: proportions ~ Dirichlet(alpha 1_K), shuffled class indices cut
/// at floor(cumsum * n_c).
Partition dirichlet_partition(const Dataset& ds, std::size_t num_clients, double alpha, std::uint64_t seed);

/// Shard dealing: num_clients * classes_per_client shards spread over the
/// classes as evenly as possible; every client receives shards of
/// `classes_per_client` distinct classes.
Partition pathological_partition(const Dataset& ds, std::size_t num_clients, std::size_t classes_per_client,
                                 std::uint64_t seed);

/// Clients are laid out group after group. Each group draws one class
/// mixture ~ Dirichlet(alpha 1_C); each class is split across groups in
/// proportion to size * mixture and then evenly among the group's clients,
/// so clients of one group share a label distribution.
Partition grouped_partition(const Dataset& ds, std::span<const std::size_t> group_sizes, double alpha,
                            std::uint64_t seed);

/// Group index of every client under grouped_partition's layout.
std::vector<std::size_t> group_membership(std::span<const std::size_t> group_sizes);

LabelDistribution label_distribution(const Dataset& ds, std::span<const std::size_t> indices);

/// Mean number of distinct classes per client.
double classes_per_client(const Dataset& ds, const Partition& part);

}  // namespace dcfl
