#include "dcfl/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "dcfl/rng.hpp"

namespace dcfl {

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    return by_class;
}

std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> p(k);
    double sum = 0.0;
    // Tiny alphas can underflow every component to zero; draw again.
    while (!(sum > 0.0)) {
        sum = 0.0;
        for (auto& v : p) {
            v = gamma(rng);
            sum += v;
        }
    }
    for (auto& v : p) v /= sum;
    return p;
}

// Cuts `items` into consecutive pieces with sizes floor(cumsum(weights) * n).
void cut_by_weights(const std::vector<std::size_t>& items, const std::vector<double>& weights,
                    std::vector<std::vector<std::size_t>>& sinks, std::span<const std::size_t> sink_ids) {
    const std::size_t n = items.size();
    double cum = 0.0;
    std::size_t start = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        cum += weights[k];
        const std::size_t end =
            k + 1 == weights.size() ? n : std::min(n, static_cast<std::size_t>(std::floor(cum * static_cast<double>(n))));
        for (std::size_t i = start; i < std::max(start, end); ++i) sinks[sink_ids[k]].push_back(items[i]);
        start = std::max(start, end);
    }
}

bool any_empty(const Partition& p) {
    return std::any_of(p.clients.begin(), p.clients.end(), [](const auto& c) { return c.empty(); });
}

void sort_clients(Partition& p) {
    for (auto& c : p.clients) std::sort(c.begin(), c.end());
}

}  // namespace

std::size_t Partition::total() const noexcept {
    std::size_t n = 0;
    for (const auto& c : clients) n += c.size();
    return n;
}

void Partition::validate(std::size_t dataset_size) const {
    std::vector<char> used(dataset_size, 0);
    for (std::size_t k = 0; k < clients.size(); ++k) {
        if (clients[k].empty()) throw PartitionError("partition: client " + std::to_string(k) + " is empty");
        for (auto i : clients[k]) {
            if (i >= dataset_size) throw PartitionError("partition: index out of range");
            if (used[i]) throw PartitionError("partition: index assigned twice");
            used[i] = 1;
        }
    }
}

Partition dirichlet_partition(const Dataset& ds, std::size_t num_clients, double alpha, std::uint64_t seed) {
    if (num_clients < 1) throw ArgumentError("dirichlet_partition: need at least one client");
    if (!(alpha > 0.0)) throw ArgumentError("dirichlet_partition: alpha must be positive");
    Rng rng = make_rng(seed, {kStreamPartition});
    const auto by_class = indices_by_class(ds);
    std::vector<std::size_t> ids(num_clients);
    std::iota(ids.begin(), ids.end(), 0);

    for (int attempt = 0; attempt < kPartitionRetries; ++attempt) {
        Partition p;
        p.clients.resize(num_clients);
        for (const auto& cls : by_class) {
            auto shuffled = cls;
            shuffle(shuffled.begin(), shuffled.end(), rng);
            const auto props = sample_dirichlet(num_clients, alpha, rng);
            cut_by_weights(shuffled, props, p.clients, ids);
        }
        if (!any_empty(p)) {
            sort_clients(p);
            return p;
        }
    }
    throw PartitionError("dirichlet_partition: could not avoid empty clients within the retry budget");
}

Partition pathological_partition(const Dataset& ds, std::size_t num_clients, std::size_t classes_per_client,
                                 std::uint64_t seed) {
    const auto classes = static_cast<std::size_t>(ds.num_classes);
    if (num_clients < 1 || classes_per_client < 1) throw PartitionError("pathological_partition: counts must be >= 1");
    if (classes_per_client > classes)
        throw PartitionError("pathological_partition: more classes per client than classes");
    const std::size_t shards = num_clients * classes_per_client;
    if (shards < classes) throw PartitionError("pathological_partition: fewer shards than classes");

    Rng rng = make_rng(seed, {kStreamPartition});
    auto by_class = indices_by_class(ds);

    // Classes in random order; the first (shards % classes) get one extra shard.
    std::vector<std::size_t> class_order(classes);
    std::iota(class_order.begin(), class_order.end(), 0);
    shuffle(class_order.begin(), class_order.end(), rng);
    std::vector<std::size_t> shard_count(classes, shards / classes);
    for (std::size_t i = 0; i < shards % classes; ++i) ++shard_count[class_order[i]];

    // Shard list grouped by class; a class never spans more than num_clients
    // consecutive slots, so round-robin dealing gives distinct classes.
    std::vector<std::vector<std::size_t>> shard_list;
    for (auto c : class_order) {
        auto& idx = by_class[c];
        if (idx.size() < shard_count[c])
            throw PartitionError("pathological_partition: class " + std::to_string(c) + " has too few samples");
        shuffle(idx.begin(), idx.end(), rng);
        const std::size_t s = shard_count[c];
        for (std::size_t j = 0; j < s; ++j) {
            const std::size_t lo = idx.size() * j / s, hi = idx.size() * (j + 1) / s;
            shard_list.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                    idx.begin() + static_cast<std::ptrdiff_t>(hi));
        }
    }

    std::vector<std::size_t> client_order(num_clients);
    std::iota(client_order.begin(), client_order.end(), 0);
    shuffle(client_order.begin(), client_order.end(), rng);

    Partition p;
    p.clients.resize(num_clients);
    for (std::size_t j = 0; j < shard_list.size(); ++j) {
        auto& dst = p.clients[client_order[j % num_clients]];
        dst.insert(dst.end(), shard_list[j].begin(), shard_list[j].end());
    }
    sort_clients(p);
    return p;
}

std::vector<std::size_t> group_membership(std::span<const std::size_t> group_sizes) {
    std::vector<std::size_t> g;
    for (std::size_t i = 0; i < group_sizes.size(); ++i) g.insert(g.end(), group_sizes[i], i);
    return g;
}

Partition grouped_partition(const Dataset& ds, std::span<const std::size_t> group_sizes, double alpha,
                            std::uint64_t seed) {
    if (group_sizes.empty()) throw ArgumentError("grouped_partition: no groups");
    if (std::any_of(group_sizes.begin(), group_sizes.end(), [](auto s) { return s == 0; }))
        throw ArgumentError("grouped_partition: empty group");
    if (!(alpha > 0.0)) throw ArgumentError("grouped_partition: alpha must be positive");
    const std::size_t num_groups = group_sizes.size();
    const std::size_t num_clients = std::accumulate(group_sizes.begin(), group_sizes.end(), std::size_t{0});
    const auto classes = static_cast<std::size_t>(ds.num_classes);

    Rng rng = make_rng(seed, {kStreamPartition});
    const auto by_class = indices_by_class(ds);
    std::vector<std::size_t> group_ids(num_groups);
    std::iota(group_ids.begin(), group_ids.end(), 0);

    for (int attempt = 0; attempt < kPartitionRetries; ++attempt) {
        std::vector<std::vector<double>> mixture(num_groups);
        for (auto& m : mixture) m = sample_dirichlet(classes, alpha, rng);

        std::vector<std::vector<std::size_t>> per_group(num_groups);
        Partition p;
        p.clients.resize(num_clients);
        for (std::size_t c = 0; c < classes; ++c) {
            std::vector<double> w(num_groups);
            double total = 0.0;
            for (std::size_t g = 0; g < num_groups; ++g) {
                w[g] = static_cast<double>(group_sizes[g]) * mixture[g][c];
                total += w[g];
            }
            for (auto& v : w) v = total > 0.0 ? v / total : 1.0 / static_cast<double>(num_groups);
            auto shuffled = by_class[c];
            shuffle(shuffled.begin(), shuffled.end(), rng);
            std::vector<std::vector<std::size_t>> slices(num_groups);
            cut_by_weights(shuffled, w, slices, group_ids);
            // Even split of the group's slice among its members.
            std::size_t first_client = 0;
            for (std::size_t g = 0; g < num_groups; ++g) {
                const auto& s = slices[g];
                const std::size_t m = group_sizes[g];
                for (std::size_t j = 0; j < m; ++j) {
                    const std::size_t lo = s.size() * j / m, hi = s.size() * (j + 1) / m;
                    auto& dst = p.clients[first_client + j];
                    dst.insert(dst.end(), s.begin() + static_cast<std::ptrdiff_t>(lo),
                               s.begin() + static_cast<std::ptrdiff_t>(hi));
                }
                first_client += m;
            }
        }
        if (!any_empty(p)) {
            sort_clients(p);
            return p;
        }
    }
    throw PartitionError("grouped_partition: could not avoid empty clients within the retry budget");
}

LabelDistribution label_distribution(const Dataset& ds, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ArgumentError("label_distribution: empty index set");
    LabelDistribution d;
    d.probs.assign(static_cast<std::size_t>(ds.num_classes), 0.0);
    for (auto i : indices) d.probs[static_cast<std::size_t>(ds.labels[i])] += 1.0;
    for (auto& v : d.probs) v /= static_cast<double>(indices.size());
    return d;
}

double classes_per_client(const Dataset& ds, const Partition& part) {
    if (part.clients.empty()) return 0.0;
    double total = 0.0;
    for (const auto& c : part.clients) {
        std::vector<char> present(static_cast<std::size_t>(ds.num_classes), 0);
        for (auto i : c) present[static_cast<std::size_t>(ds.labels[i])] = 1;
        total += static_cast<double>(std::count(present.begin(), present.end(), 1));
    }
    return total / static_cast<double>(part.clients.size());
}

}  // namespace dcfl
