#include "dcfl/federation.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <filesystem>
#include <cmath>
#include <numeric>

namespace dcfl {

std::string_view to_string(Aggregation a) {
    switch (a) {
        case Aggregation::FedAvg: return "fedavg";
        case Aggregation::FedProx: return "fedprox";
        case Aggregation::FedNova: return "fednova";
    }
    return "?";
}
std::string_view to_string(Selection s) { return s == Selection::Random ? "random" : "cka_guided"; }
std::string_view to_string(DatasetKind d) {
    switch (d) {
        case DatasetKind::Blobs: return "blobs";
        case DatasetKind::Mnist: return "mnist";
        case DatasetKind::Fashion: return "fashion";
    }
    return "?";
}
std::string_view to_string(PartitionKind p) {
    switch (p) {
        case PartitionKind::Dirichlet: return "dirichlet";
        case PartitionKind::Pathological: return "pathological";
        case PartitionKind::Grouped: return "grouped";
    }
    return "?";
}
std::string_view to_string(CkaMode m) { return m == CkaMode::Weights ? "weights" : "activations"; }
std::string_view to_string(FilterKeep k) { return k == FilterKeep::LowLoss ? "low_loss" : "high_loss"; }

namespace {

void require(bool ok, const char* field, const std::string& what) {
    if (!ok) throw ValidationError(field, what);
}

std::size_t fraction_count(double f, std::size_t K) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(f * static_cast<double>(K) + 1e-9)));
}

}  // namespace

void ExperimentConfig::validate() const {
    require(K >= 1, "K", "need at least one client");
    require(C_com > 0.0 && C_com <= 1.0, "C_com", "must lie in (0, 1]");
    require(C_pre > 0.0 && C_pre <= 1.0, "C_pre", "must lie in (0, 1]");
    require(epsilon >= 0.0 && epsilon <= 1.0, "epsilon", "must lie in [0, 1]");
    require(r >= 0.0 && r <= 1.0, "r", "must lie in [0, 1]");
    require(eta_c > 0.0 && std::isfinite(eta_c), "eta_c", "must be positive");
    require(eta_s > 0.0 && std::isfinite(eta_s), "eta_s", "must be positive");
    require(B_c >= 1, "B_c", "must be >= 1");
    require(B_s >= 1, "B_s", "must be >= 1");
    require(E_c >= 1, "E_c", "must be >= 1");
    require(ipc >= 1, "ipc", "must be >= 1");
    require(mu >= 0.0, "mu", "must be >= 0");
    require(alpha > 0.0, "alpha", "must be positive");
    require(condense_lr > 0.0, "condense_lr", "must be positive");
    require(condense_real_batch >= 1, "condense_real_batch", "must be >= 1");
    require(!seeds.empty(), "seeds", "need at least one seed");
    for (auto h : hidden) require(h >= 1, "hidden", "layer widths must be >= 1");
    const int classes = dataset == DatasetKind::Blobs ? blob_classes : 10;
    if (dataset == DatasetKind::Blobs) {
        require(blob_classes >= 2, "blob_classes", "need at least two classes");
        require(blob_dim >= 1, "blob_dim", "must be >= 1");
        require(blob_train_per_class >= 1, "blob_train_per_class", "must be >= 1");
        require(blob_test_per_class >= 1, "blob_test_per_class", "must be >= 1");
        require(blob_spread >= 0.0, "blob_spread", "must be >= 0");
    }
    if (partition == PartitionKind::Pathological) {
        require(classes_per_client >= 1 && classes_per_client <= static_cast<std::size_t>(classes),
                "classes_per_client", "must lie in [1, classes]");
        require(K * classes_per_client >= static_cast<std::size_t>(classes), "classes_per_client",
                "K * classes_per_client must cover every class");
    }
    if (partition == PartitionKind::Grouped) {
        require(!group_sizes.empty(), "group_sizes", "need at least one group");
        require(std::accumulate(group_sizes.begin(), group_sizes.end(), std::size_t{0}) == K, "group_sizes",
                "group sizes must sum to K");
    }
    if (cka_mode == CkaMode::Activations) require(probe_size >= 2, "probe_size", "must be >= 2");
    require(!augment.enabled || !augment.ops.empty(), "augment", "enabled policy without ops");
}

std::vector<std::size_t> ExperimentConfig::model_widths(std::size_t input_dim, std::size_t num_classes) const {
    std::vector<std::size_t> w{input_dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(num_classes);
    return w;
}

std::size_t ExperimentConfig::participants_per_round() const { return fraction_count(C_com, K); }
std::size_t ExperimentConfig::pretrain_participants() const { return fraction_count(C_pre, K); }
std::size_t ExperimentConfig::complement_size() const {
    return group_size > 0 ? group_size : participants_per_round() - 1;
}

ExperimentConfig as_tradition(ExperimentConfig cfg) {
    cfg.selection = Selection::Random;
    cfg.condensation = false;
    cfg.M = 0;
    cfg.augment = AugmentPolicy::none();
    return cfg;
}

bool ServerState::is_seen(std::size_t k) const { return std::binary_search(seen.begin(), seen.end(), k); }

void ServerState::check() const {
    if (cka.clients() != seen) throw StateError("server state: CKA clients differ from the seen set");
    for (const auto& [k, _] : store)
        if (!is_seen(k)) throw StateError("server state: condensed store holds an unseen client");
}

FederationContext::FederationContext(ExperimentConfig c, Dataset tr, Dataset te, Partition p)
    : cfg(std::move(c)), train(std::move(tr)), test(std::move(te)), partition(std::move(p)) {
    partition.validate(train.size());
    if (partition.num_clients() != cfg.K) throw ConsistencyError("federation: partition size != K");
    Rng rng = make_rng(cfg.seed, {kStreamProbe});
    probe = Tensor2(cfg.probe_size, train.dim());
    for (auto& v : probe.flat()) v = uniform01(rng);
}

FederationContext FederationContext::build(const ExperimentConfig& cfg) {
    cfg.validate();
    Dataset train, test;
    if (cfg.dataset == DatasetKind::Blobs) {
        const Dataset all = synthetic_blobs(cfg.blob_classes, cfg.blob_train_per_class + cfg.blob_test_per_class,
                                            cfg.blob_dim, cfg.blob_spread, derive_seed(cfg.seed, {kStreamData}));
        std::tie(train, test) = split_per_class(all, cfg.blob_train_per_class);
    } else {
        const std::filesystem::path dir(cfg.data_dir);
        train = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", 10);
        test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", 10);
    }
    const std::uint64_t ps = derive_seed(cfg.seed, {kStreamPartition});
    Partition part;
    switch (cfg.partition) {
        case PartitionKind::Dirichlet: part = dirichlet_partition(train, cfg.K, cfg.alpha, ps); break;
        case PartitionKind::Pathological: part = pathological_partition(train, cfg.K, cfg.classes_per_client, ps); break;
        case PartitionKind::Grouped: part = grouped_partition(train, cfg.group_sizes, cfg.alpha, ps); break;
    }
    return FederationContext(cfg, std::move(train), std::move(test), std::move(part));
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, Rng& rng) {
    if (batch == 0) throw ArgumentError("epoch_batches: batch must be >= 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; i += batch)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
    return out;
}

std::size_t train_sgd(ModelParams& params, const ModelParams& anchor, const Tensor2& images,
                      std::span<const int> labels, std::span<const std::size_t> rows, const TrainSpec& spec,
                      Rng& rng) {
    std::size_t steps = 0;
    std::vector<std::size_t> idx;
    std::vector<int> y;
    for (std::size_t e = 0; e < spec.epochs; ++e) {
        for (const auto& b : epoch_batches(rows.size(), spec.batch, rng)) {
            idx.clear();
            y.clear();
            for (auto i : b) {
                idx.push_back(rows[i]);
                y.push_back(labels[rows[i]]);
            }
            Tensor2 x = gather_rows(images, idx);
            if (spec.augment && spec.augment->enabled)
                x = SampledTransform::draw(*spec.augment, spec.shape, rng).apply(x);
            const auto cache = forward(params, x);
            const auto loss = cross_entropy(cache.logits, y);
            if (!std::isfinite(loss.loss)) throw NumericError("train_sgd: non-finite loss");
            auto grads = backward(params, cache, loss.dlogits, false);
            if (spec.mu > 0.0) add_proximal(grads, params, anchor, spec.mu);
            sgd_step_inplace(params, grads, spec.lr);
            ++steps;
        }
    }
    return steps;
}

namespace {

TrainSpec local_spec(const FederationContext& ctx, std::size_t epochs, std::size_t batch, double lr) {
    const auto& cfg = ctx.cfg;
    TrainSpec s;
    s.epochs = epochs;
    s.batch = batch;
    s.lr = lr;
    s.mu = cfg.aggregation == Aggregation::FedProx ? cfg.mu : 0.0;
    s.augment = cfg.augment.enabled ? &cfg.augment : nullptr;
    s.shape = ctx.train.shape;
    return s;
}

DmOptions dm_options(const ExperimentConfig& cfg) {
    DmOptions o;
    o.ipc = cfg.ipc;
    o.iterations = cfg.condense_iters;
    o.lr = cfg.condense_lr;
    o.real_batch = cfg.condense_real_batch;
    o.hidden = cfg.hidden;
    o.augment = cfg.augment;
    return o;
}

// Runs body(i) for i in [0, n), possibly concurrently; rethrows the first
// failure in index order.
template <class F>
void for_each_client(std::size_t n, F&& body) {
    std::vector<std::exception_ptr> errors(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
#ifdef DCFL_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic) if (n > 1)
#endif
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::size_t model_floats(const ModelParams& m) { return model_payload_floats(serialize(m)); }
std::size_t set_floats(const CondensedSet& s) { return condensed_payload_floats(serialize(s)); }

void insert_sorted(std::vector<std::size_t>& v, std::size_t k) {
    auto it = std::lower_bound(v.begin(), v.end(), k);
    if (it == v.end() || *it != k) v.insert(it, k);
}

}  // namespace

ClientResult client_update_wo_cd(const FederationContext& ctx, std::size_t k, const ModelParams& w, Rng& rng,
                                 bool condense) {
    if (k >= ctx.partition.num_clients()) throw ArgumentError("client_update: unknown client");
    const auto& shard = ctx.partition.clients[k];
    if (shard.empty()) throw ProtocolError("client_update: client " + std::to_string(k) + " has no data");
    ClientResult res{k, w, 0, 0, std::nullopt};
    if (condense) {
        res.condensed = condense_dm(ctx.train, shard, derive_seed(ctx.cfg.seed, {kStreamCondense, k}),
                                    dm_options(ctx.cfg));
        res.condensed->owner = k;
    }
    res.steps = train_sgd(res.model, w, ctx.train.images, ctx.train.labels, shard,
                          local_spec(ctx, ctx.cfg.E_c, ctx.cfg.B_c, ctx.cfg.eta_c), rng);
    return res;
}

ClientResult client_update_w_cd(const FederationContext& ctx, std::size_t k, const ModelParams& w,
                                const CondensedSet& own, std::span<const CondensedSet> received, Rng& rng) {
    ClientResult res = client_update_wo_cd(ctx, k, w, rng, false);
    std::vector<CondensedSet> parts{own};
    parts.insert(parts.end(), received.begin(), received.end());
    const CondensedSet aux = pool(parts, k);
    if (ctx.cfg.E_s == 0 || aux.empty()) return res;
    std::vector<std::size_t> rows(aux.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    res.steps += train_sgd(res.model, w, aux.images, aux.labels, rows,
                           local_spec(ctx, ctx.cfg.E_s, ctx.cfg.B_s, ctx.cfg.eta_s), rng);
    res.aux_used = aux.size();
    return res;
}

std::vector<double> exploit_probabilities(const CkaMatrix& cka, std::span<const std::size_t> candidates) {
    std::vector<double> p;
    p.reserve(candidates.size());
    double total = 0.0;
    for (auto c : candidates) {
        const double s = std::max(0.0, cka.off_diagonal_row_sum(c));
        p.push_back(s);
        total += s;
    }
    for (auto& v : p) v = total > 0.0 ? v / total : 1.0 / static_cast<double>(p.size());
    return p;
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
    if (probs.empty()) throw ArgumentError("sample_categorical: no outcomes");
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    // rounding left u beyond the last cumulative value: last positive entry
    for (std::size_t i = probs.size(); i-- > 0;)
        if (probs[i] > 0.0) return i;
    return probs.size() - 1;
}

std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t n, Rng& rng) {
    if (n > population) throw ArgumentError("sample_without_replacement: n > population");
    std::vector<std::size_t> v(population);
    std::iota(v.begin(), v.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) std::swap(v[i], v[i + uniform_index(rng, population - i)]);
    v.resize(n);
    return v;
}

std::vector<std::size_t> select_participants(const ServerState& state, const ExperimentConfig& cfg, Rng& rng) {
    const std::size_t n = cfg.participants_per_round();
    if (n > cfg.K) throw ConfigError("select_participants: more participants than clients");
    std::vector<std::size_t> out;
    if (cfg.selection == Selection::Random) {
        out = sample_without_replacement(cfg.K, n, rng);
        std::sort(out.begin(), out.end());
        return out;
    }
    // exploitation: sequential Eq.-4 draws over the seen set
    std::size_t exploit = static_cast<std::size_t>(std::floor(cfg.epsilon * static_cast<double>(n) + 1e-9));
    exploit = std::min(exploit, state.seen.size());
    std::vector<std::size_t> candidates = state.seen;
    for (std::size_t i = 0; i < exploit; ++i) {
        const auto p = exploit_probabilities(state.cka, candidates);
        const std::size_t j = sample_categorical(p, rng);
        out.push_back(candidates[j]);
        candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(j));
    }
    // exploration: uniform over unseen, then over the remaining seen
    std::vector<std::size_t> unseen;
    for (std::size_t k = 0; k < cfg.K; ++k)
        if (!state.is_seen(k)) unseen.push_back(k);
    for (auto* src : {&unseen, &candidates}) {
        const std::size_t take = std::min(n - out.size(), src->size());
        for (auto j : sample_without_replacement(src->size(), take, rng)) out.push_back((*src)[j]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::size_t> complement_group_for(std::size_t k, const CkaMatrix& cka, std::size_t group_size) {
    if (!cka.contains(k)) throw ArgumentError("complement_group_for: client not seen");
    std::vector<std::pair<double, std::size_t>> others;
    for (auto c : cka.clients())
        if (c != k) others.emplace_back(cka.at(k, c), c);
    std::sort(others.begin(), others.end());
    others.resize(std::min(group_size, others.size()));
    std::vector<std::size_t> out;
    for (const auto& [_, c] : others) out.push_back(c);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> optimized_weights(std::span<const std::size_t> shard_sizes,
                                      std::span<const std::size_t> aux_counts) {
    if (shard_sizes.empty()) throw ArgumentError("optimized_weights: no participants");
    if (shard_sizes.size() != aux_counts.size()) throw ShapeError("optimized_weights: size lists differ");
    std::vector<double> p(shard_sizes.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = static_cast<double>(shard_sizes[i] + aux_counts[i]);
        total += p[i];
    }
    if (total <= 0.0) throw DegenerateInputError("optimized_weights: all masses are zero");
    for (auto& v : p) v /= total;
    return p;
}

ModelParams aggregate(Aggregation strategy, const ModelParams& global, std::span<const WeightedModel> clients) {
    if (clients.empty()) throw ArgumentError("aggregate: no client models");
    double wsum = 0.0;
    for (const auto& c : clients) {
        if (!c.model->same_shape(global)) throw ShapeError("aggregate: client model shape differs");
        if (c.weight < 0.0) throw ArgumentError("aggregate: negative weight");
        wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw ArgumentError("aggregate: weights must sum to 1");

    const std::vector<double> w = global.flatten();
    std::vector<double> out(w.size(), 0.0);
    if (strategy == Aggregation::FedNova) {
        double tau_eff = 0.0;
        std::vector<double> d(w.size(), 0.0);
        for (const auto& c : clients) {
            if (c.steps == 0) throw ProtocolError("aggregate: fednova needs tau_k > 0");
            const auto wk = c.model->flatten();
            const double tau = static_cast<double>(c.steps);
            tau_eff += c.weight * tau;
            for (std::size_t i = 0; i < w.size(); ++i) d[i] += c.weight * ((w[i] - wk[i]) / tau);
        }
        for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] - tau_eff * d[i];
    } else {
        for (const auto& c : clients) {
            const auto wk = c.model->flatten();
            for (std::size_t i = 0; i < w.size(); ++i) out[i] += c.weight * wk[i];
        }
    }
    ModelParams next = global;
    next.assign_flat(out);
    return next;
}

Tensor2 cka_representation(const FederationContext& ctx, const ModelParams& model) {
    return ctx.cfg.cka_mode == CkaMode::Weights ? classifier_representation(model.classifier())
                                                : activation_representation(model, ctx.probe);
}

ServerState initial_state(const FederationContext& ctx) {
    ServerState s;
    s.global = ModelParams::glorot(ctx.cfg.model_widths(ctx.train.dim(), static_cast<std::size_t>(ctx.train.num_classes)),
                                   derive_seed(ctx.cfg.seed, {kStreamInit}));
    return s;
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(const FederationContext& ctx, Clock::time_point start) {
    if (!ctx.cfg.record_wall_time) return 0.0;
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

void pretrain_server(const FederationContext& ctx, ServerState& state) {
    const auto& cfg = ctx.cfg;
    const auto start = Clock::now();
    RoundMetrics m;
    m.round = 0;
    const std::size_t n = cfg.pretrain_participants();
    const ModelParams w0 = state.global;
    const std::size_t w0_floats = model_floats(w0);
    for (std::size_t mr = 0; mr < cfg.M; ++mr) {
        Rng sel_rng = make_rng(cfg.seed, {kStreamPretrain, mr});
        std::vector<std::size_t> fresh;
        for (auto k : sample_without_replacement(cfg.K, n, sel_rng))
            if (!state.is_seen(k)) fresh.push_back(k);
        std::sort(fresh.begin(), fresh.end());

        std::vector<ClientResult> results(fresh.size());
        for_each_client(fresh.size(), [&](std::size_t i) {
            Rng rng = make_rng(cfg.seed, {kStreamPretrain, mr, fresh[i]});
            results[i] = client_update_wo_cd(ctx, fresh[i], w0, rng, cfg.condensation);
        });

        std::vector<CkaMatrix::Entry> entries;
        for (auto& res : results) {
            m.model_down += w0_floats;
            // weights mode only needs the classifier on the server
            m.model_up += cfg.cka_mode == CkaMode::Weights ? model_floats(ModelParams({res.model.classifier()}))
                                                           : model_floats(res.model);
            if (res.condensed) {
                res.condensed->round_created = 0;
                m.condensed_up += set_floats(*res.condensed);
                state.store[res.client] = std::move(*res.condensed);
            }
            entries.push_back({res.client, cka_representation(ctx, res.model)});
            insert_sorted(state.seen, res.client);
            insert_sorted(m.selected, res.client);
        }
        state.cka.update(entries);
    }

    if (!state.store.empty()) {
        std::vector<CondensedSet> sets;
        for (const auto& [_, s] : state.store) sets.push_back(s);
        const CondensedSet all = pool(sets);
        std::vector<std::size_t> rows(all.size());
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        Rng rng = make_rng(cfg.seed, {kStreamServerTrain});
        TrainSpec spec;
        spec.epochs = cfg.E_c;
        spec.batch = cfg.B_s;
        spec.lr = cfg.eta_s;
        spec.augment = cfg.augment.enabled ? &cfg.augment : nullptr;
        spec.shape = ctx.train.shape;
        train_sgd(state.global, w0, all.images, all.labels, rows, spec, rng);
    }
    state.check();
    m.accuracy = evaluate(state.global, ctx.test);
    m.wall_ms = elapsed_ms(ctx, start);
    state.metrics.push_back(std::move(m));
}

const RoundMetrics& run_round(const FederationContext& ctx, ServerState& state) {
    const auto& cfg = ctx.cfg;
    const auto start = Clock::now();
    const std::size_t t = ++state.round;
    Rng sel_rng = make_rng(cfg.seed, {kStreamSelect, t});
    const auto selected = select_participants(state, cfg, sel_rng);

    RoundMetrics m;
    m.round = t;
    m.selected = selected;
    const std::size_t global_floats = model_floats(state.global);

    // Complement pools are built from the state as it was before the round.
    const std::size_t n = selected.size();
    std::vector<std::optional<std::vector<CondensedSet>>> received(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = selected[i];
        m.model_down += global_floats;
        if (!cfg.condensation || !state.store.count(k)) continue;
        std::vector<CondensedSet> sets;
        for (auto g : complement_group_for(k, state.cka, cfg.complement_size())) {
            auto it = state.store.find(g);
            if (it != state.store.end()) sets.push_back(it->second);
        }
        auto kept = filter_condensed(sets, state.global, cfg.r, cfg.filter_keep);
        for (const auto& s : kept) m.condensed_down += set_floats(s);
        received[i] = std::move(kept);
    }

    std::vector<ClientResult> results(n);
    for_each_client(n, [&](std::size_t i) {
        const std::size_t k = selected[i];
        Rng rng = make_rng(cfg.seed, {kStreamClient, t, k});
        results[i] = received[i] ? client_update_w_cd(ctx, k, state.global, state.store.at(k), *received[i], rng)
                                 : client_update_wo_cd(ctx, k, state.global, rng, cfg.condensation);
    });

    std::vector<CkaMatrix::Entry> entries;
    std::vector<std::size_t> sizes, aux;
    for (auto& res : results) {
        m.model_up += model_floats(res.model);
        if (!state.is_seen(res.client)) {
            entries.push_back({res.client, cka_representation(ctx, res.model)});
            if (res.condensed) {
                res.condensed->round_created = t;
                m.condensed_up += set_floats(*res.condensed);
                state.store[res.client] = std::move(*res.condensed);
            }
        }
        sizes.push_back(ctx.partition.clients[res.client].size());
        aux.push_back(res.aux_used);
    }
    for (const auto& e : entries) insert_sorted(state.seen, e.client);
    state.cka.update(entries);

    const auto p = optimized_weights(sizes, aux);
    std::vector<WeightedModel> members;
    for (std::size_t i = 0; i < n; ++i) members.push_back({&results[i].model, p[i], results[i].steps});
    state.global = aggregate(cfg.aggregation, state.global, members);
    state.check();

    m.accuracy = evaluate(state.global, ctx.test);
    m.wall_ms = elapsed_ms(ctx, start);
    state.metrics.push_back(std::move(m));
    return state.metrics.back();
}

CommFormula comm_formula(double K, double cpc, double ipc, double image_size, double C_com, double params) {
    CommFormula f;
    f.upload = K * cpc * ipc * image_size;
    f.download = K * (K * C_com - 1.0) * cpc * ipc * image_size;
    f.baseline_per_round = params * (K * C_com) * 2.0;
    return f;
}

CommReport comm_volume(const ExperimentConfig& cfg, const FederationContext& ctx, std::span<const RoundMetrics> log) {
    CommReport r;
    for (const auto& m : log) {
        r.model_up += m.model_up;
        r.model_down += m.model_down;
        r.condensed_up += m.condensed_up;
        r.condensed_down += m.condensed_down;
    }
    r.cpc = classes_per_client(ctx.train, ctx.partition);
    const auto widths = cfg.model_widths(ctx.train.dim(), static_cast<std::size_t>(ctx.train.num_classes));
    const double params = static_cast<double>(ModelParams::zeros(widths).param_count());
    r.formula = comm_formula(static_cast<double>(cfg.K), r.cpc, static_cast<double>(cfg.ipc),
                             static_cast<double>(ctx.train.dim()), cfg.C_com, params);
    if (!cfg.condensation) r.formula.upload = r.formula.download = 0.0;
    return r;
}

ExperimentResult run_experiment(const FederationContext& ctx) {
    ExperimentResult res;
    res.state = initial_state(ctx);
    pretrain_server(ctx, res.state);
    for (std::size_t t = 0; t < ctx.cfg.T; ++t) run_round(ctx, res.state);
    res.comm = comm_volume(ctx.cfg, ctx, res.state.metrics);
    res.data_fingerprint = fingerprint(ctx.train);
    return res;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) { return run_experiment(FederationContext::build(cfg)); }

std::optional<std::size_t> rounds_to_accuracy(std::span<const RoundMetrics> log, double target) {
    for (const auto& m : log)
        if (m.round >= 1 && m.accuracy >= target) return m.round;
    return std::nullopt;
}

ComplementarityStudy complementarity_study(const ExperimentConfig& cfg, std::size_t local_epochs) {
    const FederationContext ctx = FederationContext::build(cfg);
    const ModelParams w0 = initial_state(ctx).global;
    const std::size_t K = cfg.K;
    std::vector<ModelParams> models(K, w0);
    for_each_client(K, [&](std::size_t k) {
        Rng rng = make_rng(cfg.seed, {kStreamClient, 0, k});
        TrainSpec spec;
        spec.epochs = local_epochs;
        spec.batch = cfg.B_c;
        spec.lr = cfg.eta_c;
        spec.shape = ctx.train.shape;
        train_sgd(models[k], w0, ctx.train.images, ctx.train.labels, ctx.partition.clients[k], spec, rng);
    });

    ComplementarityStudy st;
    st.cka.assign(K, std::vector<double>(K, 1.0));
    st.emd.assign(K, std::vector<double>(K, 0.0));
    st.divergence.assign(K, std::vector<double>(K, 0.0));
    if (cfg.partition == PartitionKind::Grouped) st.group = group_membership(cfg.group_sizes);
    std::vector<LabelDistribution> dist;
    for (const auto& shard : ctx.partition.clients) dist.push_back(label_distribution(ctx.train, shard));
    std::vector<double> cka_pairs, neg_emd_pairs;
    for (std::size_t a = 0; a < K; ++a) {
        for (std::size_t b = a + 1; b < K; ++b) {
            double c = 0.0;
            try {
                c = cka_between_classifiers(models[a].classifier(), models[b].classifier());
            } catch (const DegenerateInputError&) {
            }
            const double e = emd(dist[a], dist[b]);
            const double d = weight_divergence(models[a], models[b], w0);
            st.cka[a][b] = st.cka[b][a] = c;
            st.emd[a][b] = st.emd[b][a] = e;
            st.divergence[a][b] = st.divergence[b][a] = d;
            cka_pairs.push_back(c);
            neg_emd_pairs.push_back(-e);
        }
    }
    st.spearman_cka_vs_neg_emd = spearman(cka_pairs, neg_emd_pairs);
    return st;
}

}  // namespace dcfl
