// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "../support/reference_fedavg.hpp"
#include "dcfl/condense.hpp"
#include "dcfl/federation.hpp"
#include "dcfl/similarity.hpp"

using namespace dcfl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& check) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

ExperimentConfig blobs_config(std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.dataset = DatasetKind::Blobs;
    cfg.seed = seed;
    cfg.seeds = {seed};
    return cfg;
}

double max_abs_diff(const ModelParams& a, const ModelParams& b) {
    const auto fa = a.flatten(), fb = b.flatten();
    double m = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) m = std::max(m, std::abs(fa[i] - fb[i]));
    return m;
}

// 1 ---------------------------------------------------------------------

Outcome gradient_soundness() {
    const auto t0 = Clock::now();
    Rng rng(20240611);
    auto rel_err = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); };
    double worst = 0.0;
    std::size_t checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t depth = 1 + uniform_index(rng, 3);
        std::vector<std::size_t> widths{1 + uniform_index(rng, 8)};
        for (std::size_t l = 0; l < depth; ++l) widths.push_back(2 + uniform_index(rng, 10));
        ModelParams p = ModelParams::glorot(widths, derive_seed(7, {static_cast<std::uint64_t>(trial)}));
        for (auto& l : p.layers())
            for (auto& b : l.bias) b = uniform01(rng) - 0.5;
        const std::size_t batch = 1 + uniform_index(rng, 4);
        Tensor2 x(batch, widths.front());
        for (auto& v : x.flat()) v = 2.0 * uniform01(rng) - 1.0;
        std::vector<int> y(batch);
        for (auto& v : y) v = static_cast<int>(uniform_index(rng, widths.back()));

        const auto cache = forward(p, x);
        const auto g = backward(p, cache, cross_entropy(cache.logits, y).dlogits, true);
        // Roundoff grows as 1/h on near-zero partials; 1e-4 keeps both error terms small.
        const double h = 1e-4;
        auto central = [&](double& slot) {
            const double keep = slot;
            slot = keep + h;
            const double up = cross_entropy(forward(p, x).logits, y).loss;
            slot = keep - h;
            const double dn = cross_entropy(forward(p, x).logits, y).loss;
            slot = keep;
            return (up - dn) / (2 * h);
        };
        for (std::size_t l = 0; l < p.depth(); ++l) {
            auto& layer = p.layers()[l];
            for (std::size_t i = 0; i < layer.weight.size(); ++i, ++checked)
                worst = std::max(worst, rel_err(g.layers[l].dweight.flat()[i], central(layer.weight.flat()[i])));
            for (std::size_t i = 0; i < layer.bias.size(); ++i, ++checked)
                worst = std::max(worst, rel_err(g.layers[l].dbias[i], central(layer.bias[i])));
        }
        for (std::size_t i = 0; i < x.size(); ++i, ++checked)
            worst = std::max(worst, rel_err(g.dinput->flat()[i], central(x.flat()[i])));
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-6 && secs < 30.0,
            fmt("max relative error %.3g over %zu partials of 100 nets, %.2f s", worst, checked, secs)};
}

// 2 ---------------------------------------------------------------------

Outcome protocol_reduction() {
    ExperimentConfig cfg = blobs_config(3);
    cfg.condensation = false;
    cfg.selection = Selection::Random;
    cfg.aggregation = Aggregation::FedAvg;
    cfg.augment = AugmentPolicy::none();
    cfg.T = 10;
    const auto ctx = FederationContext::build(cfg);
    const auto ref = testing::reference_fedavg(ctx, cfg.T);

    ServerState state = initial_state(ctx);
    pretrain_server(ctx, state);
    std::size_t equal = 0;
    for (std::size_t t = 0; t < cfg.T; ++t) {
        const auto& m = run_round(ctx, state);
        if (state.global == ref.globals[t] && m.accuracy == ref.accuracy[t]) ++equal;
    }
    return {equal == cfg.T, fmt("%zu/%zu rounds bitwise identical to the reference loop (M=%zu pretraining rounds "
                                "included, final accuracy %.4f)",
                                equal, cfg.T, cfg.M, ref.accuracy.back())};
}

// 3 ---------------------------------------------------------------------

std::vector<ModelParams> trajectory(const ExperimentConfig& cfg, std::vector<std::size_t>* steps = nullptr) {
    const auto ctx = FederationContext::build(cfg);
    if (steps) {
        for (const auto& shard : ctx.partition.clients)
            steps->push_back((shard.size() + cfg.B_c - 1) / cfg.B_c * cfg.E_c);
    }
    ServerState state = initial_state(ctx);
    pretrain_server(ctx, state);
    std::vector<ModelParams> out;
    for (std::size_t t = 0; t < cfg.T; ++t) {
        run_round(ctx, state);
        out.push_back(state.global);
    }
    return out;
}

Outcome degeneracy_laws() {
    // Equal local step counts: 10 blob classes dealt as 20 equal shards.
    ExperimentConfig base = blobs_config(5);
    base.partition = PartitionKind::Pathological;
    base.classes_per_client = 2;
    base.condensation = false;
    base.selection = Selection::Random;
    base.T = 5;
    std::vector<std::size_t> taus;
    const auto avg = trajectory(base, &taus);
    const bool equal_tau = std::adjacent_find(taus.begin(), taus.end(), std::not_equal_to<>()) == taus.end();
    ExperimentConfig nova = base;
    nova.aggregation = Aggregation::FedNova;
    const auto nova_traj = trajectory(nova);
    double nova_gap = 0.0;
    for (std::size_t t = 0; t < avg.size(); ++t) nova_gap = std::max(nova_gap, max_abs_diff(avg[t], nova_traj[t]));

    // FedProx with mu = 0 under the full protocol (condensation, CKA selection).
    ExperimentConfig full = blobs_config(5);
    full.T = 5;
    const auto full_avg = trajectory(full);
    full.aggregation = Aggregation::FedProx;
    full.mu = 0.0;
    const auto prox = trajectory(full);
    double prox_gap = 0.0;
    for (std::size_t t = 0; t < full_avg.size(); ++t)
        prox_gap = std::max(prox_gap, max_abs_diff(full_avg[t], prox[t]));

    // Aggregator level, random client models sharing one tau.
    Rng rng(99);
    double agg_gap = 0.0;
    const std::vector<std::size_t> widths{6, 5, 3};
    for (int trial = 0; trial < 50; ++trial) {
        const ModelParams g = ModelParams::glorot(widths, rng());
        const std::size_t n = 2 + uniform_index(rng, 5), tau = 1 + uniform_index(rng, 20);
        std::vector<ModelParams> models;
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) {
            models.push_back(ModelParams::glorot(widths, rng()));
            w[i] = 0.1 + uniform01(rng);
        }
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        std::vector<WeightedModel> members;
        for (std::size_t i = 0; i < n; ++i) members.push_back({&models[i], w[i] / total, tau});
        agg_gap = std::max(agg_gap, max_abs_diff(aggregate(Aggregation::FedAvg, g, members),
                                                 aggregate(Aggregation::FedNova, g, members)));
        agg_gap = std::max(agg_gap, max_abs_diff(aggregate(Aggregation::FedAvg, g, members),
                                                 aggregate(Aggregation::FedProx, g, members)));
    }
    const bool pass = equal_tau && nova_gap <= 1e-12 && prox_gap <= 1e-12 && agg_gap <= 1e-12;
    return {pass, fmt("5 rounds: |FedNova - FedAvg| = %.3g (tau %zu on every client: %s), |FedProx(mu=0) - FedAvg| "
                      "= %.3g; 50 direct aggregations: %.3g",
                      nova_gap, taus.front(), equal_tau ? "yes" : "no", prox_gap, agg_gap)};
}

// 4 ---------------------------------------------------------------------

Outcome exploit_sampling() {
    const std::vector<std::size_t> ids{0, 1, 2, 3, 4};
    // clang-format off
    const std::vector<double> v{
        1.00, 0.90, 0.20, 0.40, 0.10,
        0.90, 1.00, 0.30, 0.50, 0.05,
        0.20, 0.30, 1.00, 0.60, 0.70,
        0.40, 0.50, 0.60, 1.00, 0.15,
        0.10, 0.05, 0.70, 0.15, 1.00};
    // clang-format on
    ServerState state;
    state.cka = CkaMatrix::from_scores(ids, v);
    state.seen = ids;
    ExperimentConfig cfg;
    cfg.K = 5;
    cfg.C_com = 0.2;  // one participant, drawn by exploitation
    cfg.epsilon = 1.0;

    std::vector<double> analytic(5);
    double total = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j)
            if (i != j) analytic[i] += v[i * 5 + j];
        total += analytic[i];
    }
    for (auto& a : analytic) a /= total;

    const int draws = 10000;
    std::vector<double> freq(5, 0.0);
    for (int d = 0; d < draws; ++d) {
        Rng rng = make_rng(11, {kStreamSelect, static_cast<std::uint64_t>(d)});
        const auto sel = select_participants(state, cfg, rng);
        if (sel.size() != 1) return {false, "expected exactly one participant"};
        freq[sel.front()] += 1.0 / draws;
    }
    double worst = 0.0;
    std::string cells;
    for (std::size_t i = 0; i < 5; ++i) {
        worst = std::max(worst, std::abs(freq[i] - analytic[i]));
        cells += fmt(" %.3f/%.3f", freq[i], analytic[i]);
    }
    return {worst <= 0.02, fmt("empirical/analytic:%s; max deviation %.4f", cells.c_str(), worst)};
}

// 5 ---------------------------------------------------------------------

Outcome complementarity() {
    const auto t0 = Clock::now();
    double sum = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ExperimentConfig cfg = blobs_config(seed);
        cfg.partition = PartitionKind::Grouped;
        cfg.group_sizes = {2, 3, 2, 2, 1};
        cfg.K = 10;
        const auto st = complementarity_study(cfg, 10);
        sum += st.spearman_cka_vs_neg_emd;
        per_seed += fmt(" %.3f", st.spearman_cka_vs_neg_emd);
    }
    const double mean = sum / 5.0, secs = seconds_since(t0);
    return {mean >= 0.5 && secs < 300.0,
            fmt("Spearman(CKA, -EMD) per seed:%s; mean %.3f; %.1f s", per_seed.c_str(), mean, secs)};
}

// 6 ---------------------------------------------------------------------

Tensor2 random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Tensor2 m(r, c);
    for (auto& v : m.flat()) v = 2.0 * uniform01(rng) - 1.0;
    return m;
}

// Random orthogonal matrix by Gram-Schmidt on a random square matrix.
Tensor2 random_orthogonal(std::size_t n, Rng& rng) {
    Tensor2 q = random_matrix(n, n, rng);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < n; ++k) d += q(i, k) * q(j, k);
            for (std::size_t k = 0; k < n; ++k) q(i, k) -= d * q(j, k);
        }
        double norm = 0.0;
        for (std::size_t k = 0; k < n; ++k) norm += q(i, k) * q(i, k);
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < n; ++k) q(i, k) /= norm;
    }
    return q;
}

Tensor2 times(const Tensor2& x, const Tensor2& q) {
    Tensor2 out(x.rows(), q.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < q.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < x.cols(); ++k) s += x(i, k) * q(k, j);
            out(i, j) = s;
        }
    return out;
}

// Linear CKA from centered Gram matrices: <HKH, HLH> / (|HKH| |HLH|).
double gram_cka(const Tensor2& x, const Tensor2& y) {
    const std::size_t n = x.rows();
    auto centered_gram = [n](const Tensor2& a) {
        std::vector<double> g(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * a(j, k);
                g[i * n + j] = s;
            }
        std::vector<double> row(n, 0.0), col(n, 0.0);
        double all = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                row[i] += g[i * n + j] / n;
                col[j] += g[i * n + j] / n;
                all += g[i * n + j] / (double(n) * n);
            }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += all - row[i] - col[j];
        return g;
    };
    const auto k = centered_gram(x), l = centered_gram(y);
    double kl = 0.0, kk = 0.0, ll = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) {
        kl += k[i] * l[i];
        kk += k[i] * k[i];
        ll += l[i] * l[i];
    }
    return kl / std::sqrt(kk * ll);
}

Outcome cka_invariance() {
    Rng rng(606);
    double orth = 0.0, scale = 0.0, oracle = 0.0;
    for (int pair = 0; pair < 50; ++pair) {
        const std::size_t n = 5 + uniform_index(rng, 20), dx = 2 + uniform_index(rng, 10),
                          dy = 2 + uniform_index(rng, 10);
        const Tensor2 x = random_matrix(n, dx, rng), y = random_matrix(n, dy, rng);
        const double base = linear_cka(x, y);
        orth = std::max(orth, std::abs(linear_cka(times(x, random_orthogonal(dx, rng)), y) - base));
        orth = std::max(orth, std::abs(linear_cka(x, times(y, random_orthogonal(dy, rng))) - base));
        Tensor2 xs = x;
        const double a = std::exp(6.0 * uniform01(rng) - 3.0);
        for (auto& v : xs.flat()) v *= a;
        scale = std::max(scale, std::abs(linear_cka(xs, y) - base));
        oracle = std::max(oracle, std::abs(gram_cka(x, y) - base));
    }
    return {orth <= 1e-9 && scale <= 1e-9 && oracle <= 1e-10,
            fmt("50 pairs: orthogonal %.3g, scaling %.3g, Gram oracle %.3g", orth, scale, oracle)};
}

// 7 ---------------------------------------------------------------------

double train_and_score(const ModelParams& w0, const Tensor2& images, std::span<const int> labels,
                       const Dataset& test, std::size_t target_steps, std::uint64_t seed) {
    std::vector<std::size_t> rows(labels.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    TrainSpec spec;
    spec.batch = 32;
    spec.lr = 0.05;
    const std::size_t per_epoch = (rows.size() + spec.batch - 1) / spec.batch;
    spec.epochs = (target_steps + per_epoch - 1) / per_epoch;
    ModelParams w = w0;
    Rng rng(seed);
    train_sgd(w, w0, images, labels, rows, spec, rng);
    return evaluate(w, test);
}

Outcome condensation_utility() {
    double worst_ratio = 0.0, syn_acc = 0.0, real_acc = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ExperimentConfig cfg = blobs_config(seed);
        cfg.blob_classes = 4;
        const auto ctx = FederationContext::build(cfg);
        std::vector<std::size_t> all(ctx.train.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        DmOptions opts;
        opts.ipc = 1;
        opts.iterations = 200;
        const std::uint64_t cseed = derive_seed(seed, {kStreamCondense, 0});
        DmOptions start = opts;
        start.iterations = 0;
        const auto init = condense_dm(ctx.train, all, cseed, start);
        const auto syn = condense_dm(ctx.train, all, cseed, opts);
        const double l0 = dm_matching_loss(ctx.train, all, init, opts.hidden, seed);
        const double l1 = dm_matching_loss(ctx.train, all, syn, opts.hidden, seed);
        worst_ratio = std::max(worst_ratio, l1 / l0);

        const ModelParams w0 = initial_state(ctx).global;
        const std::size_t steps = 300;
        syn_acc += train_and_score(w0, syn.images, syn.labels, ctx.test, steps, seed) / 5.0;
        real_acc += train_and_score(w0, ctx.train.images, ctx.train.labels, ctx.test, steps, seed) / 5.0;
    }
    return {worst_ratio <= 0.10 && syn_acc >= 0.8 * real_acc,
            fmt("worst final/initial matching loss %.4f; condensed-only accuracy %.4f vs real %.4f (ratio %.3f)",
                worst_ratio, syn_acc, real_acc, syn_acc / real_acc)};
}

// 8 ---------------------------------------------------------------------

Outcome mnist_directional() {
    const auto t0 = Clock::now();
    int better = 0, faster = 0;
    std::string rows;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ExperimentConfig cfg;
        cfg.dataset = DatasetKind::Mnist;
        cfg.data_dir = DCFL_DATA_DIR "/mnist";
        cfg.partition = PartitionKind::Dirichlet;
        cfg.alpha = 0.1;
        cfg.K = 10;
        cfg.T = 30;
        cfg.seed = seed;
        cfg.seeds = {seed};
        const auto dcfl_run = run_experiment(cfg);
        const auto trad_run = run_experiment(as_tradition(cfg));
        const double trad_final = trad_run.state.metrics.back().accuracy;
        const double dcfl_final = dcfl_run.state.metrics.back().accuracy;
        const auto toa_trad = rounds_to_accuracy(trad_run.state.metrics, trad_final);
        const auto toa_dcfl = rounds_to_accuracy(dcfl_run.state.metrics, trad_final);
        const bool up = dcfl_final - trad_final >= 0.02;
        const bool quick = toa_dcfl && toa_trad && *toa_dcfl < *toa_trad;
        better += up;
        faster += quick;
        rows += fmt(" [seed %llu: %.4f vs %.4f, ToA %s vs %zu]", static_cast<unsigned long long>(seed), dcfl_final,
                    trad_final, toa_dcfl ? std::to_string(*toa_dcfl).c_str() : "-", toa_trad.value_or(0));
    }
    const double secs = seconds_since(t0);
    return {better >= 4 && faster >= 4 && secs < 600.0,
            fmt("+2 points in %d/5, smaller ToA in %d/5; dcfl vs tradition:%s; %.0f s", better, faster,
                rows.c_str(), secs)};
}

// 9 ---------------------------------------------------------------------

// Float counts recovered from payload byte sizes and the wire layouts.
std::size_t model_wire_floats(const ModelParams& m) {
    return (serialize(m).size() - 10 - 8 * m.depth()) / 8;
}

std::size_t set_wire_floats(const CondensedSet& s) {
    return (serialize(s).size() - 26 - 4 * s.classes.size() - 4 * s.size()) / 8;
}

Outcome comm_ledger() {
    ExperimentConfig cfg = blobs_config(9);
    cfg.T = 8;
    const auto ctx = FederationContext::build(cfg);
    ServerState state = initial_state(ctx);
    const ModelParams w0 = state.global;
    pretrain_server(ctx, state);

    std::size_t mismatches = 0, up_total = 0, down_total = 0;
    {
        const auto& m = state.metrics.front();
        std::size_t up = 0;
        for (const auto& [k, s] : state.store) up += set_wire_floats(s);
        const std::size_t classifier = model_wire_floats(ModelParams({w0.classifier()}));
        mismatches += m.model_down != m.selected.size() * model_wire_floats(w0);
        mismatches += m.model_up != m.selected.size() * classifier;
        mismatches += m.condensed_up != up || m.condensed_down != 0;
        up_total += m.up_floats();
        down_total += m.down_floats();
    }
    for (std::size_t t = 1; t <= cfg.T; ++t) {
        const ServerState before = state;
        const auto& m = run_round(ctx, state);
        std::size_t down = 0, up = 0;
        for (auto k : m.selected) {
            if (!before.store.count(k)) continue;
            std::vector<CondensedSet> sets;
            for (auto g : complement_group_for(k, before.cka, cfg.complement_size())) sets.push_back(before.store.at(g));
            for (const auto& s : filter_condensed(sets, before.global, cfg.r, cfg.filter_keep))
                down += set_wire_floats(s);
        }
        for (const auto& [k, s] : state.store)
            if (s.round_created == t) up += set_wire_floats(s);
        mismatches += m.model_down != m.selected.size() * model_wire_floats(before.global);
        mismatches += m.model_up != m.selected.size() * model_wire_floats(state.global);
        mismatches += m.condensed_down != down || m.condensed_up != up;
        up_total += m.up_floats();
        down_total += m.down_floats();
    }

    // Closed forms with K=20, 4.6 classes per client, ipc=10, 32x32x3 images, C_com=0.25.
    const auto f = comm_formula(20, 4.6, 10, 3072, 0.25, 0);
    const bool formula_ok = std::llround(f.upload) == 2826240 && std::llround(f.download) == 11304960;
    std::printf("     comm formula: upload %.0f floats (published estimate ~5.2e6), download %.0f floats "
                "(published estimate ~20.8e6).\n"
                "     note: K*cpc*ipc*d with these inputs is 2,826,240; the published figures are about 1.84x the "
                "closed forms and are not reproduced by them.\n",
                f.upload, f.download);
    return {mismatches == 0 && formula_ok,
            fmt("%zu ledger mismatches over %zu rounds (%zu floats up, %zu down); formula upload %.0f, download %.0f",
                mismatches, cfg.T + 1, up_total, down_total, f.upload, f.download)};
}

// 10 --------------------------------------------------------------------

Outcome filtering() {
    Rng rng(1010);
    std::size_t violations = 0, trials = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t nsets = 1 + uniform_index(rng, 4);
        std::vector<CondensedSet> sets(nsets);
        std::vector<std::vector<double>> scores(nsets);
        std::size_t total = 0;
        for (std::size_t s = 0; s < nsets; ++s) {
            const std::size_t rows = uniform_index(rng, 7);
            sets[s].owner = s;
            sets[s].ipc = 1;
            sets[s].images = Tensor2(rows, 3);
            for (std::size_t i = 0; i < rows; ++i) {
                sets[s].labels.push_back(static_cast<int>(uniform_index(rng, 3)));
                sets[s].images(i, 0) = static_cast<double>(i);  // row tag
                // coarse scores so ties occur
                scores[s].push_back(std::floor(uniform01(rng) * 8.0));
            }
            total += rows;
        }
        for (auto keep : {FilterKeep::LowLoss, FilterKeep::HighLoss}) {
            ++trials;
            auto kept_count = [](const std::vector<CondensedSet>& v) {
                std::size_t c = 0;
                for (const auto& s : v) c += s.size();
                return c;
            };
            const auto r0 = filter_by_scores(sets, scores, 0.0, keep);
            for (std::size_t s = 0; s < nsets; ++s)
                violations += r0[s].labels != sets[s].labels || r0[s].images != sets[s].images;
            violations += kept_count(filter_by_scores(sets, scores, 1.0, keep)) != 0;

            // Survivors shrink monotonically in r, with exactly N - floor(rN) kept, and
            // every survivor scores no worse than every dropped example.
            std::vector<std::vector<bool>> prev;
            for (double r : {0.0, 0.1, 0.25, 0.4, 0.5, 0.75, 0.9, 1.0}) {
                const auto out = filter_by_scores(sets, scores, r, keep);
                const auto dropped = static_cast<std::size_t>(std::floor(r * static_cast<double>(total)));
                violations += kept_count(out) != total - dropped;
                std::vector<std::vector<bool>> alive(nsets);
                double worst_kept = keep == FilterKeep::LowLoss ? -1e9 : 1e9;
                for (std::size_t s = 0; s < nsets; ++s) {
                    alive[s].assign(sets[s].size(), false);
                    for (std::size_t i = 0; i < out[s].size(); ++i) {
                        const auto row = static_cast<std::size_t>(out[s].images(i, 0));
                        alive[s][row] = true;
                        const double sc = scores[s][row];
                        worst_kept = keep == FilterKeep::LowLoss ? std::max(worst_kept, sc) : std::min(worst_kept, sc);
                    }
                }
                for (std::size_t s = 0; s < nsets; ++s)
                    for (std::size_t i = 0; i < sets[s].size(); ++i) {
                        if (!prev.empty() && alive[s][i] && !prev[s][i]) ++violations;
                        if (!alive[s][i] && (keep == FilterKeep::LowLoss ? scores[s][i] < worst_kept
                                                                         : scores[s][i] > worst_kept))
                            ++violations;
                    }
                prev = std::move(alive);
            }
        }
    }
    return {violations == 0, fmt("%zu violations over %zu random score sets", violations, trials)};
}

}  // namespace

int main() {
    report(1, "gradient soundness", gradient_soundness);
    report(2, "protocol reduction to FedAvg", protocol_reduction);
    report(3, "degeneracy laws", degeneracy_laws);
    report(4, "exploit sampling frequencies", exploit_sampling);
    report(5, "CKA vs label skew on grouped clients", complementarity);
    report(6, "CKA invariances", cka_invariance);
    report(7, "condensation utility", condensation_utility);
    report(8, "MNIST DCFL vs tradition", mnist_directional);
    report(9, "communication ledger", comm_ledger);
    report(10, "filtering monotonicity and boundaries", filtering);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
