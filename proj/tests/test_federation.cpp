#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dcfl/federation.hpp"
#include "support/reference_fedavg.hpp"

using namespace dcfl;

namespace {

ExperimentConfig small_blobs() {
    ExperimentConfig c;
    c.dataset = DatasetKind::Blobs;
    c.blob_classes = 4;
    c.blob_dim = 16;
    c.blob_train_per_class = 40;
    c.blob_test_per_class = 20;
    c.blob_spread = 0.2;
    c.partition = PartitionKind::Dirichlet;
    c.alpha = 0.5;
    c.hidden = {16};
    c.K = 6;
    c.T = 3;
    c.M = 1;
    c.C_com = 0.5;
    c.C_pre = 0.5;
    c.ipc = 2;
    c.condense_iters = 5;
    c.B_c = 8;
    c.B_s = 4;
    return c;
}

double chi_square(const std::vector<double>& counts, const std::vector<double>& expected) {
    double s = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) s += std::pow(counts[i] - expected[i], 2) / expected[i];
    return s;
}

ModelParams scalar_model(double v) { return ModelParams({Layer{Tensor2(1, 1, {v}), {0.0}}}); }

double scalar(const ModelParams& m) { return m.layers()[0].weight(0, 0); }

}  // namespace

TEST(Config, DefaultsValidateAndCounts) {
    ExperimentConfig c;
    EXPECT_NO_THROW(c.validate());
    c.K = 10;
    c.C_com = 0.3;
    EXPECT_EQ(c.participants_per_round(), 3u);
    EXPECT_EQ(c.complement_size(), 2u);
    c.C_com = 0.01;
    EXPECT_EQ(c.participants_per_round(), 1u);
    c.epsilon = 1.5;
    try {
        c.validate();
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "epsilon");
    }
}

TEST(Pretrain, ZeroRoundsOnlyStampsMetrics) {
    auto cfg = small_blobs();
    cfg.M = 0;
    const auto ctx = FederationContext::build(cfg);
    ServerState s = initial_state(ctx);
    const ModelParams w0 = s.global;
    pretrain_server(ctx, s);
    EXPECT_EQ(s.global, w0);
    EXPECT_TRUE(s.seen.empty());
    EXPECT_EQ(s.cka.size(), 0u);
    ASSERT_EQ(s.metrics.size(), 1u);
    EXPECT_EQ(s.metrics[0].round, 0u);
    EXPECT_EQ(s.metrics[0].up_floats() + s.metrics[0].down_floats(), 0u);
}

TEST(Pretrain, EnoughRoundsSeeEveryClient) {
    auto cfg = small_blobs();
    cfg.M = 12;
    cfg.C_pre = 1.0;
    const auto ctx = FederationContext::build(cfg);
    ServerState s = initial_state(ctx);
    pretrain_server(ctx, s);
    EXPECT_EQ(s.seen.size(), cfg.K);
    EXPECT_EQ(s.cka.size(), cfg.K);
    EXPECT_EQ(s.store.size(), cfg.K);
    EXPECT_NO_THROW(s.check());
}

TEST(Pretrain, ImprovesOverRandomInit) {
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto cfg = small_blobs();
        cfg.K = 8;
        cfg.M = 4;
        cfg.C_pre = 0.5;
        cfg.seed = seed;
        cfg.condense_iters = 20;
        const auto ctx = FederationContext::build(cfg);
        ServerState s = initial_state(ctx);
        const double before = evaluate(s.global, ctx.test);
        pretrain_server(ctx, s);
        wins += s.metrics[0].accuracy > before;
    }
    EXPECT_GE(wins, 4);
}

TEST(Selection, PureExplorationIsUniformOverUnseen) {
    ExperimentConfig cfg;
    cfg.K = 10;
    cfg.C_com = 0.1;
    cfg.epsilon = 0.0;
    ServerState s;
    s.seen = {0, 1};
    s.cka = CkaMatrix::from_scores({0, 1}, {1, 0.5, 0.5, 1});
    Rng rng(5);
    std::vector<double> counts(10, 0);
    for (int i = 0; i < 10000; ++i) {
        const auto sel = select_participants(s, cfg, rng);
        ASSERT_EQ(sel.size(), 1u);
        ++counts[sel[0]];
    }
    EXPECT_EQ(counts[0] + counts[1], 0.0);
    const std::vector<double> obs(counts.begin() + 2, counts.end());
    EXPECT_LT(chi_square(obs, std::vector<double>(8, 1250.0)), 18.475);  // chi2(7) at p = 0.01
}

TEST(Selection, IdenticalScoresGiveUniformProbabilities) {
    const auto m = CkaMatrix::from_scores({1, 4, 6, 9}, {1, .3, .3, .3, .3, 1, .3, .3, .3, .3, 1, .3, .3, .3, .3, 1});
    const std::vector<std::size_t> cand{1, 4, 6, 9};
    for (double p : exploit_probabilities(m, cand)) EXPECT_NEAR(p, 0.25, 1e-15);
}

TEST(Selection, RowSumProbabilitiesAndFrequencies) {
    const auto m = CkaMatrix::from_scores({0, 1, 2}, {1, 1, 1, 1, 1, 0, 1, 0, 1});
    const std::vector<std::size_t> cand{0, 1, 2};
    const auto p = exploit_probabilities(m, cand);
    EXPECT_DOUBLE_EQ(p[0], 0.5);
    EXPECT_DOUBLE_EQ(p[1], 0.25);
    EXPECT_DOUBLE_EQ(p[2], 0.25);
    Rng rng(9);
    std::vector<double> freq(3, 0);
    for (int i = 0; i < 10000; ++i) ++freq[sample_categorical(p, rng)];
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(freq[i] / 10000.0, p[i], 0.02);
}

TEST(Selection, AlwaysExactlyNDistinct) {
    ExperimentConfig cfg;
    cfg.K = 7;
    cfg.C_com = 0.6;
    Rng rng(3);
    for (double eps : {0.0, 0.5, 1.0}) {
        cfg.epsilon = eps;
        for (std::size_t seen = 0; seen <= 7; ++seen) {
            ServerState s;
            std::vector<double> v(seen * seen, 0.4);
            for (std::size_t i = 0; i < seen; ++i) {
                s.seen.push_back(i);
                v[i * seen + i] = 1;
            }
            s.cka = CkaMatrix::from_scores(s.seen, v);
            for (int t = 0; t < 50; ++t) {
                const auto sel = select_participants(s, cfg, rng);
                EXPECT_EQ(sel.size(), 4u);
                EXPECT_EQ(std::set<std::size_t>(sel.begin(), sel.end()).size(), 4u);
                EXPECT_TRUE(std::is_sorted(sel.begin(), sel.end()));
            }
        }
    }
}

TEST(Complement, LowestScoresWithIdTies) {
    const auto m = CkaMatrix::from_scores({0, 1, 2, 3}, {1, .9, .1, .1, .9, 1, .5, .5, .1, .5, 1, .5, .1, .5, .5, 1});
    EXPECT_EQ(complement_group_for(0, m, 1), (std::vector<std::size_t>{2}));
    EXPECT_EQ(complement_group_for(0, m, 2), (std::vector<std::size_t>{2, 3}));
    EXPECT_EQ(complement_group_for(0, m, 10), (std::vector<std::size_t>{1, 2, 3}));
    EXPECT_THROW(complement_group_for(7, m, 1), ArgumentError);
}

TEST(Complement, GroupedTopologyFavoursOtherGroups) {
    std::size_t cross = 0, total = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto cfg = small_blobs();
        cfg.blob_classes = 10;
        cfg.blob_train_per_class = 60;
        cfg.partition = PartitionKind::Grouped;
        cfg.group_sizes = {2, 3, 2, 2, 1};
        cfg.K = 10;
        cfg.alpha = 0.5;
        cfg.seed = seed;
        const auto st = complementarity_study(cfg, 5);
        std::vector<std::size_t> ids(10);
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        std::vector<double> flat;
        for (const auto& row : st.cka) flat.insert(flat.end(), row.begin(), row.end());
        const auto m = CkaMatrix::from_scores(ids, flat);
        for (std::size_t k = 0; k < 10; ++k)
            for (auto g : complement_group_for(k, m, 3)) {
                cross += st.group[g] != st.group[k];
                ++total;
            }
    }
    EXPECT_GE(static_cast<double>(cross) / static_cast<double>(total), 0.8);
}

TEST(ClientUpdate, NoEpochsNoIterationsIsIdentity) {
    auto cfg = small_blobs();
    cfg.condense_iters = 0;
    const auto ctx0 = FederationContext::build(cfg);
    auto c = ctx0.cfg;
    c.E_c = 0;
    const FederationContext ctx(c, ctx0.train, ctx0.test, ctx0.partition);
    const ModelParams w = initial_state(ctx).global;
    Rng rng(1);
    const auto res = client_update_wo_cd(ctx, 2, w, rng, true);
    EXPECT_EQ(res.model, w);
    EXPECT_EQ(res.steps, 0u);
    DmOptions o;
    o.ipc = c.ipc;
    o.iterations = 0;
    o.hidden = c.hidden;
    EXPECT_EQ(res.condensed->images,
              condense_dm(ctx.train, ctx.partition.clients[2], derive_seed(c.seed, {kStreamCondense, 2}), o).images);
}

TEST(ClientUpdate, LocalLossDecreases) {
    int ok = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto cfg = small_blobs();
        cfg.seed = seed;
        cfg.eta_c = 0.01;
        cfg.augment = AugmentPolicy::none();
        const auto ctx = FederationContext::build(cfg);
        const ModelParams w = initial_state(ctx).global;
        const auto& shard = ctx.partition.clients[0];
        const Tensor2 x = gather_rows(ctx.train.images, shard);
        std::vector<int> y;
        for (auto i : shard) y.push_back(ctx.train.labels[i]);
        Rng rng(seed);
        const auto res = client_update_wo_cd(ctx, 0, w, rng, false);
        ok += mean_loss(res.model, x, y) <= mean_loss(w, x, y);
    }
    EXPECT_GE(ok, 9);
}

TEST(ClientUpdate, EpochBatchesCoverEachSampleOnce) {
    Rng rng(4);
    const auto batches = epoch_batches(48, 8, rng);
    ASSERT_EQ(batches.size(), 6u);
    std::vector<int> seen(48, 0);
    for (const auto& b : batches) {
        EXPECT_EQ(b.size(), 8u);
        for (auto i : b) ++seen[i];
    }
    for (int s : seen) EXPECT_EQ(s, 1);
    EXPECT_EQ(epoch_batches(10, 4, rng).back().size(), 2u);
}

TEST(ClientUpdate, NoFineTuneEpochsMatchesWithoutCondensed) {
    auto cfg = small_blobs();
    cfg.E_s = 0;
    const auto ctx = FederationContext::build(cfg);
    const ModelParams w = initial_state(ctx).global;
    Rng r1(3), r2(3), r0(1);
    const auto own = client_update_wo_cd(ctx, 1, w, r0, true).condensed;
    const auto a = client_update_w_cd(ctx, 1, w, *own, std::span<const CondensedSet>{}, r1);
    const auto b = client_update_wo_cd(ctx, 1, w, r2, false);
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(a.aux_used, 0u);
    Rng r3(3);
    EXPECT_EQ(client_update_w_cd(ctx, 1, w, *own, std::span<const CondensedSet>{}, r3).model, a.model);
}

TEST(ClientUpdate, ComplementFineTuneTeachesMissingClasses) {
    auto cfg = small_blobs();
    cfg.K = 2;
    cfg.blob_spread = 0.1;
    cfg.augment = AugmentPolicy::none();
    cfg.E_c = 3;
    cfg.E_s = 20;
    cfg.eta_s = 0.05;
    cfg.ipc = 3;
    cfg.condense_iters = 20;
    const auto base = FederationContext::build(cfg);
    // client 0 owns classes {0,1}, client 1 owns {2,3}
    Partition p;
    p.clients.resize(2);
    for (std::size_t i = 0; i < base.train.size(); ++i) p.clients[base.train.labels[i] < 2 ? 0 : 1].push_back(i);
    const FederationContext ctx(cfg, base.train, base.test, p);
    const ModelParams w = initial_state(ctx).global;

    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < ctx.test.size(); ++i)
        if (ctx.test.labels[i] >= 2) missing.push_back(i);

    Rng r0(1), r1(2), r2(3);
    const auto own = client_update_wo_cd(ctx, 0, w, r0, true).condensed;
    const auto other = client_update_wo_cd(ctx, 1, w, r1, true).condensed;
    Rng rp(3);
    const auto plain = client_update_wo_cd(ctx, 0, w, rp, false);
    const std::vector<CondensedSet> received{*other};
    const auto tuned = client_update_w_cd(ctx, 0, w, *own, received, r2);
    EXPECT_LE(evaluate(plain.model, ctx.test, missing), 0.1);
    EXPECT_GT(evaluate(tuned.model, ctx.test, missing), 0.0);
    EXPECT_EQ(tuned.aux_used, own->size() + other->size());
}

TEST(Weights, Examples) {
    const std::vector<std::size_t> sizes{100, 300}, none{0, 0};
    const auto p = optimized_weights(sizes, none);
    EXPECT_DOUBLE_EQ(p[0], 0.25);
    EXPECT_DOUBLE_EQ(p[1], 0.75);
    const std::vector<std::size_t> eq{100, 100}, aux{0, 100};
    const auto q = optimized_weights(eq, aux);
    EXPECT_NEAR(q[0], 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(q[1], 2.0 / 3.0, 1e-15);
    const std::vector<std::size_t> one{7}, zero{0};
    EXPECT_EQ(optimized_weights(one, zero), std::vector<double>{1.0});
    EXPECT_THROW(optimized_weights(zero, zero), DegenerateInputError);
}

TEST(Weights, SumToOneProperty) {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
        std::vector<std::size_t> a, b;
        for (std::size_t i = 0; i < 1 + uniform_index(rng, 10); ++i) {
            a.push_back(1 + uniform_index(rng, 1000));
            b.push_back(uniform_index(rng, 100));
        }
        double s = 0;
        for (double v : optimized_weights(a, b)) {
            EXPECT_GE(v, 0.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Aggregate, HandArithmeticAndSingleClient) {
    const ModelParams g = scalar_model(1.0), a = scalar_model(0.0), b = scalar_model(4.0);
    const std::vector<WeightedModel> two{{&a, 0.25, 3}, {&b, 0.75, 3}};
    EXPECT_DOUBLE_EQ(scalar(aggregate(Aggregation::FedAvg, g, two)), 3.0);
    const std::vector<WeightedModel> single{{&b, 1.0, 5}};
    for (auto s : {Aggregation::FedAvg, Aggregation::FedProx, Aggregation::FedNova})
        EXPECT_NEAR(scalar(aggregate(s, g, single)), 4.0, 1e-15);
    const std::vector<WeightedModel> lazy{{&b, 1.0, 0}};
    EXPECT_THROW(aggregate(Aggregation::FedNova, g, lazy), ProtocolError);
    const std::vector<WeightedModel> unnormalized{{&a, 0.5, 1}, {&b, 0.6, 1}};
    EXPECT_THROW(aggregate(Aggregation::FedAvg, g, unnormalized), ArgumentError);
}

TEST(Aggregate, FedNovaWithEqualStepsIsFedAvg) {
    Rng rng(3);
    const std::vector<std::size_t> widths{5, 4, 3};
    for (int t = 0; t < 20; ++t) {
        const ModelParams g = ModelParams::glorot(widths, 1 + t);
        std::vector<ModelParams> ms;
        for (int k = 0; k < 4; ++k) ms.push_back(ModelParams::glorot(widths, 100 + t * 10 + k));
        std::vector<std::size_t> sizes{10, 20, 30, 40}, none(4, 0);
        const auto p = optimized_weights(sizes, none);
        const std::size_t tau = 1 + uniform_index(rng, 20);
        std::vector<WeightedModel> members;
        for (int k = 0; k < 4; ++k) members.push_back({&ms[static_cast<std::size_t>(k)], p[static_cast<std::size_t>(k)], tau});
        const auto avg = aggregate(Aggregation::FedAvg, g, members).flatten();
        const auto nova = aggregate(Aggregation::FedNova, g, members).flatten();
        for (std::size_t i = 0; i < avg.size(); ++i) EXPECT_NEAR(avg[i], nova[i], 1e-12);
        // convex hull, coordinate-wise
        for (std::size_t i = 0; i < avg.size(); ++i) {
            double lo = 1e9, hi = -1e9;
            for (const auto& m : ms) {
                lo = std::min(lo, m.flatten()[i]);
                hi = std::max(hi, m.flatten()[i]);
            }
            EXPECT_GE(avg[i], lo - 1e-15);
            EXPECT_LE(avg[i], hi + 1e-15);
        }
    }
}

TEST(Round, ReductionToPlainFedAvg) {
    auto cfg = small_blobs();
    cfg.condensation = false;
    cfg.selection = Selection::Random;
    cfg.M = 0;
    cfg.augment = AugmentPolicy::none();
    cfg.T = 4;
    const auto ctx = FederationContext::build(cfg);
    const auto res = run_experiment(ctx);
    const auto ref = dcfl::testing::reference_fedavg(ctx, cfg.T);
    EXPECT_EQ(res.state.global, ref.globals.back());
    for (std::size_t t = 0; t < cfg.T; ++t) EXPECT_EQ(res.state.metrics[t + 1].accuracy, ref.accuracy[t]);
}

TEST(Round, FullFiltrationDownloadsNoCondensedData) {
    auto cfg = small_blobs();
    cfg.M = 6;
    cfg.C_pre = 1.0;
    cfg.r = 1.0;
    cfg.T = 2;
    const auto res = run_experiment(cfg);
    ASSERT_EQ(res.state.seen.size(), cfg.K);
    for (std::size_t t = 1; t < res.state.metrics.size(); ++t) EXPECT_EQ(res.state.metrics[t].condensed_down, 0u);
}

TEST(Round, UploadAccountingMatchesPayloads) {
    auto cfg = small_blobs();
    cfg.M = 0;
    cfg.T = 1;
    const auto ctx = FederationContext::build(cfg);
    ServerState s = initial_state(ctx);
    pretrain_server(ctx, s);
    const auto& m = run_round(ctx, s);
    const std::size_t params = s.global.param_count();
    std::size_t condensed = 0;
    for (auto k : m.selected) {
        const auto& set = s.store.at(k);
        EXPECT_EQ(set.size(), set.classes.size() * cfg.ipc);
        condensed += set.size() * ctx.train.dim();
    }
    EXPECT_EQ(m.model_up, params * m.selected.size());
    EXPECT_EQ(m.model_down, params * m.selected.size());
    EXPECT_EQ(m.condensed_up, condensed);
    EXPECT_EQ(m.condensed_down, 0u);
}

TEST(Comm, FormulaReferenceValues) {
    const auto f = comm_formula(20, 4.6, 10, 3 * 32 * 32, 0.5, 1000);
    EXPECT_NEAR(f.upload, 2826240.0, 1e-6);
    EXPECT_NEAR(f.download, 20 * (20 * 0.5 - 1) * 4.6 * 10 * 3072, 1e-6);
    EXPECT_NEAR(f.baseline_per_round, 1000 * 10 * 2, 1e-9);
}

TEST(Comm, NoCondensationMeansNoCondensedTraffic) {
    auto cfg = small_blobs();
    cfg.condensation = false;
    const auto res = run_experiment(cfg);
    EXPECT_EQ(res.comm.condensed_up + res.comm.condensed_down, 0u);
    EXPECT_EQ(res.comm.formula.upload, 0.0);
    const std::size_t params = res.state.global.param_count();
    for (std::size_t t = 1; t < res.state.metrics.size(); ++t) {
        const auto& m = res.state.metrics[t];
        EXPECT_EQ(m.up_floats() + m.down_floats(), 2 * params * m.selected.size());
    }
}

TEST(Experiment, NoRoundsEmitsOnlyPretraining) {
    auto cfg = small_blobs();
    cfg.T = 0;
    const auto res = run_experiment(cfg);
    ASSERT_EQ(res.state.metrics.size(), 1u);
    EXPECT_EQ(res.state.metrics[0].round, 0u);
}

TEST(Experiment, DeterministicPerSeed) {
    auto cfg = small_blobs();
    cfg.aggregation = Aggregation::FedNova;
    const auto a = run_experiment(cfg), b = run_experiment(cfg);
    EXPECT_EQ(a.state.metrics, b.state.metrics);
    EXPECT_EQ(a.state.global, b.state.global);
    cfg.seed = 2;
    EXPECT_NE(run_experiment(cfg).state.global, a.state.global);
}

TEST(Experiment, ToaCountsTrainingRoundsOnly) {
    std::vector<RoundMetrics> log(4);
    const double acc[] = {0.95, 0.5, 0.7, 0.9};
    for (std::size_t i = 0; i < 4; ++i) {
        log[i].round = i;
        log[i].accuracy = acc[i];
    }
    EXPECT_EQ(rounds_to_accuracy(log, 0.86), 3u);
    EXPECT_EQ(rounds_to_accuracy(log, 0.7), 2u);
    EXPECT_FALSE(rounds_to_accuracy(log, 0.95).has_value());
}

TEST(Aggregate, FedProxWithZeroMuIsFedAvg) {
    auto cfg = small_blobs();
    cfg.mu = 0.0;
    cfg.aggregation = Aggregation::FedProx;
    const auto prox = run_experiment(cfg);
    cfg.aggregation = Aggregation::FedAvg;
    const auto avg = run_experiment(cfg);
    EXPECT_EQ(prox.state.global, avg.state.global);
}

// Paired seeds, 12 clients with two classes each. Blob features have no
// spatial layout, so the image augmentations are switched off.
TEST(Experiment, BlobsPathologicalReachesTargetSooner) {
    int sooner = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ExperimentConfig cfg;
        cfg.K = 12;
        cfg.partition = PartitionKind::Pathological;
        cfg.classes_per_client = 2;
        cfg.T = 30;
        cfg.augment = AugmentPolicy::none();
        cfg.seed = seed;
        const auto dcfl = rounds_to_accuracy(run_experiment(cfg).state.metrics, 0.8);
        const auto trad = rounds_to_accuracy(run_experiment(as_tradition(cfg)).state.metrics, 0.8);
        if (dcfl && (!trad || *dcfl < *trad)) ++sooner;
    }
    EXPECT_GE(sooner, 4);
}

TEST(Experiment, BlobsPathologicalFinalAccuracyAtLeastTradition) {
    int at_least = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ExperimentConfig cfg;
        cfg.partition = PartitionKind::Pathological;
        cfg.classes_per_client = 2;
        cfg.augment = AugmentPolicy::none();
        cfg.seed = seed;
        const double dcfl = run_experiment(cfg).state.metrics.back().accuracy;
        const double trad = run_experiment(as_tradition(cfg)).state.metrics.back().accuracy;
        at_least += dcfl >= trad;
    }
    EXPECT_GE(at_least, 4);
}
