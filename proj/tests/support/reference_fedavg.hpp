#pragma once

// Textbook FedAvg written directly against nn-core, used as an oracle for
// the protocol reduction law. Shares only the seeding scheme with the
// library: init, per-round selection stream and per-client SGD stream.

#include <numeric>
#include <vector>

#include "dcfl/federation.hpp"

namespace dcfl::testing {

struct ReferenceRun {
    std::vector<ModelParams> globals;  // after each round
    std::vector<double> accuracy;
};

inline ReferenceRun reference_fedavg(const FederationContext& ctx, std::size_t rounds) {
    const auto& cfg = ctx.cfg;
    const auto widths = cfg.model_widths(ctx.train.dim(), static_cast<std::size_t>(ctx.train.num_classes));
    ModelParams w = ModelParams::glorot(widths, derive_seed(cfg.seed, {kStreamInit}));
    const std::size_t n = cfg.participants_per_round();
    ReferenceRun run;
    for (std::size_t t = 1; t <= rounds; ++t) {
        Rng sel = make_rng(cfg.seed, {kStreamSelect, t});
        std::vector<std::size_t> ids(cfg.K);
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        for (std::size_t i = 0; i < n; ++i) std::swap(ids[i], ids[i + uniform_index(sel, cfg.K - i)]);
        ids.resize(n);
        std::sort(ids.begin(), ids.end());

        double total = 0;
        for (auto k : ids) total += static_cast<double>(ctx.partition.clients[k].size());
        std::vector<double> next(w.param_count(), 0.0);
        for (auto k : ids) {
            const auto& shard = ctx.partition.clients[k];
            ModelParams wk = w;
            Rng rng = make_rng(cfg.seed, {kStreamClient, t, k});
            for (std::size_t e = 0; e < cfg.E_c; ++e) {
                std::vector<std::size_t> order(shard.size());
                std::iota(order.begin(), order.end(), std::size_t{0});
                shuffle(order.begin(), order.end(), rng);
                for (std::size_t b = 0; b < order.size(); b += cfg.B_c) {
                    std::vector<std::size_t> rows;
                    std::vector<int> y;
                    for (std::size_t i = b; i < std::min(order.size(), b + cfg.B_c); ++i) {
                        rows.push_back(shard[order[i]]);
                        y.push_back(ctx.train.labels[shard[order[i]]]);
                    }
                    const auto cache = forward(wk, gather_rows(ctx.train.images, rows));
                    const auto loss = cross_entropy(cache.logits, y);
                    sgd_step_inplace(wk, backward(wk, cache, loss.dlogits), cfg.eta_c);
                }
            }
            const double p = static_cast<double>(shard.size()) / total;
            const auto flat = wk.flatten();
            for (std::size_t i = 0; i < flat.size(); ++i) next[i] += p * flat[i];
        }
        w.assign_flat(next);
        run.globals.push_back(w);
        run.accuracy.push_back(evaluate(w, ctx.test));
    }
    return run;
}

}  // namespace dcfl::testing
