#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcfl/augment.hpp"
#include "dcfl/condense.hpp"
#include "dcfl/dataset.hpp"
#include "dcfl/nn.hpp"
#include "dcfl/partition.hpp"
#include "dcfl/rng.hpp"
#include "dcfl/similarity.hpp"

namespace dcfl {

enum class Aggregation { FedAvg, FedProx, FedNova };
enum class Selection { Random, CkaGuided };
enum class DatasetKind { Blobs, Mnist, Fashion };  // the last two read IDX files from data_dir
enum class PartitionKind { Dirichlet, Pathological, Grouped };
enum class CkaMode { Weights, Activations };

std::string_view to_string(Aggregation a);
std::string_view to_string(Selection s);
std::string_view to_string(DatasetKind d);
std::string_view to_string(PartitionKind p);
std::string_view to_string(CkaMode m);
std::string_view to_string(FilterKeep k);

struct ExperimentConfig {
    std::string name = "run";

    // data
    DatasetKind dataset = DatasetKind::Blobs;
    std::string data_dir = "data/mnist";
    int blob_classes = 10;
    std::size_t blob_dim = 64;
    std::size_t blob_train_per_class = 100;
    std::size_t blob_test_per_class = 50;
    double blob_spread = 0.15;

    // partition
    PartitionKind partition = PartitionKind::Dirichlet;
    double alpha = 0.5;
    std::size_t classes_per_client = 2;
    std::vector<std::size_t> group_sizes = {2, 3, 2, 2, 1};

    // model: hidden widths of the MLP
    std::vector<std::size_t> hidden = {128};

    // protocol
    std::size_t K = 10;          // clients
    std::size_t T = 20;          // training rounds
    std::size_t M = 2;           // pretraining rounds
    double C_com = 0.3;          // participation fraction per round
    double C_pre = 0.5;          // participation fraction per pretraining round
    double epsilon = 0.5;        // exploitation factor
    double r = 0.2;              // filter ratio
    double eta_c = 0.05;         // local learning rate
    double eta_s = 0.03;         // fine-tuning / server learning rate
    std::size_t B_c = 32;
    std::size_t B_s = 16;
    std::size_t E_c = 1;
    std::size_t E_s = 1;
    std::size_t ipc = 10;
    std::size_t group_size = 0;  // complementary group size; 0 = participants - 1

    Aggregation aggregation = Aggregation::FedAvg;
    double mu = 0.01;            // proximal coefficient (fedprox only)
    Selection selection = Selection::CkaGuided;
    bool condensation = true;
    std::size_t condense_iters = 100;
    double condense_lr = 0.1;
    std::size_t condense_real_batch = 64;
    AugmentPolicy augment = AugmentPolicy::from_list("crop,scale,brightness,cutout");
    FilterKeep filter_keep = FilterKeep::LowLoss;
    CkaMode cka_mode = CkaMode::Weights;
    std::size_t probe_size = 64;

    std::uint64_t seed = 1;
    std::vector<std::uint64_t> seeds = {1};
    bool record_wall_time = false;

    /// Throws ValidationError naming the first offending field.
    void validate() const;

    std::vector<std::size_t> model_widths(std::size_t input_dim, std::size_t num_classes) const;
    std::size_t participants_per_round() const;
    std::size_t pretrain_participants() const;
    std::size_t complement_size() const;
};

/// Baseline preset: random selection, no condensation, no pretraining, no
/// augmentation. Everything else is kept.
ExperimentConfig as_tradition(ExperimentConfig cfg);

struct RoundMetrics {
    std::size_t round = 0;  // 0 = after pretraining
    double accuracy = 0.0;
    std::vector<std::size_t> selected;
    std::size_t model_up = 0, model_down = 0;
    std::size_t condensed_up = 0, condensed_down = 0;
    double wall_ms = 0.0;

    std::size_t up_floats() const noexcept { return model_up + condensed_up; }
    std::size_t down_floats() const noexcept { return model_down + condensed_down; }
    friend bool operator==(const RoundMetrics&, const RoundMetrics&) = default;
};

struct ServerState {
    std::size_t round = 0;
    ModelParams global;
    std::vector<std::size_t> seen;               // sorted
    CkaMatrix cka;
    std::map<std::size_t, CondensedSet> store;   // first-contact condensed sets
    std::vector<RoundMetrics> metrics;

    bool is_seen(std::size_t k) const;
    /// Checks that the CKA matrix and store agree with the seen set.
    void check() const;
};

/// Data and partition shared by every round of one run.
struct FederationContext {
    ExperimentConfig cfg;
    Dataset train;
    Dataset test;
    Partition partition;
    Tensor2 probe;  // inputs for activation-mode CKA

    static FederationContext build(const ExperimentConfig& cfg);
    FederationContext(ExperimentConfig c, Dataset tr, Dataset te, Partition p);
};

/// Mini-batch index lists for one epoch over `n` rows: a shuffled order cut
/// into runs of `batch` (the last may be short).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, Rng& rng);

struct TrainSpec {
    std::size_t epochs = 1;
    std::size_t batch = 32;
    double lr = 0.05;
    double mu = 0.0;                        // proximal pull towards `anchor`
    const AugmentPolicy* augment = nullptr; // nullptr = no augmentation
    ImageShape shape;
};

/// SGD over rows of (images, labels); returns the number of steps taken.
std::size_t train_sgd(ModelParams& params, const ModelParams& anchor, const Tensor2& images,
                      std::span<const int> labels, std::span<const std::size_t> rows, const TrainSpec& spec,
                      Rng& rng);

struct ClientResult {
    std::size_t client = 0;
    ModelParams model;
    std::size_t steps = 0;        // local SGD steps (tau)
    std::size_t aux_used = 0;     // condensed examples fine-tuned on
    std::optional<CondensedSet> condensed;
};

/// Condenses (when enabled), then trains E_c epochs on the real shard.
ClientResult client_update_wo_cd(const FederationContext& ctx, std::size_t k, const ModelParams& w, Rng& rng,
                                 bool condense);

/// Trains on the real shard, then fine-tunes E_s epochs on own condensed
/// set plus the received pool.
ClientResult client_update_w_cd(const FederationContext& ctx, std::size_t k, const ModelParams& w,
                                 const CondensedSet& own, std::span<const CondensedSet> received, Rng& rng);

/// Exploitation draw probabilities over `candidates` (ids in cka), each
/// proportional to its off-diagonal CKA row sum. Uniform if all sums are 0.
std::vector<double> exploit_probabilities(const CkaMatrix& cka, std::span<const std::size_t> candidates);

/// Index drawn with the given probabilities (inverse CDF on uniform01).
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);

/// `n` distinct values of 0..population-1 by partial Fisher-Yates, in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t n, Rng& rng);

/// Participants for a training round, sorted ascending.
std::vector<std::size_t> select_participants(const ServerState& state, const ExperimentConfig& cfg, Rng& rng);

/// The `group_size` seen clients other than k with the lowest CKA to k; ties
/// by ascending id. Result sorted ascending.
std::vector<std::size_t> complement_group_for(std::size_t k, const CkaMatrix& cka, std::size_t group_size);

/// p_k proportional to shard size plus auxiliary condensed examples used.
std::vector<double> optimized_weights(std::span<const std::size_t> shard_sizes,
                                      std::span<const std::size_t> aux_counts);

struct WeightedModel {
    const ModelParams* model;
    double weight;
    std::size_t steps;
};

/// New global model; members must be in ascending client order.
ModelParams aggregate(Aggregation strategy, const ModelParams& global, std::span<const WeightedModel> clients);

/// Server-side CKA representation of a returned model.
Tensor2 cka_representation(const FederationContext& ctx, const ModelParams& model);

/// Pretraining rounds and the server update on the condensed store.
void pretrain_server(const FederationContext& ctx, ServerState& state);

/// One training round; appends its metrics to state.metrics.
const RoundMetrics& run_round(const FederationContext& ctx, ServerState& state);

/// Initial state: Glorot model from the master seed.
ServerState initial_state(const FederationContext& ctx);

struct CommFormula {
    double upload = 0, download = 0, baseline_per_round = 0;
};

/// Closed-form estimates: upload K*cpc*ipc*d, download
/// K*(K*C_com - 1)*cpc*ipc*d, model traffic |params|*(K*C_com)*2 per round.
CommFormula comm_formula(double K, double cpc, double ipc, double image_size, double C_com, double params);

struct CommReport {
    std::size_t model_up = 0, model_down = 0, condensed_up = 0, condensed_down = 0;
    CommFormula formula;
    double cpc = 0;
};

CommReport comm_volume(const ExperimentConfig& cfg, const FederationContext& ctx, std::span<const RoundMetrics> log);

struct ExperimentResult {
    ServerState state;
    CommReport comm;
    std::uint64_t data_fingerprint = 0;
};

/// Pretraining (M rounds, possibly none) then T rounds for cfg.seed.
ExperimentResult run_experiment(const ExperimentConfig& cfg);
ExperimentResult run_experiment(const FederationContext& ctx);

/// First 1-indexed training round (round 0 excluded) reaching `target`, if any.
std::optional<std::size_t> rounds_to_accuracy(std::span<const RoundMetrics> log, double target);

/// Complementarity study: every client trains `local_epochs` from one shared
/// initialization; pairwise classifier CKA, label EMD and weight divergence.
struct ComplementarityStudy {
    std::vector<std::vector<double>> cka, emd, divergence;
    std::vector<std::size_t> group;  // group index per client when grouped
    double spearman_cka_vs_neg_emd = 0;
};

ComplementarityStudy complementarity_study(const ExperimentConfig& cfg, std::size_t local_epochs);

}  // namespace dcfl
