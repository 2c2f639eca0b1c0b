#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meterfl/data.hpp"
#include "meterfl/model.hpp"

namespace meterfl {

enum class RunMode { MetaPfl, FedAvgFixed, Standalone, Centralized };

std::string to_string(RunMode mode);
RunMode parse_run_mode(const std::string& text); // throws ConfigError

struct FLConfig {
    int global_rounds = 100; // K
    int probe_epochs = 10;   // trial-training epochs per candidate rate
    int local_epochs = 50;   // T
    std::vector<double> candidate_lrs{0.05, 0.001, 0.0001};
    std::uint64_t seed = 1;
    RunMode mode = RunMode::MetaPfl;
    double fixed_lr = 0.001; // used by fedavg_fixed / standalone / centralized
    bool weighted_fedavg = false;
    double clip_norm = 5.0; // global L2 gradient clip; <= 0 disables
    ModelConfig model;

    // probe_epochs == 0 is accepted and skips the trial training entirely,
    // which makes a singleton-candidate meta run coincide with fedavg_fixed.
    void validate() const; // throws ConfigError
};

struct ClientState {
    ClientDataset dataset;
    ModelParams local_params;
    double chosen_lr = 0.0;
};

struct RoundRecord {
    int round = 0; // 1-based
    std::vector<double> per_client_lr;
    double train_loss_mae = 0.0;
    double test_mae = 0.0;  // normalized units
    double test_rmse = 0.0; // normalized units
    int clip_events = 0;
};

struct History {
    std::vector<RoundRecord> records;
    ModelParams final_params;
};

struct TrainStats {
    double loss_sum = 0.0;
    std::size_t batches = 0;
    int clip_events = 0;
};

struct EvalMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double mae_kw = 0.0;
    double rmse_kw = 0.0;
};

// Trial-trains a copy of `w` on the client's train set at every candidate
// rate, scores each on the held-out probe set, and returns the rate with the
// lowest probe MAE (ties go to the smaller rate). Candidates whose trial
// diverges to a non-finite loss are skipped. `w` is never modified.
double probe_learning_rates(const ModelParams& w, const ClientDataset& client,
                            const FLConfig& cfg, int round);

// `epochs` passes of mini-batch SGD over the client's train set starting
// from a copy of `w`: seeded shuffle per epoch, fresh dropout masks per
// batch, gradient clipping per cfg.clip_norm. stream_seed selects the
// shuffle/mask stream.
ModelParams local_train(const ModelParams& w, const ClientDataset& client, double lr,
                        int epochs, const FLConfig& cfg, std::uint64_t stream_seed,
                        TrainStats* stats = nullptr);

// Unweighted elementwise mean of the client models.
ModelParams fedavg(std::span<const ModelParams> client_params);

// Mean weighted by `weights` (normalized internally).
ModelParams fedavg_weighted(std::span<const ModelParams> client_params,
                            std::span<const double> weights);

// Evaluation-mode MAE/RMSE over `test`, in normalized units and in kW.
EvalMetrics evaluate(const ModelParams& w, const SequenceSet& test, const Scaler& scaler);

// MAE of `w` on `set` in normalized units; the probe's scoring function.
double evaluate_mae(const ModelParams& w, const SequenceSet& set);

// The full simulation: K rounds of broadcast, per-client work (probing when
// mode is meta_pfl), aggregation, and test evaluation. Per-client work runs
// on worker threads; aggregation and records are ordered by client id, so
// results are deterministic for a given config and data.
History run_experiment(const FLConfig& cfg, const std::vector<ClientDataset>& clients,
                       const SequenceSet& test);

} // namespace meterfl
