#include "meterfl/fl.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>

#include "meterfl/errors.hpp"
#include "meterfl/rng.hpp"

namespace meterfl {

namespace {

// Runs fn(0..n-1) on worker threads. Job results must depend only on the job
// index; the first failure (by index) is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const unsigned hw = std::thread::hardware_concurrency();
    const std::size_t workers = std::min<std::size_t>(n, hw > 0 ? hw : 2);
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t k = next.fetch_add(1);
                if (k >= n) break;
                try {
                    fn(k);
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string round_client_tag(int round, int client) {
    return "round " + std::to_string(round) + " client " + std::to_string(client) + ": ";
}

// Keeps the error family intact so the CLI exit-code mapping survives
// annotation.
template <class Fn>
auto with_round_context(int round, int client, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(round_client_tag(round, client) + e.what());
    } catch (const DataError& e) {
        throw DataError(round_client_tag(round, client) + e.what());
    } catch (const TrainingError& e) {
        throw TrainingError(round_client_tag(round, client) + e.what());
    }
}

struct NormalizedEval {
    double mae = 0.0;
    double rmse = 0.0;
};

NormalizedEval eval_normalized(const ModelParams& w, const SequenceSet& set) {
    std::vector<double> preds(set.count());
    PredictWorkspace ws;
    for (std::size_t k = 0; k < set.count(); ++k) preds[k] = predict(w, set.input(k), ws);
    return {loss_mae(preds, set.targets), loss_rmse(preds, set.targets)};
}

} // namespace

std::string to_string(RunMode mode) {
    switch (mode) {
        case RunMode::MetaPfl: return "meta_pfl";
        case RunMode::FedAvgFixed: return "fedavg_fixed";
        case RunMode::Standalone: return "standalone";
        case RunMode::Centralized: return "centralized";
    }
    return "meta_pfl";
}

RunMode parse_run_mode(const std::string& text) {
    if (text == "meta_pfl") return RunMode::MetaPfl;
    if (text == "fedavg_fixed") return RunMode::FedAvgFixed;
    if (text == "standalone") return RunMode::Standalone;
    if (text == "centralized") return RunMode::Centralized;
    throw ConfigError("unknown run mode '" + text + "'");
}

void FLConfig::validate() const {
    if (global_rounds < 1) throw ConfigError("global_rounds must be >= 1");
    if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
    if (probe_epochs < 0) throw ConfigError("probe_epochs must be >= 0");
    if (candidate_lrs.empty()) throw ConfigError("candidate_lrs must not be empty");
    for (double lr : candidate_lrs)
        if (!(lr > 0.0)) throw ConfigError("candidate learning rates must be positive");
    std::vector<double> sorted = candidate_lrs;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ConfigError("candidate learning rates must be distinct");
    if (!(fixed_lr > 0.0)) throw ConfigError("fixed_lr must be positive");
    model.validate();
}

ModelParams local_train(const ModelParams& w, const ClientDataset& client, double lr,
                        int epochs, const FLConfig& cfg, std::uint64_t stream_seed,
                        TrainStats* stats) {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (client.batch_size < 1) throw ConfigError("batch size must be >= 1");
    const SequenceSet& train = client.train;
    if (train.count() == 0) throw DataError("client train set is empty");

    const int H = cfg.model.hidden_size;
    const double rate = cfg.model.dropout_rate;
    const std::size_t bs = static_cast<std::size_t>(client.batch_size);

    ModelParams params = w;
    Gradients grads;
    Rng rng(stream_seed);
    std::vector<std::size_t> order(train.count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> masks;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += bs, ++batch_no) {
            const std::size_t bsz = std::min(bs, order.size() - start);
            const std::span<const std::size_t> batch(&order[start], bsz);

            masks.clear();
            if (rate > 0.0) {
                masks.resize(bsz * static_cast<std::size_t>(H));
                for (double& m : masks) m = rng.uniform() < rate ? 0.0 : 1.0;
            }

            double loss = 0.0;
            try {
                loss = backward(params, train, batch, masks, grads);
            } catch (const NumericError& e) {
                throw TrainingError("training diverged at epoch " + std::to_string(epoch) +
                                    " batch " + std::to_string(batch_no) + ": " + e.what());
            }
            if (clip_gradients(grads, cfg.clip_norm) && stats) ++stats->clip_events;
            sgd_step_inplace(params, grads, lr);
            if (stats) {
                stats->loss_sum += loss;
                ++stats->batches;
            }
        }
    }
    return params;
}

double evaluate_mae(const ModelParams& w, const SequenceSet& set) {
    if (set.count() == 0) throw DataError("empty evaluation set");
    return eval_normalized(w, set).mae;
}

EvalMetrics evaluate(const ModelParams& w, const SequenceSet& test, const Scaler& scaler) {
    if (test.count() == 0) throw DataError("empty evaluation set");
    const NormalizedEval e = eval_normalized(w, test);
    const double factor = scaler.max - scaler.min;
    return {e.mae, e.rmse, e.mae * factor, e.rmse * factor};
}

double probe_learning_rates(const ModelParams& w, const ClientDataset& client,
                            const FLConfig& cfg, int round) {
    if (cfg.candidate_lrs.empty()) throw ConfigError("candidate_lrs must not be empty");
    if (client.probe.count() == 0) throw ProbeError("client probe set is empty");
    if (cfg.candidate_lrs.size() == 1) return cfg.candidate_lrs[0];

    // Every candidate trials with the same shuffle/mask stream, so the
    // comparison isolates the learning rate.
    const std::uint64_t trial_seed =
        derive_seed(cfg.seed, Stream::Probe, static_cast<std::uint64_t>(round),
                    static_cast<std::uint64_t>(client.id));

    double best_lr = 0.0;
    double best_loss = std::numeric_limits<double>::infinity();
    bool found = false;
    for (double lr : cfg.candidate_lrs) {
        double loss = std::numeric_limits<double>::infinity();
        if (cfg.probe_epochs == 0) {
            loss = evaluate_mae(w, client.probe);
        } else {
            try {
                const ModelParams trial =
                    local_train(w, client, lr, cfg.probe_epochs, cfg, trial_seed);
                loss = evaluate_mae(trial, client.probe);
            } catch (const TrainingError&) {
                // Diverged candidate; leave it out of the argmin.
            }
        }
        if (!std::isfinite(loss)) continue;
        if (!found || loss < best_loss || (loss == best_loss && lr < best_lr)) {
            best_lr = lr;
            best_loss = loss;
            found = true;
        }
    }
    if (!found) throw ProbeError("all candidate learning rates diverged");
    return best_lr;
}

ModelParams fedavg(std::span<const ModelParams> client_params) {
    if (client_params.empty()) throw AggregationError("cannot aggregate zero models");
    if (client_params.size() == 1) return client_params[0];
    std::vector<double> weights(client_params.size(),
                                1.0 / static_cast<double>(client_params.size()));
    return fedavg_weighted(client_params, weights);
}

ModelParams fedavg_weighted(std::span<const ModelParams> client_params,
                            std::span<const double> weights) {
    if (client_params.empty()) throw AggregationError("cannot aggregate zero models");
    if (client_params.size() != weights.size())
        throw AggregationError("one weight per client model required");
    for (const ModelParams& p : client_params)
        if (!(p.config == client_params[0].config))
            throw AggregationError("client models have mismatched shapes");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw AggregationError("aggregation weights must be nonnegative");
        total += w;
    }
    if (!(total > 0.0)) throw AggregationError("aggregation weights sum to zero");

    ModelParams acc = zero_like(client_params[0]);
    for (std::size_t m = 0; m < client_params.size(); ++m) {
        const double w = weights[m] / total;
        for_each_tensor_pair(acc, client_params[m],
                             [w](double* a, const double* b, std::size_t n) {
                                 for (std::size_t k = 0; k < n; ++k) a[k] += w * b[k];
                             });
    }
    return acc;
}

History run_experiment(const FLConfig& cfg, const std::vector<ClientDataset>& clients,
                       const SequenceSet& test) {
    cfg.validate();
    if (clients.empty()) throw ConfigError("experiment needs at least one client");
    if (test.count() == 0) throw DataError("empty test set");
    for (const ClientDataset& c : clients)
        if (c.train.count() == 0)
            throw DataError("client " + std::to_string(c.id) + " has an empty train set");

    const std::size_t m = clients.size();
    ModelParams global = init_params(cfg.model, derive_seed(cfg.seed, Stream::Init));

    History hist;
    hist.records.reserve(static_cast<std::size_t>(cfg.global_rounds));

    // Centralized pools every client's train set into one simulated node.
    ClientDataset pooled;
    if (cfg.mode == RunMode::Centralized) {
        pooled.id = 0;
        pooled.batch_size = clients[0].batch_size;
        pooled.train.window = clients[0].train.window;
        pooled.probe.window = clients[0].train.window;
        for (const ClientDataset& c : clients)
            for (std::size_t k = 0; k < c.train.count(); ++k)
                pooled.train.push_back(c.train.input(k), c.train.targets[k]);
    }

    // Standalone keeps one independent model per client.
    std::vector<ModelParams> standalone_models;
    if (cfg.mode == RunMode::Standalone) standalone_models.assign(m, global);

    // Per-client scratch for the federated modes.
    std::vector<ClientState> states;
    if (cfg.mode == RunMode::MetaPfl || cfg.mode == RunMode::FedAvgFixed) {
        states.reserve(m);
        for (const ClientDataset& c : clients) states.push_back({c, global, 0.0});
    }

    std::vector<ModelParams> locals(m);
    std::vector<TrainStats> stats(m);
    std::vector<NormalizedEval> client_evals(m);

    for (int round = 1; round <= cfg.global_rounds; ++round) {
        RoundRecord rec;
        rec.round = round;

        switch (cfg.mode) {
            case RunMode::Centralized: {
                TrainStats st;
                global = with_round_context(round, 0, [&] {
                    return local_train(global, pooled, cfg.fixed_lr, cfg.local_epochs, cfg,
                                       derive_seed(cfg.seed, Stream::LocalTrain,
                                                   static_cast<std::uint64_t>(round), 0),
                                       &st);
                });
                rec.per_client_lr = {cfg.fixed_lr};
                rec.train_loss_mae = st.batches > 0 ? st.loss_sum / double(st.batches) : 0.0;
                rec.clip_events = st.clip_events;
                const NormalizedEval e = eval_normalized(global, test);
                rec.test_mae = e.mae;
                rec.test_rmse = e.rmse;
                break;
            }
            case RunMode::Standalone: {
                std::fill(stats.begin(), stats.end(), TrainStats{});
                parallel_for(m, [&](std::size_t k) {
                    with_round_context(round, clients[k].id, [&] {
                        standalone_models[k] = local_train(
                            standalone_models[k], clients[k], cfg.fixed_lr, cfg.local_epochs,
                            cfg,
                            derive_seed(cfg.seed, Stream::LocalTrain,
                                        static_cast<std::uint64_t>(round),
                                        static_cast<std::uint64_t>(clients[k].id)),
                            &stats[k]);
                        client_evals[k] = eval_normalized(standalone_models[k], test);
                    });
                });
                rec.per_client_lr.assign(m, cfg.fixed_lr);
                double loss_sum = 0.0, mae = 0.0, rmse = 0.0;
                std::size_t batches = 0;
                for (std::size_t k = 0; k < m; ++k) {
                    loss_sum += stats[k].loss_sum;
                    batches += stats[k].batches;
                    rec.clip_events += stats[k].clip_events;
                    mae += client_evals[k].mae;
                    rmse += client_evals[k].rmse;
                }
                rec.train_loss_mae = batches > 0 ? loss_sum / double(batches) : 0.0;
                rec.test_mae = mae / double(m);
                rec.test_rmse = rmse / double(m);
                break;
            }
            case RunMode::MetaPfl:
            case RunMode::FedAvgFixed: {
                std::fill(stats.begin(), stats.end(), TrainStats{});
                const bool meta = cfg.mode == RunMode::MetaPfl;
                parallel_for(m, [&](std::size_t k) {
                    ClientState& st = states[k];
                    with_round_context(round, st.dataset.id, [&] {
                        st.chosen_lr =
                            meta ? probe_learning_rates(global, st.dataset, cfg, round)
                                 : cfg.fixed_lr;
                        st.local_params = local_train(
                            global, st.dataset, st.chosen_lr, cfg.local_epochs, cfg,
                            derive_seed(cfg.seed, Stream::LocalTrain,
                                        static_cast<std::uint64_t>(round),
                                        static_cast<std::uint64_t>(st.dataset.id)),
                            &stats[k]);
                    });
                });
                rec.per_client_lr.resize(m);
                for (std::size_t k = 0; k < m; ++k) {
                    locals[k] = states[k].local_params;
                    rec.per_client_lr[k] = states[k].chosen_lr;
                }
                if (cfg.weighted_fedavg) {
                    std::vector<double> weights(m);
                    for (std::size_t k = 0; k < m; ++k)
                        weights[k] = static_cast<double>(clients[k].train.count());
                    global = fedavg_weighted(locals, weights);
                } else {
                    global = fedavg(locals);
                }
                double loss_sum = 0.0;
                std::size_t batches = 0;
                for (std::size_t k = 0; k < m; ++k) {
                    loss_sum += stats[k].loss_sum;
                    batches += stats[k].batches;
                    rec.clip_events += stats[k].clip_events;
                }
                rec.train_loss_mae = batches > 0 ? loss_sum / double(batches) : 0.0;
                const NormalizedEval e = eval_normalized(global, test);
                rec.test_mae = e.mae;
                rec.test_rmse = e.rmse;
                break;
            }
        }
        hist.records.push_back(std::move(rec));
    }

    hist.final_params =
        cfg.mode == RunMode::Standalone ? standalone_models.front() : global;
    return hist;
}

} // namespace meterfl
