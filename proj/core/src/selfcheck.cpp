#include "meterfl/selfcheck.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "meterfl/errors.hpp"
#include "meterfl/fl.hpp"
#include "meterfl/model.hpp"
#include "meterfl/rng.hpp"

namespace meterfl {

namespace {

SequenceSet sine_sequences(int window, std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    SequenceSet set;
    set.window = window;
    const double phase = rng.uniform(0.0, 6.28);
    for (std::size_t s = 0; s < count; ++s) {
        std::vector<double> in(static_cast<std::size_t>(window));
        for (int t = 0; t < window; ++t)
            in[static_cast<std::size_t>(t)] =
                0.5 + 0.35 * std::sin(phase + 0.26 * (double(s) + t)) +
                0.02 * rng.uniform(-1.0, 1.0);
        const double target = 0.5 + 0.35 * std::sin(phase + 0.26 * (double(s) + window));
        set.push_back(in, target);
    }
    return set;
}

double batch_mae(const ModelParams& p, const SequenceSet& data,
                 std::span<const std::size_t> batch) {
    double sum = 0.0;
    for (std::size_t s : batch)
        sum += std::abs(forward_sequence(p, data.input(s)).y_hat - data.targets[s]);
    return sum / static_cast<double>(batch.size());
}

// Central-difference gradient comparison over every tensor. Returns the
// worst guarded relative error.
double gradient_check(int hidden, int window, std::uint64_t seed) {
    ModelConfig cfg;
    cfg.hidden_size = hidden;
    cfg.window = window;
    cfg.dropout_rate = 0.0;
    ModelParams params = init_params(cfg, seed);

    const SequenceSet data = sine_sequences(window, 3, seed ^ 0x77);
    std::vector<std::size_t> batch(data.count());
    std::iota(batch.begin(), batch.end(), std::size_t{0});

    Gradients analytic;
    backward(params, data, batch, {}, analytic);

    const double eps = 1e-5;
    double worst = 0.0;
    ModelParams probe = params;
    for_each_tensor_pair(probe, analytic, [&](double* p, const double* g, std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) {
            const double keep = p[k];
            p[k] = keep + eps;
            const double up = batch_mae(probe, data, batch);
            p[k] = keep - eps;
            const double down = batch_mae(probe, data, batch);
            p[k] = keep;
            const double numeric = (up - down) / (2.0 * eps);
            const double denom = std::max({std::abs(numeric), std::abs(g[k]), 1e-4});
            worst = std::max(worst, std::abs(numeric - g[k]) / denom);
        }
    });
    return worst;
}

using CheckFn = std::function<void()>;

struct Failure {
    std::string what;
};

void expect(bool ok, const std::string& what) {
    if (!ok) throw Failure{what};
}

} // namespace

bool run_self_checks(std::ostream& out) {
    struct Check {
        const char* name;
        CheckFn fn;
    };

    const std::vector<Check> checks = {
        {"bptt gradients vs central differences",
         [] {
             for (int hidden : {2, 4})
                 for (int window : {3, 8}) {
                     const double worst = gradient_check(hidden, window, 11);
                     expect(worst < 1e-4, "relative error " + std::to_string(worst));
                 }
         }},
        {"forward pass determinism and gate bounds",
         [] {
             ModelConfig cfg;
             cfg.hidden_size = 8;
             cfg.window = 24;
             const ModelParams params = init_params(cfg, 3);
             const SequenceSet data = sine_sequences(24, 4, 9);
             for (std::size_t s = 0; s < data.count(); ++s) {
                 const ForwardTrace a = forward_sequence(params, data.input(s));
                 const ForwardTrace b = forward_sequence(params, data.input(s));
                 expect(a.y_hat == b.y_hat, "evaluation is not bit-deterministic");
                 for (const LayerTrace& lt : a.layers)
                     for (std::size_t k = 0; k < lt.f.size(); ++k) {
                         expect(lt.f[k] > 0.0 && lt.f[k] < 1.0, "forget gate out of (0,1)");
                         expect(lt.i[k] > 0.0 && lt.i[k] < 1.0, "input gate out of (0,1)");
                         expect(lt.o[k] > 0.0 && lt.o[k] < 1.0, "output gate out of (0,1)");
                         expect(lt.g[k] > -1.0 && lt.g[k] < 1.0, "candidate out of (-1,1)");
                     }
             }
         }},
        {"fedavg identities",
         [] {
             ModelConfig cfg;
             cfg.hidden_size = 5;
             cfg.window = 6;
             std::vector<ModelParams> models;
             for (std::uint64_t s = 0; s < 5; ++s) models.push_back(init_params(cfg, s));

             const ModelParams one = fedavg({&models[0], 1});
             bool identical = true;
             for_each_tensor_pair(one, models[0],
                                  [&](const double* a, const double* b, std::size_t n) {
                                      for (std::size_t k = 0; k < n; ++k)
                                          identical = identical && a[k] == b[k];
                                  });
             expect(identical, "single-model aggregation is not the identity");

             const ModelParams avg = fedavg(models);
             std::vector<ModelParams> reversed(models.rbegin(), models.rend());
             const ModelParams avg_rev = fedavg(reversed);
             double worst = 0.0;
             for_each_tensor_pair(avg, avg_rev,
                                  [&](const double* a, const double* b, std::size_t n) {
                                      for (std::size_t k = 0; k < n; ++k)
                                          worst = std::max(worst, std::abs(a[k] - b[k]));
                                  });
             expect(worst < 1e-12, "aggregation is not permutation invariant");
         }},
        {"loss fixtures and ordering",
         [] {
             const std::vector<double> y{1.0, 2.0};
             const std::vector<double> yhat{2.0, 4.0};
             expect(std::abs(loss_mae(yhat, y) - 1.5) < 1e-12, "MAE fixture");
             expect(std::abs(loss_rmse(yhat, y) - std::sqrt(2.5)) < 1e-12, "RMSE fixture");
             Rng rng(17);
             for (int trial = 0; trial < 200; ++trial) {
                 std::vector<double> a(8), b(8);
                 for (std::size_t k = 0; k < a.size(); ++k) {
                     a[k] = rng.uniform(-2.0, 2.0);
                     b[k] = rng.uniform(-2.0, 2.0);
                 }
                 expect(loss_rmse(a, b) >= loss_mae(a, b) - 1e-15, "RMSE < MAE");
             }
         }},
        {"scaler round trip",
         [] {
             Rng rng(23);
             for (int trial = 0; trial < 100; ++trial) {
                 std::vector<double> vals(16);
                 for (double& v : vals) v = rng.uniform(0.0, 8.0);
                 vals[0] = 0.0; // guarantee distinct extrema
                 vals[1] = 8.0;
                 const Scaler sc = fit_scaler(vals);
                 for (double v : vals)
                     expect(std::abs(sc.inverse(sc.transform(v)) - v) < 1e-9,
                            "inverse(transform) drifted");
             }
         }},
        {"probe argmin vs exhaustive evaluation",
         [] {
             ModelConfig mc;
             mc.hidden_size = 6;
             mc.window = 8;
             mc.dropout_rate = 0.0;
             FLConfig cfg;
             cfg.model = mc;
             cfg.probe_epochs = 2;
             cfg.candidate_lrs = {0.05, 0.01, 0.002};
             cfg.seed = 5;

             ClientDataset client;
             client.id = 0;
             client.batch_size = 8;
             client.train = sine_sequences(8, 40, 31);
             client.probe = sine_sequences(8, 10, 32);

             const ModelParams w = init_params(mc, 2);
             const double chosen = probe_learning_rates(w, client, cfg, 1);

             double best_lr = 0.0, best_loss = 1e300;
             for (const double lr : cfg.candidate_lrs) {
                 const ModelParams trial = local_train(
                     w, client, lr, cfg.probe_epochs, cfg,
                     derive_seed(cfg.seed, Stream::Probe, 1, 0));
                 const double loss = evaluate_mae(trial, client.probe);
                 if (loss < best_loss || (loss == best_loss && lr < best_lr)) {
                     best_loss = loss;
                     best_lr = lr;
                 }
             }
             expect(chosen == best_lr, "probe disagrees with exhaustive argmin");
         }},
        {"dropout keeps the hidden state unbiased",
         [] {
             const int hidden = 16;
             const double rate = 0.2;
             Rng rng(41);
             std::vector<double> h(hidden);
             for (double& v : h) v = rng.uniform(0.5, 1.5);
             std::vector<double> mean(hidden, 0.0);
             const int trials = 4000;
             for (int i = 0; i < trials; ++i) {
                 const std::vector<double> mask = make_dropout_mask(rng, hidden, rate);
                 for (int r = 0; r < hidden; ++r)
                     mean[static_cast<std::size_t>(r)] +=
                         h[static_cast<std::size_t>(r)] * mask[static_cast<std::size_t>(r)] /
                         (1.0 - rate) / trials;
             }
             for (int r = 0; r < hidden; ++r) {
                 const double rel = std::abs(mean[static_cast<std::size_t>(r)] -
                                             h[static_cast<std::size_t>(r)]) /
                                    h[static_cast<std::size_t>(r)];
                 expect(rel < 0.05, "dropout expectation off by " + std::to_string(rel));
             }
         }},
    };

    bool all_ok = true;
    for (const Check& check : checks) {
        try {
            check.fn();
            out << "[ ok ] " << check.name << "\n";
        } catch (const Failure& f) {
            all_ok = false;
            out << "[FAIL] " << check.name << ": " << f.what << "\n";
        } catch (const std::exception& e) {
            all_ok = false;
            out << "[FAIL] " << check.name << ": " << e.what() << "\n";
        }
    }
    return all_ok;
}

} // namespace meterfl
