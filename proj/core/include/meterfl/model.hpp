#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "meterfl/data.hpp"
#include "meterfl/rng.hpp"

namespace meterfl {

struct ModelConfig {
    int input_size = 1;
    int hidden_size = 50;
    int window = 24;
    double dropout_rate = 0.2;
    int num_layers = 1; // a second stacked LSTM layer is optional

    void validate() const; // throws ConfigError
    bool operator==(const ModelConfig&) const = default;
};

// One LSTM layer. Each gate weight matrix has shape hidden x (hidden + in),
// row-major, acting on the concatenation [h_prev, x_t].
struct LstmLayer {
    std::vector<double> w_f, w_i, w_c, w_o;
    std::vector<double> b_f, b_i, b_c, b_o;
};

// Every trainable tensor of the forecaster: the LSTM stack plus the dense
// head that maps the last hidden state to the next-hour prediction.
struct ModelParams {
    ModelConfig config;
    std::vector<LstmLayer> layers;
    std::vector<double> w_d; // hidden
    double b_d = 0.0;

    std::size_t tensor_count() const { return layers.size() * 8 + 2; }
    std::size_t value_count() const;
};

// Same shapes as ModelParams, one slot per parameter.
using Gradients = ModelParams;

// Applies fn(data, len) to every parameter tensor in the fixed layer-major
// order (per layer: w_f b_f w_i b_i w_c b_c w_o b_o, then w_d b_d).
template <class Params, class Fn>
void for_each_tensor(Params& p, Fn&& fn) {
    for (auto& layer : p.layers) {
        fn(layer.w_f.data(), layer.w_f.size());
        fn(layer.b_f.data(), layer.b_f.size());
        fn(layer.w_i.data(), layer.w_i.size());
        fn(layer.b_i.data(), layer.b_i.size());
        fn(layer.w_c.data(), layer.w_c.size());
        fn(layer.b_c.data(), layer.b_c.size());
        fn(layer.w_o.data(), layer.w_o.size());
        fn(layer.b_o.data(), layer.b_o.size());
    }
    fn(p.w_d.data(), p.w_d.size());
    fn(&p.b_d, std::size_t{1});
}

template <class PA, class PB, class Fn>
void for_each_tensor_pair(PA& a, PB& b, Fn&& fn) {
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        auto& la = a.layers[l];
        auto& lb = b.layers[l];
        fn(la.w_f.data(), lb.w_f.data(), la.w_f.size());
        fn(la.b_f.data(), lb.b_f.data(), la.b_f.size());
        fn(la.w_i.data(), lb.w_i.data(), la.w_i.size());
        fn(la.b_i.data(), lb.b_i.data(), la.b_i.size());
        fn(la.w_c.data(), lb.w_c.data(), la.w_c.size());
        fn(la.b_c.data(), lb.b_c.data(), la.b_c.size());
        fn(la.w_o.data(), lb.w_o.data(), la.w_o.size());
        fn(la.b_o.data(), lb.b_o.data(), la.b_o.size());
    }
    fn(a.w_d.data(), b.w_d.data(), a.w_d.size());
    fn(&a.b_d, &b.b_d, std::size_t{1});
}

// Everything the backward pass needs from one forward run. Rows are
// timesteps; all per-step vectors are hidden-wide and row-major.
struct LayerTrace {
    std::vector<double> f, i, g, o; // gate activations, g = candidate tanh
    std::vector<double> c, h;       // cell and hidden state after each step
    std::vector<double> tanh_c;
    std::vector<double> inputs;     // layer input at each step (in-width rows)
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
    std::vector<double> dropout_mask; // empty when evaluating
    std::vector<double> h_final;      // post-dropout hidden fed to the head
    double y_hat = 0.0;
};

struct StepResult {
    std::vector<double> h, c;
    std::vector<double> f, i, g, o;
};

// Uniform weights in [-1/sqrt(hidden), +1/sqrt(hidden)], zero biases except
// the forget-gate bias, which starts at 1.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// One LSTM cell update on the first layer; the single-step building block.
StepResult forward_step(const ModelParams& params, double x_t,
                        std::span<const double> h_prev, std::span<const double> c_prev);

// Full pass over one input window. A non-empty hidden-wide 0/1 mask enables
// inverted dropout on the final hidden state; empty means evaluation mode.
ForwardTrace forward_sequence(const ModelParams& params, std::span<const double> input,
                              std::span<const double> dropout_mask = {});

// Evaluation-mode prediction without building a trace.
class PredictWorkspace {
public:
    std::vector<double> h, c, concat, f, i, g, o;
};
double predict(const ModelParams& params, std::span<const double> input, PredictWorkspace& ws);
double predict(const ModelParams& params, std::span<const double> input);

double loss_mae(std::span<const double> predictions, std::span<const double> targets);
double loss_rmse(std::span<const double> predictions, std::span<const double> targets);

// Gradients of batch-mean MAE via backpropagation through time. `batch`
// indexes into `data`; `masks` is batch.count x hidden (empty disables
// dropout). Gradients are accumulated into `out`, which must be zeroed and
// shape-congruent. Returns the batch-mean MAE.
double backward(const ModelParams& params, const SequenceSet& data,
                std::span<const std::size_t> batch, std::span<const double> masks,
                Gradients& out);

Gradients zero_like(const ModelParams& params);

// p <- p - lr * g, as a pure update.
ModelParams sgd_step(const ModelParams& params, const Gradients& grads, double lr);
void sgd_step_inplace(ModelParams& params, const Gradients& grads, double lr);

// Rescales gradients so their global L2 norm is at most max_norm. Returns
// true when rescaling happened. max_norm <= 0 disables clipping.
bool clip_gradients(Gradients& grads, double max_norm);

// Hidden-wide 0/1 keep mask for inverted dropout.
std::vector<double> make_dropout_mask(Rng& rng, int hidden_size, double rate);

} // namespace meterfl
