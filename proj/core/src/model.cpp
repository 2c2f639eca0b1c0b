#include "meterfl/model.hpp"

#include <algorithm>
#include <cmath>

#include "meterfl/errors.hpp"
#include "meterfl/rng.hpp"

namespace meterfl {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
    return s;
}

inline int layer_in_width(const ModelConfig& cfg, std::size_t layer) {
    return layer == 0 ? cfg.input_size : cfg.hidden_size;
}

// One cell update. `concat` holds [h_prev | x] (width hidden + in); c is
// updated in place from c_prev which may alias it. All outputs are
// hidden-wide.
void lstm_cell(const LstmLayer& L, int hidden, int width, const double* concat,
               const double* c_prev, double* f, double* i, double* g, double* o,
               double* c, double* tanh_c, double* h) {
    const std::size_t w = static_cast<std::size_t>(width);
    for (int r = 0; r < hidden; ++r)
        f[r] = sigmoid(L.b_f[r] + dot(&L.w_f[r * w], concat, w));
    for (int r = 0; r < hidden; ++r)
        i[r] = sigmoid(L.b_i[r] + dot(&L.w_i[r * w], concat, w));
    for (int r = 0; r < hidden; ++r)
        g[r] = std::tanh(L.b_c[r] + dot(&L.w_c[r * w], concat, w));
    for (int r = 0; r < hidden; ++r)
        o[r] = sigmoid(L.b_o[r] + dot(&L.w_o[r * w], concat, w));
    for (int r = 0; r < hidden; ++r) {
        c[r] = f[r] * c_prev[r] + i[r] * g[r];
        tanh_c[r] = std::tanh(c[r]);
        h[r] = o[r] * tanh_c[r];
    }
}

void check_input(const ModelParams& params, std::span<const double> input) {
    const auto& cfg = params.config;
    if (input.size() != static_cast<std::size_t>(cfg.window) * cfg.input_size)
        throw ShapeError("input length " + std::to_string(input.size()) +
                         " does not match window " + std::to_string(cfg.window));
    for (double x : input)
        if (!std::isfinite(x)) throw NumericError("non-finite model input");
}

void forward_sequence_into(const ModelParams& params, std::span<const double> input,
                           std::span<const double> mask, ForwardTrace& trace) {
    const auto& cfg = params.config;
    const int H = cfg.hidden_size;
    const int T = cfg.window;
    check_input(params, input);
    if (!mask.empty() && mask.size() != static_cast<std::size_t>(H))
        throw ShapeError("dropout mask length does not match hidden size");

    trace.layers.resize(params.layers.size());
    std::vector<double> concat(static_cast<std::size_t>(2 * H) + 1);
    const std::vector<double> zeros(static_cast<std::size_t>(H), 0.0);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const int iw = layer_in_width(cfg, l);
        LayerTrace& lt = trace.layers[l];
        const std::size_t th = static_cast<std::size_t>(T) * H;
        lt.f.resize(th);
        lt.i.resize(th);
        lt.g.resize(th);
        lt.o.resize(th);
        lt.c.resize(th);
        lt.h.resize(th);
        lt.tanh_c.resize(th);
        lt.inputs.resize(static_cast<std::size_t>(T) * iw);
    }

    for (int t = 0; t < T; ++t) {
        const double* x = &input[static_cast<std::size_t>(t) * cfg.input_size];
        for (std::size_t l = 0; l < params.layers.size(); ++l) {
            LayerTrace& lt = trace.layers[l];
            const int lw = layer_in_width(cfg, l);
            const std::size_t row = static_cast<std::size_t>(t) * H;

            const double* h_prev = t > 0 ? &lt.h[row - H] : zeros.data();
            const double* c_prev = t > 0 ? &lt.c[row - H] : zeros.data();
            std::copy(h_prev, h_prev + H, concat.begin());
            std::copy(x, x + lw, concat.begin() + H);
            std::copy(x, x + lw, &lt.inputs[static_cast<std::size_t>(t) * lw]);

            lstm_cell(params.layers[l], H, H + lw, concat.data(), c_prev, &lt.f[row],
                      &lt.i[row], &lt.g[row], &lt.o[row], &lt.c[row], &lt.tanh_c[row],
                      &lt.h[row]);
            x = &lt.h[row];
        }
    }

    const LayerTrace& top = trace.layers.back();
    const std::size_t last = static_cast<std::size_t>(T - 1) * H;
    trace.h_final.assign(top.h.begin() + static_cast<std::ptrdiff_t>(last),
                         top.h.begin() + static_cast<std::ptrdiff_t>(last + H));
    trace.dropout_mask.assign(mask.begin(), mask.end());
    if (!mask.empty()) {
        const double keep = 1.0 - cfg.dropout_rate;
        for (int r = 0; r < H; ++r) trace.h_final[r] *= mask[r] / keep;
    }
    trace.y_hat = params.b_d + dot(params.w_d.data(), trace.h_final.data(),
                                   static_cast<std::size_t>(H));
}

} // namespace

void ModelConfig::validate() const {
    if (input_size != 1) throw ConfigError("input_size must be 1 (single load channel)");
    if (hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
    if (window < 1) throw ConfigError("window must be >= 1");
    if (!(dropout_rate >= 0.0) || dropout_rate >= 1.0)
        throw ConfigError("dropout_rate must lie in [0, 1)");
    if (num_layers < 1 || num_layers > 2)
        throw ConfigError("num_layers must be 1 or 2");
}

std::size_t ModelParams::value_count() const {
    std::size_t n = 0;
    for_each_tensor(*this, [&](const double*, std::size_t len) { n += len; });
    return n;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    const int H = config.hidden_size;
    const double bound = 1.0 / std::sqrt(static_cast<double>(H));
    Rng rng(seed);

    ModelParams p;
    p.config = config;
    p.layers.resize(static_cast<std::size_t>(config.num_layers));
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const std::size_t wsize =
            static_cast<std::size_t>(H) * static_cast<std::size_t>(H + layer_in_width(config, l));
        LstmLayer& layer = p.layers[l];
        for (auto* w : {&layer.w_f, &layer.w_i, &layer.w_c, &layer.w_o}) {
            w->resize(wsize);
            for (double& v : *w) v = rng.uniform(-bound, bound);
        }
        layer.b_f.assign(static_cast<std::size_t>(H), 1.0); // forget-gate bias starts open
        layer.b_i.assign(static_cast<std::size_t>(H), 0.0);
        layer.b_c.assign(static_cast<std::size_t>(H), 0.0);
        layer.b_o.assign(static_cast<std::size_t>(H), 0.0);
    }
    p.w_d.resize(static_cast<std::size_t>(H));
    for (double& v : p.w_d) v = rng.uniform(-bound, bound);
    p.b_d = 0.0;
    return p;
}

StepResult forward_step(const ModelParams& params, double x_t,
                        std::span<const double> h_prev, std::span<const double> c_prev) {
    const int H = params.config.hidden_size;
    if (h_prev.size() != static_cast<std::size_t>(H) ||
        c_prev.size() != static_cast<std::size_t>(H))
        throw ShapeError("state length does not match hidden size");
    if (!std::isfinite(x_t)) throw NumericError("non-finite step input");
    for (int r = 0; r < H; ++r)
        if (!std::isfinite(h_prev[r]) || !std::isfinite(c_prev[r]))
            throw NumericError("non-finite step state");

    StepResult out;
    out.h.resize(static_cast<std::size_t>(H));
    out.c.resize(static_cast<std::size_t>(H));
    out.f.resize(static_cast<std::size_t>(H));
    out.i.resize(static_cast<std::size_t>(H));
    out.g.resize(static_cast<std::size_t>(H));
    out.o.resize(static_cast<std::size_t>(H));

    std::vector<double> concat(static_cast<std::size_t>(H) + 1);
    std::copy(h_prev.begin(), h_prev.end(), concat.begin());
    concat[static_cast<std::size_t>(H)] = x_t;

    std::vector<double> tanh_c(static_cast<std::size_t>(H));
    lstm_cell(params.layers[0], H, H + 1, concat.data(), c_prev.data(), out.f.data(),
              out.i.data(), out.g.data(), out.o.data(), out.c.data(), tanh_c.data(),
              out.h.data());
    return out;
}

ForwardTrace forward_sequence(const ModelParams& params, std::span<const double> input,
                              std::span<const double> dropout_mask) {
    ForwardTrace trace;
    forward_sequence_into(params, input, dropout_mask, trace);
    return trace;
}

double predict(const ModelParams& params, std::span<const double> input, PredictWorkspace& ws) {
    const auto& cfg = params.config;
    const int H = cfg.hidden_size;
    const int T = cfg.window;
    check_input(params, input);

    const std::size_t L = params.layers.size();
    ws.h.assign(L * static_cast<std::size_t>(H), 0.0);
    ws.c.assign(L * static_cast<std::size_t>(H), 0.0);
    ws.concat.resize(static_cast<std::size_t>(2 * H) + 1);
    ws.f.resize(static_cast<std::size_t>(H));
    ws.i.resize(static_cast<std::size_t>(H));
    ws.g.resize(static_cast<std::size_t>(H));
    ws.o.resize(static_cast<std::size_t>(H));
    std::vector<double> tanh_c(static_cast<std::size_t>(H));

    for (int t = 0; t < T; ++t) {
        const double* x = &input[static_cast<std::size_t>(t)];
        int lw = cfg.input_size;
        for (std::size_t l = 0; l < L; ++l) {
            double* h = &ws.h[l * static_cast<std::size_t>(H)];
            double* c = &ws.c[l * static_cast<std::size_t>(H)];
            std::copy(h, h + H, ws.concat.begin());
            std::copy(x, x + lw, ws.concat.begin() + H);
            lstm_cell(params.layers[l], H, H + lw, ws.concat.data(), c, ws.f.data(),
                      ws.i.data(), ws.g.data(), ws.o.data(), c, tanh_c.data(), h);
            x = h;
            lw = H;
        }
    }
    const double* h_top = &ws.h[(L - 1) * static_cast<std::size_t>(H)];
    return params.b_d + dot(params.w_d.data(), h_top, static_cast<std::size_t>(H));
}

double predict(const ModelParams& params, std::span<const double> input) {
    PredictWorkspace ws;
    return predict(params, input, ws);
}

double loss_mae(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.empty()) throw ShapeError("loss over empty input");
    if (predictions.size() != targets.size()) throw ShapeError("prediction/target length mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < predictions.size(); ++k)
        s += std::abs(targets[k] - predictions[k]);
    return s / static_cast<double>(predictions.size());
}

double loss_rmse(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.empty()) throw ShapeError("loss over empty input");
    if (predictions.size() != targets.size()) throw ShapeError("prediction/target length mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < predictions.size(); ++k) {
        const double d = targets[k] - predictions[k];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(predictions.size()));
}

Gradients zero_like(const ModelParams& params) {
    Gradients g = params;
    for_each_tensor(g, [](double* data, std::size_t n) { std::fill(data, data + n, 0.0); });
    return g;
}

double backward(const ModelParams& params, const SequenceSet& data,
                std::span<const std::size_t> batch, std::span<const double> masks,
                Gradients& out) {
    const auto& cfg = params.config;
    const int H = cfg.hidden_size;
    const int T = cfg.window;
    const std::size_t L = params.layers.size();
    if (batch.empty()) throw ShapeError("empty training batch");
    if (!masks.empty() && masks.size() != batch.size() * static_cast<std::size_t>(H))
        throw ShapeError("dropout mask block does not match batch size");

    out = zero_like(params);
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    ForwardTrace trace;
    std::vector<double> dh_carry(L * static_cast<std::size_t>(H));
    std::vector<double> dc_carry(L * static_cast<std::size_t>(H));
    std::vector<double> dh(static_cast<std::size_t>(H));
    std::vector<double> da(static_cast<std::size_t>(2 * H) + 1);
    std::vector<double> dx_pass(static_cast<std::size_t>(H));
    std::vector<double> concat(static_cast<std::size_t>(2 * H) + 1);

    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
        const std::size_t s = batch[bi];
        std::span<const double> mask =
            masks.empty() ? std::span<const double>{}
                          : masks.subspan(bi * static_cast<std::size_t>(H),
                                          static_cast<std::size_t>(H));
        forward_sequence_into(params, data.input(s), mask, trace);

        const double residual = trace.y_hat - data.targets[s];
        loss_sum += std::abs(residual);
        // MAE subgradient; zero residual contributes nothing by convention.
        const double dy = residual > 0.0 ? inv_b : (residual < 0.0 ? -inv_b : 0.0);
        if (dy == 0.0) continue;

        for (int r = 0; r < H; ++r) out.w_d[r] += dy * trace.h_final[r];
        out.b_d += dy;

        // Gradient into the top layer's raw final hidden state.
        std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
        std::fill(dc_carry.begin(), dc_carry.end(), 0.0);
        {
            double* top = &dh_carry[(L - 1) * static_cast<std::size_t>(H)];
            const double keep = 1.0 - cfg.dropout_rate;
            for (int r = 0; r < H; ++r) {
                double v = dy * params.w_d[r];
                if (!mask.empty()) v *= mask[r] / keep;
                top[r] = v;
            }
        }

        for (int t = T - 1; t >= 0; --t) {
            for (std::size_t l = L; l-- > 0;) {
                const LayerTrace& lt = trace.layers[l];
                const LstmLayer& lp = params.layers[l];
                LstmLayer& lg = out.layers[l];
                const int iw = layer_in_width(cfg, l);
                const std::size_t width = static_cast<std::size_t>(H + iw);
                const std::size_t row = static_cast<std::size_t>(t) * H;

                double* carry_h = &dh_carry[l * static_cast<std::size_t>(H)];
                double* carry_c = &dc_carry[l * static_cast<std::size_t>(H)];
                for (int r = 0; r < H; ++r) dh[r] = carry_h[r];
                if (l + 1 < L)
                    for (int r = 0; r < H; ++r) dh[r] += dx_pass[r];

                const double* h_prev = t > 0 ? &lt.h[row - H] : nullptr;
                const double* c_prev = t > 0 ? &lt.c[row - H] : nullptr;
                const double* x = &lt.inputs[static_cast<std::size_t>(t) * iw];
                for (int r = 0; r < H; ++r) concat[r] = h_prev ? h_prev[r] : 0.0;
                for (int k = 0; k < iw; ++k) concat[H + k] = x[k];

                std::fill(da.begin(), da.begin() + static_cast<std::ptrdiff_t>(width), 0.0);
                for (int r = 0; r < H; ++r) {
                    const double f = lt.f[row + r];
                    const double ig = lt.i[row + r];
                    const double g = lt.g[row + r];
                    const double o = lt.o[row + r];
                    const double tc = lt.tanh_c[row + r];

                    const double dc =
                        dh[r] * o * (1.0 - tc * tc) + carry_c[r];
                    const double dz_o = dh[r] * tc * o * (1.0 - o);
                    const double dz_f = dc * (c_prev ? c_prev[r] : 0.0) * f * (1.0 - f);
                    const double dz_i = dc * g * ig * (1.0 - ig);
                    const double dz_c = dc * ig * (1.0 - g * g);
                    carry_c[r] = dc * f;

                    lg.b_f[r] += dz_f;
                    lg.b_i[r] += dz_i;
                    lg.b_c[r] += dz_c;
                    lg.b_o[r] += dz_o;

                    const std::size_t base = static_cast<std::size_t>(r) * width;
                    double* gwf = &lg.w_f[base];
                    double* gwi = &lg.w_i[base];
                    double* gwc = &lg.w_c[base];
                    double* gwo = &lg.w_o[base];
                    const double* wf = &lp.w_f[base];
                    const double* wi = &lp.w_i[base];
                    const double* wc = &lp.w_c[base];
                    const double* wo = &lp.w_o[base];
                    for (std::size_t k = 0; k < width; ++k) {
                        const double a = concat[k];
                        gwf[k] += dz_f * a;
                        gwi[k] += dz_i * a;
                        gwc[k] += dz_c * a;
                        gwo[k] += dz_o * a;
                        da[k] += wf[k] * dz_f + wi[k] * dz_i + wc[k] * dz_c + wo[k] * dz_o;
                    }
                }

                for (int r = 0; r < H; ++r) carry_h[r] = da[static_cast<std::size_t>(r)];
                if (l > 0)
                    for (int k = 0; k < iw; ++k) dx_pass[static_cast<std::size_t>(k)] = da[H + k];
            }
        }
    }

    const double loss = loss_sum * inv_b;
    if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
    return loss;
}

void sgd_step_inplace(ModelParams& params, const Gradients& grads, double lr) {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    for_each_tensor_pair(params, grads,
                         [lr](double* p, const double* g, std::size_t n) {
                             for (std::size_t k = 0; k < n; ++k) p[k] -= lr * g[k];
                         });
}

ModelParams sgd_step(const ModelParams& params, const Gradients& grads, double lr) {
    ModelParams next = params;
    sgd_step_inplace(next, grads, lr);
    return next;
}

bool clip_gradients(Gradients& grads, double max_norm) {
    if (max_norm <= 0.0) return false;
    double sq = 0.0;
    for_each_tensor(grads, [&](const double* g, std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) sq += g[k] * g[k];
    });
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return false;
    const double scale = max_norm / norm;
    for_each_tensor(grads, [scale](double* g, std::size_t n) {
        for (std::size_t k = 0; k < n; ++k) g[k] *= scale;
    });
    return true;
}

std::vector<double> make_dropout_mask(Rng& rng, int hidden_size, double rate) {
    std::vector<double> mask(static_cast<std::size_t>(hidden_size));
    for (double& m : mask) m = rng.uniform() < rate ? 0.0 : 1.0;
    return mask;
}

} // namespace meterfl
