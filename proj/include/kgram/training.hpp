#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgram/markov.hpp"
#include "kgram/transformer.hpp"

namespace kgram {

struct AdamWHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 1e-3;
};

// Per-tensor first/second moment estimates, step counter shared.
struct AdamWState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long step = 0;

    static AdamWState init(const WeightSet& w);
};

// Decoupled-weight-decay Adam with bias correction. Decay is skipped for
// bias and layer-norm gain/shift parameters (names containing ".ln" or
// equal to "out.b").
void adamw_step(WeightSet& weights, const std::vector<std::vector<double>>& grads, AdamWState& state,
                const AdamWHyper& hyper);

struct TrainConfig {
    TransformerSpec spec;
    AdamWHyper opt;
    int iterations = 25000;
    int batch_size = 16;
    int T = 256;
    int S = 2;
    int k = 2;
    int eval_period = 500;
    int eval_seqs = 64;
    int final_eval_seqs = 200;
    // Stop once the evaluated gap drops below this (0 disables early stop);
    // the cosine schedule stays anchored to `iterations`.
    double early_stop_gap = 0.0;
    int threads = 1;

    static TrainConfig defaults(int S, int k, int L, int d, int T);
    void validate() const;
};

struct TrainLogRow {
    long iteration = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
    double bayes_loss = 0.0;
    double gap = 0.0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;

    std::string to_csv() const;
};

struct TrainResult {
    WeightSet weights;
    TrainLog log;
    long iterations_run = 0;
};

// AdamW training on next-token cross-entropy over positions k+1..T, one
// fresh kernel per sequence per iteration, cosine learning-rate decay to 0.
// Deterministic given (cfg, seed) for any thread count: per-sequence
// gradients are reduced in sequence-index order.
TrainResult train(const TrainConfig& cfg, uint64_t seed);

// Wraps a trained model as a Predictor and delegates to optimal_loss.
EvalResult evaluate(const TransformerSpec& spec, const WeightSet& weights, int S, int k, int T, int n_seqs,
                    uint64_t seed);

Predictor model_predictor(const TransformerSpec& spec, const WeightSet& weights, int k);
// Laplace-smoothed in-context k-gram as a predictor (for baselines and the
// low-order "ceiling" comparison); k_pred may differ from the data order.
Predictor laplace_predictor(int k_pred, int k_data);

// JSON (de)serialization of TrainConfig for the CLI.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace kgram
