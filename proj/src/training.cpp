#include "kgram/training.hpp"

#include <cmath>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "kgram/ngram.hpp"
#include "kgram/random.hpp"

namespace kgram {

AdamWState AdamWState::init(const WeightSet& w) {
    AdamWState st;
    st.m.reserve(w.items.size());
    st.v.reserve(w.items.size());
    for (const auto& [name, t] : w.items) {
        st.m.emplace_back(t.numel(), 0.0);
        st.v.emplace_back(t.numel(), 0.0);
    }
    return st;
}

namespace {

bool decay_exempt(const std::string& name) {
    return name == "out.b" || name.find(".ln") != std::string::npos;
}

}  // namespace

void adamw_step(WeightSet& weights, const std::vector<std::vector<double>>& grads, AdamWState& state,
                const AdamWHyper& hyper) {
    if (grads.size() != weights.items.size()) fail(ErrorCode::dimension, "adamw_step: grads do not match weights");
    state.step += 1;
    double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < weights.items.size(); ++i) {
        auto& [name, t] = weights.items[i];
        const auto& g = grads[i];
        if (static_cast<long>(g.size()) != t.numel()) fail(ErrorCode::dimension, "adamw_step: grad shape mismatch at " + name);
        auto& w = t.mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        bool decay = !decay_exempt(name) && hyper.weight_decay != 0.0;
        for (size_t j = 0; j < w.size(); ++j) {
            m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
            v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            w[j] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
            if (decay) w[j] -= hyper.lr * hyper.weight_decay * w[j];
        }
    }
}

TrainConfig TrainConfig::defaults(int S, int k, int L, int d, int T) {
    TrainConfig cfg;
    cfg.spec.variant = Variant::StandardPreLN;
    cfg.spec.layers = L;
    cfg.spec.heads.assign(L, 1);
    cfg.spec.d = d;
    cfg.spec.S = S;
    cfg.spec.T_max = T;
    cfg.spec.pos_mode = PosMode::LearnedAbsolute;
    cfg.spec.output_nl = OutputNl::Softmax;
    cfg.S = S;
    cfg.k = k;
    cfg.T = T;
    return cfg;
}

void TrainConfig::validate() const {
    spec.validate();
    if (spec.variant != Variant::StandardPreLN || spec.output_nl != OutputNl::Softmax ||
        spec.pos_mode != PosMode::LearnedAbsolute)
        fail(ErrorCode::config, "train: spec must be the standard pre-LN variant with softmax output and learned positions");
    if (spec.S != S) fail(ErrorCode::config, "train: spec alphabet differs from data alphabet");
    if (T > spec.T_max) fail(ErrorCode::config, "train: T exceeds spec T_max");
    if (iterations < 1 || batch_size < 1 || eval_period < 1) fail(ErrorCode::config, "train: bad iteration/batch config");
    if (k < 1 || T < k + 1) fail(ErrorCode::config, "train: need k >= 1 and T >= k+1");
    if (threads < 1) fail(ErrorCode::config, "train: threads >= 1");
}

namespace {

// Loss graph for one sequence: rows k..T-1 predict x_{k+1}..x_T.
Tensor sequence_loss(const TransformerSpec& spec, const WeightSet& w, const Sequence& seq, int k) {
    Tensor probs = forward_tape(spec, w, seq);
    int T = seq.length();
    std::vector<int> targets(T, 0);
    for (int r = 0; r + 1 < T; ++r) targets[r] = seq.symbols[r + 1];
    return ops::cross_entropy_mean(probs, targets, /*start=*/k, /*end=*/T - 1);
}

struct BatchGrad {
    double loss = 0.0;
    std::vector<std::vector<double>> grads;  // aligned with weights.items
};

// Per-sequence gradient on a private copy of the weights so batches can be
// distributed over threads; reduction order is fixed by the caller.
BatchGrad sequence_grad(const TransformerSpec& spec, const WeightSet& shared, const Sequence& seq, int k) {
    WeightSet local;
    for (const auto& [name, t] : shared.items) {
        Tensor c = Tensor::from_data(t.shape(), t.data(), true);
        local.add(name, std::move(c));
    }
    Tensor loss = sequence_loss(spec, local, seq, k);
    loss.backward();
    BatchGrad out;
    out.loss = loss.item();
    out.grads.reserve(local.items.size());
    for (auto& [name, t] : local.items) out.grads.push_back(t.grad());
    return out;
}

}  // namespace

Predictor model_predictor(const TransformerSpec& spec, const WeightSet& weights, int k) {
    if (spec.output_nl != OutputNl::Softmax)
        fail(ErrorCode::contract, "model_predictor: output nonlinearity must be softmax");
    auto model = std::make_shared<EvalModelD>(EvalModelD::build(spec, weights));
    return [model, k](const Sequence& seq) {
        ForwardResult fr = model->forward(seq);
        int T = seq.length(), S = seq.S;
        std::vector<Distribution> out;
        out.reserve(T - k);
        for (int n = k + 1; n <= T; ++n) {
            // row n-1 (1-based) carries the prediction for x_n
            const double* row = fr.outputs.data() + static_cast<long>(n - 2) * S;
            out.push_back(Distribution::of(std::vector<double>(row, row + S)));
        }
        return out;
    };
}

Predictor laplace_predictor(int k_pred, int k_data) {
    if (k_pred < 1 || k_pred > k_data)
        fail(ErrorCode::contract, "laplace_predictor: need 1 <= k_pred <= data order");
    return [k_pred, k_data](const Sequence& seq) {
        int T = seq.length();
        std::vector<Distribution> out;
        out.reserve(T - k_data);
        for (int n = k_data + 1; n <= T; ++n) {
            Sequence prefix{seq.S, std::vector<int>(seq.symbols.begin(), seq.symbols.begin() + (n - 1))};
            out.push_back(laplace_kgram(prefix, k_pred, 1.0));
        }
        return out;
    };
}

EvalResult evaluate(const TransformerSpec& spec, const WeightSet& weights, int S, int k, int T, int n_seqs,
                    uint64_t seed) {
    return optimal_loss(S, k, model_predictor(spec, weights, k), n_seqs, T, seed);
}

TrainResult train(const TrainConfig& cfg, uint64_t seed) {
    cfg.validate();
    WeightSet weights = init_weights(cfg.spec, mix64(seed ^ hash_tag("init")));
    AdamWState state = AdamWState::init(weights);
    uint64_t eval_seed = mix64(seed ^ hash_tag("eval"));
    Rng data_seeder(seed, "train-data");

    TrainResult result;
    std::vector<std::vector<double>> grad_acc;
    grad_acc.reserve(weights.items.size());
    for (auto& [name, t] : weights.items) grad_acc.emplace_back(t.numel(), 0.0);

    auto run_eval = [&](long iter, double train_loss, int n_seqs, uint64_t es) {
        EvalResult ev = evaluate(cfg.spec, weights, cfg.S, cfg.k, cfg.T, n_seqs, es);
        result.log.rows.push_back({iter, train_loss, ev.model_loss, ev.bayes_loss, ev.gap});
        return ev;
    };

    double last_train_loss = 0.0;
    bool stopped = false;
    for (int iter = 1; iter <= cfg.iterations && !stopped; ++iter) {
        // fresh kernel per sequence
        std::vector<Sequence> batch;
        batch.reserve(cfg.batch_size);
        Rng it_seeder = data_seeder.fork(iter);
        for (int b = 0; b < cfg.batch_size; ++b) {
            MarkovKernel kernel = sample_kernel(cfg.S, cfg.k, it_seeder.fork(2 * b).next_u64());
            batch.push_back(sample_sequence(kernel, cfg.T, it_seeder.fork(2 * b + 1).next_u64()));
        }

        std::vector<BatchGrad> per_seq(cfg.batch_size);
        if (cfg.threads <= 1) {
            for (int b = 0; b < cfg.batch_size; ++b) per_seq[b] = sequence_grad(cfg.spec, weights, batch[b], cfg.k);
        } else {
            std::vector<std::thread> pool;
            int nt = std::min(cfg.threads, cfg.batch_size);
            for (int t = 0; t < nt; ++t) {
                pool.emplace_back([&, t]() {
                    for (int b = t; b < cfg.batch_size; b += nt)
                        per_seq[b] = sequence_grad(cfg.spec, weights, batch[b], cfg.k);
                });
            }
            for (auto& th : pool) th.join();
        }

        double batch_loss = 0.0;
        for (auto& g : grad_acc) std::fill(g.begin(), g.end(), 0.0);
        for (int b = 0; b < cfg.batch_size; ++b) {  // fixed reduction order
            batch_loss += per_seq[b].loss;
            for (size_t i = 0; i < grad_acc.size(); ++i) {
                const auto& src = per_seq[b].grads[i];
                auto& dst = grad_acc[i];
                for (size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
            }
        }
        batch_loss /= cfg.batch_size;
        if (!std::isfinite(batch_loss))
            fail(ErrorCode::numeric, "train: loss diverged at iteration " + std::to_string(iter));
        for (auto& g : grad_acc)
            for (double& v : g) v /= cfg.batch_size;

        AdamWHyper hyper = cfg.opt;
        hyper.lr = cfg.opt.lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(iter) / cfg.iterations));
        adamw_step(weights, grad_acc, state, hyper);
        last_train_loss = batch_loss;
        result.iterations_run = iter;

        if (iter % cfg.eval_period == 0 && iter < cfg.iterations) {
            EvalResult ev = run_eval(iter, batch_loss, cfg.eval_seqs, eval_seed);
            if (cfg.early_stop_gap > 0.0 && ev.gap < cfg.early_stop_gap) stopped = true;
        }
    }
    // final evaluation on a fresh held-out sample
    run_eval(result.iterations_run, last_train_loss, cfg.final_eval_seqs, mix64(seed ^ hash_tag("final-eval")));
    result.weights = std::move(weights);
    return result;
}

std::string TrainLog::to_csv() const {
    std::ostringstream os;
    os << "iteration,train_loss,test_loss,bayes_loss,gap\n";
    os.setf(std::ios::fmtflags(0), std::ios::floatfield);
    os.precision(17);
    for (const auto& r : rows)
        os << r.iteration << "," << r.train_loss << "," << r.test_loss << "," << r.bayes_loss << "," << r.gap << "\n";
    return os.str();
}

std::string train_config_to_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["spec"] = nlohmann::ordered_json::parse(spec_to_json_str(cfg.spec));
    j["optimizer"] = {{"lr", cfg.opt.lr},
                      {"beta1", cfg.opt.beta1},
                      {"beta2", cfg.opt.beta2},
                      {"eps", cfg.opt.eps},
                      {"weight_decay", cfg.opt.weight_decay}};
    j["iterations"] = cfg.iterations;
    j["batch_size"] = cfg.batch_size;
    j["T"] = cfg.T;
    j["S"] = cfg.S;
    j["k"] = cfg.k;
    j["eval_period"] = cfg.eval_period;
    j["eval_seqs"] = cfg.eval_seqs;
    j["final_eval_seqs"] = cfg.final_eval_seqs;
    j["early_stop_gap"] = cfg.early_stop_gap;
    j["threads"] = cfg.threads;
    return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::config, std::string("train config parse error: ") + e.what());
    }
    try {
        TrainConfig cfg;
        cfg.spec = spec_from_json_str(j.at("spec").dump());
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            cfg.opt.lr = o.value("lr", cfg.opt.lr);
            cfg.opt.beta1 = o.value("beta1", cfg.opt.beta1);
            cfg.opt.beta2 = o.value("beta2", cfg.opt.beta2);
            cfg.opt.eps = o.value("eps", cfg.opt.eps);
            cfg.opt.weight_decay = o.value("weight_decay", cfg.opt.weight_decay);
        }
        cfg.iterations = j.value("iterations", cfg.iterations);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.T = j.value("T", cfg.T);
        cfg.S = j.value("S", cfg.S);
        cfg.k = j.value("k", cfg.k);
        cfg.eval_period = j.value("eval_period", cfg.eval_period);
        cfg.eval_seqs = j.value("eval_seqs", cfg.eval_seqs);
        cfg.final_eval_seqs = j.value("final_eval_seqs", cfg.final_eval_seqs);
        cfg.early_stop_gap = j.value("early_stop_gap", cfg.early_stop_gap);
        cfg.threads = j.value("threads", cfg.threads);
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::config, std::string("train config structure error: ") + e.what());
    }
}

}  // namespace kgram
