#include "kgram/transformer.hpp"

#include <cblas.h>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "kgram/random.hpp"

namespace kgram {

namespace {

using ops::add;
using ops::add_rowvec;
using ops::gather_rows;
using ops::layernorm_rows;
using ops::layernorm_rows_fixed;
using ops::matmul;
using ops::matmul_nt;
using ops::rel_score;
using ops::rel_value;
using ops::relu;
using ops::row_softmax;

std::string layer_name(int l) { return "layer" + std::to_string(l); }
std::string head_name(int l, int h) { return layer_name(l) + ".head" + std::to_string(h); }

struct ParamDesc {
    std::string name;
    std::vector<long> shape;
    enum class Init { gaussian, zeros, ones } init;
};

std::vector<ParamDesc> enumerate_params(const TransformerSpec& spec) {
    using Init = ParamDesc::Init;
    std::vector<ParamDesc> out;
    long d = spec.d, S = spec.S, Tm = spec.T_max;
    out.push_back({"emb", {S, d}, Init::gaussian});
    if (spec.pos_mode == PosMode::LearnedAbsolute) {
        out.push_back({"wpe", {Tm, d}, Init::gaussian});
    }
    for (int l = 1; l <= spec.layers; ++l) {
        if (spec.pos_mode == PosMode::RelativeKV) {
            out.push_back({"pos." + layer_name(l) + ".K", {Tm, d}, Init::zeros});
            out.push_back({"pos." + layer_name(l) + ".V", {Tm, d}, Init::zeros});
        }
        if (spec.variant == Variant::StandardPreLN) {
            out.push_back({layer_name(l) + ".ln1.gain", {d}, Init::ones});
            out.push_back({layer_name(l) + ".ln1.shift", {d}, Init::zeros});
        }
        for (int h = 1; h <= spec.heads_at(l - 1); ++h) {
            out.push_back({head_name(l, h) + ".W_K", {d, d}, Init::gaussian});
            out.push_back({head_name(l, h) + ".W_Q", {d, d}, Init::gaussian});
            out.push_back({head_name(l, h) + ".W_V", {d, d}, Init::gaussian});
            out.push_back({head_name(l, h) + ".W_O", {d, d}, Init::gaussian});
        }
        if (spec.variant == Variant::StandardPreLN) {
            out.push_back({layer_name(l) + ".ln2.gain", {d}, Init::ones});
            out.push_back({layer_name(l) + ".ln2.shift", {d}, Init::zeros});
        }
        if (spec.has_ffn(l - 1)) {
            long dff = spec.ffn_width();
            out.push_back({layer_name(l) + ".ffn.W_1", {dff, d}, Init::gaussian});
            out.push_back({layer_name(l) + ".ffn.W_2", {d, dff}, Init::gaussian});
        }
    }
    out.push_back({"out.A", {S, d}, Init::gaussian});
    out.push_back({"out.b", {S}, Init::zeros});
    return out;
}

void check_input(const TransformerSpec& spec, const Sequence& seq) {
    if (seq.length() < 1) fail(ErrorCode::contract, "forward: empty sequence");
    if (seq.length() > spec.T_max)
        fail(ErrorCode::capacity,
             "forward: T=" + std::to_string(seq.length()) + " exceeds T_max=" + std::to_string(spec.T_max));
    for (int s : seq.symbols)
        if (s < 0 || s >= spec.S) fail(ErrorCode::contract, "forward: symbol " + std::to_string(s) + " outside alphabet");
}

// Row-major C[m x n] = A @ B (+ transposes); cblas for double, loops for float.
template <typename Real>
void gemm_rm(bool ta, bool tb, long m, long n, long k, const Real* a, const Real* b, Real* c) {
    if constexpr (std::is_same_v<Real, double>) {
        cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                    static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a,
                    static_cast<int>(ta ? m : k), b, static_cast<int>(tb ? k : n), 0.0, c, static_cast<int>(n));
    } else {
        for (long i = 0; i < m; ++i)
            for (long j = 0; j < n; ++j) c[i * n + j] = Real(0);
        for (long i = 0; i < m; ++i) {
            for (long l = 0; l < k; ++l) {
                Real av = ta ? a[l * m + i] : a[i * k + l];
                if (av == Real(0)) continue;
                const Real* brow = tb ? nullptr : b + l * n;
                for (long j = 0; j < n; ++j) {
                    Real bv = tb ? b[j * k + l] : brow[j];
                    c[i * n + j] += av * bv;
                }
            }
        }
    }
}

}  // namespace

bool TransformerSpec::has_ffn(int layer) const {
    if (variant == Variant::AttentionOnly) return false;
    if (ffn_layers.empty()) return true;
    return ffn_layers.at(layer);
}

void TransformerSpec::validate() const {
    if (layers < 1) fail(ErrorCode::contract, "spec: layers must be >= 1");
    if (static_cast<int>(heads.size()) != layers) fail(ErrorCode::contract, "spec: heads list must have one entry per layer");
    for (int h : heads)
        if (h < 1) fail(ErrorCode::contract, "spec: heads must be >= 1");
    if (d < 2 || S < 2 || T_max < 1) fail(ErrorCode::contract, "spec: bad dimensions");
    if (!ffn_layers.empty() && static_cast<int>(ffn_layers.size()) != layers)
        fail(ErrorCode::contract, "spec: ffn_layers must have one entry per layer");
    if (variant == Variant::AttentionOnly && !ffn_layers.empty())
        fail(ErrorCode::contract, "spec: attention-only variant carries no FFN");
}

void WeightSet::add(const std::string& name, Tensor t) {
    if (index.count(name)) fail(ErrorCode::contract, "duplicate weight " + name);
    index[name] = items.size();
    items.push_back({name, std::move(t)});
}

Tensor& WeightSet::at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) fail(ErrorCode::contract, "missing weight " + name);
    return items[it->second].second;
}

const Tensor& WeightSet::at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) fail(ErrorCode::contract, "missing weight " + name);
    return items[it->second].second;
}

void WeightSet::set_requires_grad(bool rg) {
    for (auto& [name, t] : items) t.node()->requires_grad = rg;
}

long WeightSet::total_params() const {
    long n = 0;
    for (auto& [name, t] : items) n += t.numel();
    return n;
}

const AttentionTrace::Entry& AttentionTrace::find(int layer, int head) const {
    for (const auto& e : entries)
        if (e.layer == layer && e.head == head) return e;
    fail(ErrorCode::contract, "no trace for layer " + std::to_string(layer) + " head " + std::to_string(head));
}

WeightSet init_weights(const TransformerSpec& spec, uint64_t seed) {
    spec.validate();
    WeightSet ws;
    for (const auto& p : enumerate_params(spec)) {
        Tensor t(p.shape, false);
        auto& data = t.mutable_data();
        switch (p.init) {
            case ParamDesc::Init::gaussian: {
                uint64_t tag = hash_tag(p.name);
                for (long s : p.shape) tag = mix64(tag ^ static_cast<uint64_t>(s));
                Rng rng(seed, tag);
                for (double& v : data) v = 0.02 * rng.gaussian();
                break;
            }
            case ParamDesc::Init::zeros:
                break;
            case ParamDesc::Init::ones:
                for (double& v : data) v = 1.0;
                break;
        }
        ws.add(p.name, std::move(t));
    }
    return ws;
}

Tensor forward_tape(const TransformerSpec& spec, const WeightSet& w, const Sequence& seq) {
    spec.validate();
    check_input(spec, seq);
    int T = seq.length();

    Tensor x = gather_rows(w.at("emb"), seq.symbols);
    if (spec.pos_mode == PosMode::LearnedAbsolute) {
        std::vector<int> iota(T);
        for (int i = 0; i < T; ++i) iota[i] = i;
        x = add(x, gather_rows(w.at("wpe"), iota));
    }

    for (int l = 1; l <= spec.layers; ++l) {
        Tensor h = x;
        if (spec.variant == Variant::StandardPreLN)
            h = layernorm_rows(x, w.at(layer_name(l) + ".ln1.gain"), w.at(layer_name(l) + ".ln1.shift"));

        Tensor att_sum;
        for (int hd = 1; hd <= spec.heads_at(l - 1); ++hd) {
            const Tensor& W_K = w.at(head_name(l, hd) + ".W_K");
            const Tensor& W_Q = w.at(head_name(l, hd) + ".W_Q");
            const Tensor& W_V = w.at(head_name(l, hd) + ".W_V");
            const Tensor& W_O = w.at(head_name(l, hd) + ".W_O");
            Tensor q = matmul_nt(h, W_Q);
            Tensor kx = matmul_nt(h, W_K);
            Tensor scores = matmul_nt(q, kx);
            if (spec.pos_mode == PosMode::RelativeKV)
                scores = add(scores, rel_score(q, matmul_nt(w.at("pos." + layer_name(l) + ".K"), W_K)));
            Tensor att = row_softmax(scores, /*causal=*/true);
            Tensor yh = matmul(att, matmul_nt(h, W_V));
            if (spec.pos_mode == PosMode::RelativeKV)
                yh = add(yh, rel_value(att, matmul_nt(w.at("pos." + layer_name(l) + ".V"), W_V)));
            Tensor contrib = matmul_nt(yh, W_O);
            att_sum = att_sum.defined() ? add(att_sum, contrib) : contrib;
        }
        Tensor xt = add(x, att_sum);

        if (spec.variant == Variant::AttentionOnly) {
            x = xt;
        } else if (spec.variant == Variant::ModifiedLN) {
            if (spec.has_ffn(l - 1)) {
                Tensor y = matmul_nt(relu(matmul_nt(xt, w.at(layer_name(l) + ".ffn.W_1"))),
                                     w.at(layer_name(l) + ".ffn.W_2"));
                double gain = spec.ln_mode == LnMode::L2 ? std::sqrt(2.0 / spec.d) : 1.0;
                x = add(layernorm_rows_fixed(y, gain), xt);
            } else {
                x = xt;
            }
        } else {  // StandardPreLN
            Tensor h2 = layernorm_rows(xt, w.at(layer_name(l) + ".ln2.gain"), w.at(layer_name(l) + ".ln2.shift"));
            Tensor y = matmul_nt(relu(matmul_nt(h2, w.at(layer_name(l) + ".ffn.W_1"))),
                                 w.at(layer_name(l) + ".ffn.W_2"));
            x = add(xt, y);
        }
    }

    Tensor logits = add_rowvec(matmul_nt(x, w.at("out.A")), w.at("out.b"));
    switch (spec.output_nl) {
        case OutputNl::Softmax: return row_softmax(logits, /*causal=*/false);
        case OutputNl::ReLU: return relu(logits);
        case OutputNl::Identity: return logits;
    }
    fail(ErrorCode::contract, "unreachable");
}

// ---------------------------------------------------------------------------
// Plain evaluation path.

template <typename Real>
EvalModel<Real> EvalModel<Real>::build(const TransformerSpec& spec, const WeightSet& weights) {
    spec.validate();
    EvalModel<Real> m;
    m.spec = spec;
    for (const auto& [name, t] : weights.items) {
        std::vector<Real> v(t.data().size());
        for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<Real>(t.data()[i]);
        m.w.emplace(name, std::move(v));
    }
    return m;
}

template <typename Real>
ForwardResult EvalModel<Real>::forward(const Sequence& seq, bool want_trace) const {
    check_input(spec, seq);
    const long T = seq.length(), d = spec.d, S = spec.S;
    auto get = [&](const std::string& name) -> const std::vector<Real>& {
        auto it = w.find(name);
        if (it == w.end()) fail(ErrorCode::contract, "missing weight " + name);
        return it->second;
    };

    std::vector<Real> x(T * d, Real(0));
    {
        const auto& emb = get("emb");
        for (long n = 0; n < T; ++n)
            for (long j = 0; j < d; ++j) x[n * d + j] = emb[seq.symbols[n] * d + j];
        if (spec.pos_mode == PosMode::LearnedAbsolute) {
            const auto& wpe = get("wpe");
            for (long n = 0; n < T; ++n)
                for (long j = 0; j < d; ++j) x[n * d + j] += wpe[n * d + j];
        }
    }

    ForwardResult res;
    res.T = static_cast<int>(T);
    res.S = static_cast<int>(S);

    std::vector<Real> h, q, kx, vx, scores, att, yh, xt, ffn_in, ffn_mid, y;
    for (int l = 1; l <= spec.layers; ++l) {
        const bool pre_ln = spec.variant == Variant::StandardPreLN;
        h = x;
        if (pre_ln) {
            const auto& gain = get(layer_name(l) + ".ln1.gain");
            const auto& shift = get(layer_name(l) + ".ln1.shift");
            for (long n = 0; n < T; ++n) {
                Real* row = h.data() + n * d;
                Real mu = 0;
                for (long j = 0; j < d; ++j) mu += row[j];
                mu /= d;
                Real var = 0;
                for (long j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
                var /= d;
                if (var <= Real(0)) fail(ErrorCode::degenerate_input, "forward: zero variance into layer norm");
                Real sg = std::sqrt(var);
                for (long j = 0; j < d; ++j) row[j] = gain[j] * ((row[j] - mu) / sg) + shift[j];
            }
        }

        xt = x;  // accumulates residual + heads
        const std::vector<Real>* posK = nullptr;
        const std::vector<Real>* posV = nullptr;
        if (spec.pos_mode == PosMode::RelativeKV) {
            posK = &get("pos." + layer_name(l) + ".K");
            posV = &get("pos." + layer_name(l) + ".V");
        }
        for (int hd = 1; hd <= spec.heads_at(l - 1); ++hd) {
            const auto& W_K = get(head_name(l, hd) + ".W_K");
            const auto& W_Q = get(head_name(l, hd) + ".W_Q");
            const auto& W_V = get(head_name(l, hd) + ".W_V");
            const auto& W_O = get(head_name(l, hd) + ".W_O");
            q.assign(T * d, Real(0));
            kx.assign(T * d, Real(0));
            vx.assign(T * d, Real(0));
            gemm_rm<Real>(false, true, T, d, d, h.data(), W_Q.data(), q.data());
            gemm_rm<Real>(false, true, T, d, d, h.data(), W_K.data(), kx.data());
            gemm_rm<Real>(false, true, T, d, d, h.data(), W_V.data(), vx.data());

            std::vector<Real> pk;
            if (posK) {
                pk.assign(spec.T_max * d, Real(0));
                gemm_rm<Real>(false, true, spec.T_max, d, d, posK->data(), W_K.data(), pk.data());
            }
            scores.assign(T * T, Real(0));
            gemm_rm<Real>(false, true, T, T, d, q.data(), kx.data(), scores.data());
            if (posK) {
                for (long n = 0; n < T; ++n)
                    for (long i = 0; i <= n; ++i) {
                        long off = n - i;
                        Real s = 0;
                        const Real* qv = q.data() + n * d;
                        const Real* pv = pk.data() + off * d;
                        for (long j = 0; j < d; ++j) s += qv[j] * pv[j];
                        scores[n * T + i] += s;
                    }
            }
            // causal row softmax with max subtraction
            att.assign(T * T, Real(0));
            for (long n = 0; n < T; ++n) {
                Real mx = -std::numeric_limits<Real>::infinity();
                for (long i = 0; i <= n; ++i) mx = std::max(mx, scores[n * T + i]);
                if (!(mx > -std::numeric_limits<Real>::infinity()))
                    fail(ErrorCode::degenerate_input, "forward: attention row has no valid key");
                Real z = 0;
                for (long i = 0; i <= n; ++i) z += att[n * T + i] = std::exp(scores[n * T + i] - mx);
                for (long i = 0; i <= n; ++i) att[n * T + i] /= z;
            }
            if (want_trace) {
                AttentionTrace::Entry e;
                e.layer = l;
                e.head = hd;
                e.T = static_cast<int>(T);
                e.att.assign(att.begin(), att.end());
                res.trace.entries.push_back(std::move(e));
            }
            yh.assign(T * d, Real(0));
            gemm_rm<Real>(false, false, T, d, T, att.data(), vx.data(), yh.data());
            if (posV) {
                std::vector<Real> pvv(spec.T_max * d, Real(0));
                gemm_rm<Real>(false, true, spec.T_max, d, d, posV->data(), W_V.data(), pvv.data());
                for (long n = 0; n < T; ++n)
                    for (long i = 0; i <= n; ++i) {
                        Real a = att[n * T + i];
                        if (a == Real(0)) continue;
                        const Real* pv = pvv.data() + (n - i) * d;
                        Real* out = yh.data() + n * d;
                        for (long j = 0; j < d; ++j) out[j] += a * pv[j];
                    }
            }
            // xt += yh @ W_O^T
            for (long n = 0; n < T; ++n) {
                const Real* yr = yh.data() + n * d;
                Real* xr = xt.data() + n * d;
                for (long o = 0; o < d; ++o) {
                    Real s = 0;
                    const Real* wr = W_O.data() + o * d;
                    for (long j = 0; j < d; ++j) s += wr[j] * yr[j];
                    xr[o] += s;
                }
            }
        }

        if (spec.variant == Variant::AttentionOnly) {
            x = xt;
        } else if (spec.variant == Variant::ModifiedLN) {
            if (spec.has_ffn(l - 1)) {
                const auto& W1 = get(layer_name(l) + ".ffn.W_1");
                const auto& W2 = get(layer_name(l) + ".ffn.W_2");
                long dff = spec.ffn_width();
                ffn_mid.assign(T * dff, Real(0));
                gemm_rm<Real>(false, true, T, dff, d, xt.data(), W1.data(), ffn_mid.data());
                for (Real& v : ffn_mid) v = v > Real(0) ? v : Real(0);
                y.assign(T * d, Real(0));
                gemm_rm<Real>(false, true, T, d, dff, ffn_mid.data(), W2.data(), y.data());
                Real gain = spec.ln_mode == LnMode::L2 ? static_cast<Real>(std::sqrt(2.0 / spec.d)) : Real(1);
                x = xt;
                for (long n = 0; n < T; ++n) {
                    Real* row = y.data() + n * d;
                    Real mu = 0;
                    for (long j = 0; j < d; ++j) mu += row[j];
                    mu /= d;
                    Real var = 0;
                    for (long j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
                    var /= d;
                    if (var <= Real(0)) fail(ErrorCode::degenerate_input, "forward: zero variance into layer norm");
                    Real sg = std::sqrt(var);
                    Real* xr = x.data() + n * d;
                    for (long j = 0; j < d; ++j) xr[j] += gain * ((row[j] - mu) / sg);
                }
            } else {
                x = xt;
            }
        } else {  // StandardPreLN
            const auto& gain = get(layer_name(l) + ".ln2.gain");
            const auto& shift = get(layer_name(l) + ".ln2.shift");
            ffn_in = xt;
            for (long n = 0; n < T; ++n) {
                Real* row = ffn_in.data() + n * d;
                Real mu = 0;
                for (long j = 0; j < d; ++j) mu += row[j];
                mu /= d;
                Real var = 0;
                for (long j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
                var /= d;
                if (var <= Real(0)) fail(ErrorCode::degenerate_input, "forward: zero variance into layer norm");
                Real sg = std::sqrt(var);
                for (long j = 0; j < d; ++j) row[j] = gain[j] * ((row[j] - mu) / sg) + shift[j];
            }
            const auto& W1 = get(layer_name(l) + ".ffn.W_1");
            const auto& W2 = get(layer_name(l) + ".ffn.W_2");
            long dff = spec.ffn_width();
            ffn_mid.assign(T * dff, Real(0));
            gemm_rm<Real>(false, true, T, dff, d, ffn_in.data(), W1.data(), ffn_mid.data());
            for (Real& v : ffn_mid) v = v > Real(0) ? v : Real(0);
            y.assign(T * d, Real(0));
            gemm_rm<Real>(false, true, T, d, dff, ffn_mid.data(), W2.data(), y.data());
            x = xt;
            for (long i = 0; i < T * d; ++i) x[i] += y[i];
        }
    }

    // output head
    const auto& A = get("out.A");
    const auto& b = get("out.b");
    std::vector<Real> logits(T * S, Real(0));
    gemm_rm<Real>(false, true, T, S, d, x.data(), A.data(), logits.data());
    for (long n = 0; n < T; ++n)
        for (long s = 0; s < S; ++s) logits[n * S + s] += b[s];
    res.outputs.resize(T * S);
    switch (spec.output_nl) {
        case OutputNl::Softmax:
            for (long n = 0; n < T; ++n) {
                Real mx = logits[n * S];
                for (long s = 1; s < S; ++s) mx = std::max(mx, logits[n * S + s]);
                Real z = 0;
                for (long s = 0; s < S; ++s) z += logits[n * S + s] = std::exp(logits[n * S + s] - mx);
                for (long s = 0; s < S; ++s) res.outputs[n * S + s] = static_cast<double>(logits[n * S + s] / z);
            }
            break;
        case OutputNl::ReLU:
            for (long i = 0; i < T * S; ++i) res.outputs[i] = logits[i] > Real(0) ? static_cast<double>(logits[i]) : 0.0;
            break;
        case OutputNl::Identity:
            for (long i = 0; i < T * S; ++i) res.outputs[i] = static_cast<double>(logits[i]);
            break;
    }
    return res;
}

template struct EvalModel<double>;
template struct EvalModel<float>;

// ---------------------------------------------------------------------------
// Checkpoint I/O.

namespace {

using json = nlohmann::ordered_json;

std::string variant_str(Variant v) {
    switch (v) {
        case Variant::AttentionOnly: return "attention_only";
        case Variant::ModifiedLN: return "modified_ln";
        case Variant::StandardPreLN: return "standard_preln";
    }
    return "?";
}

json spec_to_json(const TransformerSpec& s) {
    json j;
    j["variant"] = variant_str(s.variant);
    j["layers"] = s.layers;
    j["heads"] = s.heads;
    j["d"] = s.d;
    j["S"] = s.S;
    j["T_max"] = s.T_max;
    j["pos_mode"] = s.pos_mode == PosMode::RelativeKV ? "relative_kv" : "learned_absolute";
    j["ln_mode"] = s.ln_mode == LnMode::Standard ? "standard" : "l2";
    j["output"] = s.output_nl == OutputNl::Softmax ? "softmax" : (s.output_nl == OutputNl::ReLU ? "relu" : "identity");
    j["d_ff"] = s.d_ff;
    j["ffn_layers"] = s.ffn_layers;
    return j;
}

TransformerSpec spec_from_json(const json& j) {
    TransformerSpec s;
    std::string v = j.at("variant");
    if (v == "attention_only")
        s.variant = Variant::AttentionOnly;
    else if (v == "modified_ln")
        s.variant = Variant::ModifiedLN;
    else if (v == "standard_preln")
        s.variant = Variant::StandardPreLN;
    else
        fail(ErrorCode::parse, "unknown variant '" + v + "'");
    s.layers = j.at("layers");
    s.heads = j.at("heads").get<std::vector<int>>();
    s.d = j.at("d");
    s.S = j.at("S");
    s.T_max = j.at("T_max");
    std::string pm = j.at("pos_mode");
    s.pos_mode = pm == "relative_kv" ? PosMode::RelativeKV : PosMode::LearnedAbsolute;
    std::string lm = j.at("ln_mode");
    s.ln_mode = lm == "l2" ? LnMode::L2 : LnMode::Standard;
    std::string out = j.at("output");
    s.output_nl = out == "softmax" ? OutputNl::Softmax : (out == "relu" ? OutputNl::ReLU : OutputNl::Identity);
    s.d_ff = j.at("d_ff");
    s.ffn_layers = j.at("ffn_layers").get<std::vector<bool>>();
    return s;
}

}  // namespace

std::string spec_to_json_str(const TransformerSpec& spec) { return spec_to_json(spec).dump(); }

TransformerSpec spec_from_json_str(const std::string& text) {
    try {
        return spec_from_json(json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::parse, std::string("spec parse error: ") + e.what());
    }
}

std::string serialize(const TransformerSpec& spec, const WeightSet& weights) {
    json j;
    j["spec"] = spec_to_json(spec);
    json tensors = json::object();
    for (const auto& [name, t] : weights.items) {
        for (double v : t.data())
            if (!std::isfinite(v)) fail(ErrorCode::numeric, "serialize: non-finite value in " + name);
        json entry;
        entry["shape"] = t.shape();
        entry["data"] = t.data();
        tensors[name] = std::move(entry);
    }
    j["tensors"] = std::move(tensors);
    return j.dump();
}

std::pair<TransformerSpec, WeightSet> deserialize(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::parse, std::string("checkpoint parse error: ") + e.what());
    }
    try {
        TransformerSpec spec = spec_from_json(j.at("spec"));
        spec.validate();
        WeightSet ws;
        const json& tensors = j.at("tensors");
        for (const auto& p : enumerate_params(spec)) {
            if (!tensors.contains(p.name)) fail(ErrorCode::parse, "checkpoint missing tensor " + p.name);
            const json& e = tensors.at(p.name);
            auto shape = e.at("shape").get<std::vector<long>>();
            if (shape != p.shape) fail(ErrorCode::parse, "checkpoint tensor " + p.name + " has wrong shape");
            auto data = e.at("data").get<std::vector<double>>();
            ws.add(p.name, Tensor::from_data(shape, std::move(data)));
        }
        return {spec, std::move(ws)};
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::parse, std::string("checkpoint structure error: ") + e.what());
    }
}

void save_checkpoint(const std::string& path, const TransformerSpec& spec, const WeightSet& weights) {
    std::ofstream f(path);
    if (!f) fail(ErrorCode::io, "cannot open " + path + " for writing");
    f << serialize(spec, weights);
    if (!f) fail(ErrorCode::io, "write failed for " + path);
}

std::pair<TransformerSpec, WeightSet> load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorCode::io, "cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return deserialize(ss.str());
}

}  // namespace kgram
