#include "kgram/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "kgram/ngram.hpp"
#include "kgram/random.hpp"

namespace kgram {

namespace {

constexpr double kLn3 = 1.0986122886681098;

void put(Tensor& t, long r, long c, double v) { t.mutable_data()[r * t.cols() + c] = v; }

Tensor identity(long d) {
    Tensor t({d, d});
    for (long i = 0; i < d; ++i) put(t, i, i, 1.0);
    return t;
}

// Shared scaffolding: attention-only spec with relative tables.
TransformerSpec attention_only_spec(int S, int layers, std::vector<int> heads, int d, int T_max) {
    TransformerSpec spec;
    spec.variant = Variant::AttentionOnly;
    spec.layers = layers;
    spec.heads = std::move(heads);
    spec.d = d;
    spec.S = S;
    spec.T_max = T_max;
    spec.pos_mode = PosMode::RelativeKV;
    spec.output_nl = OutputNl::Identity;
    return spec;
}

WeightSet blank_weights(const TransformerSpec& spec) {
    WeightSet ws = init_weights(spec, 0);
    for (auto& [name, t] : ws.items) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    return ws;
}

int ceil_log2(int v) {
    int l = 0;
    while ((1 << l) < v) ++l;
    return l;
}

}  // namespace

double recommended_kappa(int k, int T, double eps) {
    if (!(eps > 0.0 && eps <= 1.0)) fail(ErrorCode::contract, "recommended_kappa: eps must be in (0, 1]");
    if (k < 1 || T < 2) fail(ErrorCode::contract, "recommended_kappa: need k >= 1, T >= 2");
    double kappa = std::pow(9.0, k) * (std::log(static_cast<double>(T)) + std::log(1.0 / eps));
    // Largest score magnitude any builder produces is ~2*kappa*(Z_full^2+1)
    // with Z_full = 3(3^k+1)/4; keep it comfortably inside the finite range.
    double z_full = 3.0 * (std::pow(3.0, k) + 1.0) / 4.0;
    if (2.0 * kappa * (z_full * z_full + 1.0) > 1e300)
        fail(ErrorCode::capacity, "recommended_kappa: scores would leave the exp-safe range");
    return kappa;
}

// ---------------------------------------------------------------------------
// Theorem 1: 2 layers, 1 head, attention-only, k = 1, d = 3S+2.
//
// Coordinates: [c0 | gate | e-block | prev-block | out-block].
// Layer 1 attends the previous position and copies its symbol into the
// prev-block; a relative value marker flags rows that actually have a
// previous position. Layer 2 scores kappa * <prev_i, e_{x_n}> plus the gate
// bonus, so position 1 (whose prev-block is self-aliased) never ties with a
// genuine match.
std::pair<TransformerSpec, WeightSet> build_theorem1(int S, double kappa, int T_max) {
    if (S < 2) fail(ErrorCode::contract, "build_theorem1: S >= 2");
    if (kappa < 0) fail(ErrorCode::contract, "build_theorem1: kappa >= 0");
    const long d = 3L * S + 2;
    const long c0 = 0, gate = 1, E = 2, P = 2 + S, O = 2 + 2L * S;
    TransformerSpec spec = attention_only_spec(S, 2, {1, 1}, static_cast<int>(d), T_max);
    WeightSet w = blank_weights(spec);
    const double rk = std::sqrt(kappa);

    {
        Tensor& emb = w.at("emb");
        for (int x = 0; x < S; ++x) {
            put(emb, x, c0, 1.0);
            put(emb, x, E + x, 1.0);
        }
    }
    {
        // (x_i + p)_c0 = I(n-i = 1)
        Tensor& pk = w.at("pos.layer1.K");
        for (int o = 0; o < T_max; ++o) put(pk, o, c0, o == 1 ? 0.0 : -1.0);
        Tensor& pv = w.at("pos.layer1.V");
        put(pv, 1, gate, 1.0);
    }
    {
        Tensor& wk = w.at("layer1.head1.W_K");
        put(wk, c0, c0, rk);
        Tensor& wq = w.at("layer1.head1.W_Q");
        put(wq, c0, c0, rk);
        Tensor& wv = w.at("layer1.head1.W_V");
        put(wv, gate, gate, 1.0);
        for (int s = 0; s < S; ++s) put(wv, P + s, E + s, 1.0);
        w.at("layer1.head1.W_O") = identity(d);
    }
    {
        // score = kappa * <prev_i, e_{x_n}> + kappa * gate_i
        Tensor& wk = w.at("layer2.head1.W_K");
        for (int s = 0; s < S; ++s) put(wk, E + s, P + s, rk);
        put(wk, c0, gate, rk);
        Tensor& wq = w.at("layer2.head1.W_Q");
        for (int s = 0; s < S; ++s) put(wq, E + s, E + s, rk);
        put(wq, c0, c0, rk);
        Tensor& wv = w.at("layer2.head1.W_V");
        for (int s = 0; s < S; ++s) put(wv, O + s, E + s, 1.0);
        w.at("layer2.head1.W_O") = identity(d);
    }
    {
        Tensor& A = w.at("out.A");
        for (int s = 0; s < S; ++s) put(A, s, O + s, 1.0);
    }
    return {spec, std::move(w)};
}

// ---------------------------------------------------------------------------
// Theorem 2: 2 layers, k heads, attention-only, d = (k+2)S + k + 1.
//
// Coordinates: [flags(k) | c | e-block | hist-blocks(k) | out-block].
// Layer-1 head h attends offset h and copies that symbol into hist-block h;
// head k also routes a relative value marker into flag 0, which is exactly
// the "all k history slots are real" indicator. Layer 2 scores
// kappa * sum_j I(x_{i-j} = x_{n-j+1}) plus the gate bonus.
std::pair<TransformerSpec, WeightSet> build_theorem2(int S, int k, double kappa, int T_max) {
    if (S < 2 || k < 1) fail(ErrorCode::contract, "build_theorem2: S >= 2, k >= 1");
    if (kappa < 0) fail(ErrorCode::contract, "build_theorem2: kappa >= 0");
    const long d = static_cast<long>(k + 2) * S + k + 1;
    const long F = 0, c = k, E = k + 1;
    auto H = [&](int j) { return E + S + static_cast<long>(j - 1) * S; };  // j in [1, k]
    const long O = H(k) + S;
    std::vector<int> heads = {k, 1};
    TransformerSpec spec = attention_only_spec(S, 2, heads, static_cast<int>(d), T_max);
    WeightSet w = blank_weights(spec);
    const double rk = std::sqrt(kappa);

    {
        Tensor& emb = w.at("emb");
        for (int x = 0; x < S; ++x) {
            put(emb, x, c, 1.0);
            put(emb, x, E + x, 1.0);
        }
    }
    {
        Tensor& pk = w.at("pos.layer1.K");
        for (int o = 1; o <= k && o < T_max; ++o) put(pk, o, F + o - 1, 1.0);
        Tensor& pv = w.at("pos.layer1.V");
        if (k < T_max) put(pv, k, F + 0, 1.0);  // marker: offset k exists
    }
    for (int h = 1; h <= k; ++h) {
        std::string base = "layer1.head" + std::to_string(h);
        Tensor& wk = w.at(base + ".W_K");
        put(wk, 0, F + h - 1, rk);
        Tensor& wq = w.at(base + ".W_Q");
        put(wq, 0, c, rk);
        Tensor& wv = w.at(base + ".W_V");
        for (int s = 0; s < S; ++s) put(wv, H(h) + s, E + s, 1.0);
        if (h == k) put(wv, F + 0, F + 0, 1.0);  // only head k carries the marker
        w.at(base + ".W_O") = identity(d);
    }
    {
        Tensor& wk = w.at("layer2.head1.W_K");
        for (int j = 1; j <= k; ++j)
            for (int s = 0; s < S; ++s) put(wk, H(j) + s, H(j) + s, rk);
        put(wk, c, F + 0, rk);
        Tensor& wq = w.at("layer2.head1.W_Q");
        for (int s = 0; s < S; ++s) put(wq, H(1) + s, E + s, rk);
        for (int j = 2; j <= k; ++j)
            for (int s = 0; s < S; ++s) put(wq, H(j) + s, H(j - 1) + s, rk);
        put(wq, c, c, rk);
        Tensor& wv = w.at("layer2.head1.W_V");
        for (int s = 0; s < S; ++s) put(wv, O + s, E + s, 1.0);
        w.at("layer2.head1.W_O") = identity(d);
    }
    {
        Tensor& A = w.at("out.A");
        for (int s = 0; s < S; ++s) put(A, s, O + s, 1.0);
    }
    return {spec, std::move(w)};
}

// ---------------------------------------------------------------------------
// Theorem 3: log-depth doubling, 1 head per layer, attention-only.
//
// Coordinates: [flags(l*) | c | blocks(k*) | out-block]. Doubling layer l
// splits attention 1/2-1/2 between offsets 0 and 2^(l-1) and shift-copies
// the first 2^(l-1) blocks into the next 2^(l-1) block slots at weight 2,
// building prefix-sum combinations that a composed linear map (a Kronecker
// power of [[1,0],[-1,1]]) turns back into individual symbol one-hots for
// the final matching layer.
//
// The gate is a chain over the set bits of k: the lowest bit seeds an
// "offset 2^a exists" marker; each higher bit b hops it through offset 2^b.
// The chained value reaches its maximum exactly on rows i >= k+1, and those
// rows receive an identical bonus, so the limit attention stays uniform on
// the match set.
std::pair<TransformerSpec, WeightSet> build_theorem3(int S, int k, double kappa, int T_max) {
    if (S < 2 || k < 1) fail(ErrorCode::contract, "build_theorem3: S >= 2, k >= 1");
    if (kappa < 0) fail(ErrorCode::contract, "build_theorem3: kappa >= 0");
    const int lstar = ceil_log2(k + 1);
    const int kstar = 1 << lstar;
    const long d = static_cast<long>(kstar + 1) * S + lstar + 1;
    const long FL = 0, c = lstar;
    auto B = [&](int m) { return c + 1 + static_cast<long>(m) * S; };  // m in [0, k*)
    const long O = B(kstar);
    const int layers = lstar + 1;
    TransformerSpec spec = attention_only_spec(S, layers, std::vector<int>(layers, 1), static_cast<int>(d), T_max);
    WeightSet w = blank_weights(spec);
    const double rk = std::sqrt(kappa);
    const double rk_gate = std::sqrt(static_cast<double>(kstar) * kappa);

    {
        Tensor& emb = w.at("emb");
        for (int x = 0; x < S; ++x) {
            put(emb, x, c, 1.0);
            put(emb, x, B(0) + x, 1.0);
        }
    }

    // set bits of k, ascending: the gate chain schedule
    std::vector<int> bits;
    for (int b = 0; b < lstar; ++b)
        if (k & (1 << b)) bits.push_back(b);
    std::vector<long> stage_coord(bits.size());
    for (size_t s = 0; s < bits.size(); ++s) stage_coord[s] = FL + bits[s];

    for (int l = 1; l <= lstar; ++l) {
        std::string ln = "layer" + std::to_string(l);
        int off = 1 << (l - 1);
        {
            Tensor& pk = w.at("pos." + ln + ".K");
            for (int b = 0; b < lstar; ++b) put(pk, 0, FL + b, 1.0);
            for (int b = 0; b < lstar && (1 << b) < T_max; ++b) put(pk, 1 << b, FL + b, 1.0);
        }
        Tensor& wk = w.at(ln + ".head1.W_K");
        put(wk, 0, FL + l - 1, rk);
        Tensor& wq = w.at(ln + ".head1.W_Q");
        put(wq, 0, c, rk);
        Tensor& wv = w.at(ln + ".head1.W_V");
        int half = 1 << (l - 1);
        for (int m = 0; m < half; ++m)
            for (int s = 0; s < S; ++s) put(wv, B(half + m) + s, B(m) + s, 2.0);
        // gate chain stage scheduled on this layer, if any
        for (size_t s = 0; s < bits.size(); ++s) {
            if (bits[s] + 1 != l) continue;
            Tensor& pv = w.at("pos." + ln + ".V");
            if (s == 0) {
                if (off < T_max) put(pv, off, stage_coord[0], 2.0);
                put(wv, stage_coord[0], stage_coord[0], 1.0);
            } else {
                if (off < T_max) put(pv, off, stage_coord[s - 1], 2.0);
                put(wv, stage_coord[s], stage_coord[s - 1], 1.0);
            }
        }
        w.at(ln + ".head1.W_O") = identity(d);
    }

    // Kronecker power of [[1,0],[-1,1]]: block-level inverse of the
    // prefix-sum structure the doubling layers create.
    std::vector<double> cinv = {1.0};
    int dim = 1;
    for (int l = 0; l < lstar; ++l) {
        std::vector<double> next(4L * dim * dim, 0.0);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) {
                double v = cinv[i * dim + j];
                next[i * 2 * dim + j] = v;                        // top-left: C
                next[(dim + i) * 2 * dim + j] = -v;               // bottom-left: -C
                next[(dim + i) * 2 * dim + dim + j] = v;          // bottom-right: C
            }
        cinv = std::move(next);
        dim *= 2;
    }

    {
        std::string ln = "layer" + std::to_string(layers);
        Tensor& wk = w.at(ln + ".head1.W_K");
        Tensor& wq = w.at(ln + ".head1.W_Q");
        for (int j = 1; j <= k; ++j)
            for (int m = 0; m < kstar; ++m) {
                double kv = cinv[j * kstar + m];
                double qv = cinv[(j - 1) * kstar + m];
                for (int s = 0; s < S; ++s) {
                    if (kv != 0.0) put(wk, B(j) + s, B(m) + s, rk * kv);
                    if (qv != 0.0) put(wq, B(j) + s, B(m) + s, rk * qv);
                }
            }
        put(wk, c, stage_coord.back(), rk_gate);
        put(wq, c, c, rk_gate);
        Tensor& wv = w.at(ln + ".head1.W_V");
        for (int m = 0; m < kstar; ++m) {
            double v = cinv[0 * kstar + m];
            if (v == 0.0) continue;
            for (int s = 0; s < S; ++s) put(wv, O + s, B(m) + s, v);
        }
        w.at(ln + ".head1.W_O") = identity(d);
    }
    {
        Tensor& A = w.at("out.A");
        for (int s = 0; s < S; ++s) put(A, s, O + s, 1.0);
    }
    return {spec, std::move(w)};
}

// ---------------------------------------------------------------------------
// Theorem 4: 3 layers, 1 head, modified architecture, mirrored embedding of
// width 2*(6S+3) so the L2-mode layer norm computes exact unit-normalization
// of the first half.
//
// First-half coordinates: [z | m1 | m2 | e | u | u_hat | v | v_hat | out].
// Layers 1-2 realize base-3 window attention (att ~ 3^o over the window,
// with a separate kappa-scaled window bonus suppressing everything else),
// accumulate u_n / v_n, and extract unit-normalized copies through the FFN
// + layer norm. The z coordinate accumulates the window-saturation value
// Z_n = 3(3^k+1)/4 (attained exactly iff n >= k+1), and layer 3 scores
// 2*kappa*(Z_i Z_n + <v_hat_i, u_hat_n>), concentrating on the match set.
std::pair<TransformerSpec, WeightSet> build_theorem4(int S, int k, double kappa, int T_max) {
    if (S < 2 || k < 1) fail(ErrorCode::contract, "build_theorem4: S >= 2, k >= 1");
    if (kappa < 0) fail(ErrorCode::contract, "build_theorem4: kappa >= 0");
    const long d0 = 6L * S + 3;
    const long D = 2 * d0;
    const long z = 0, mag1 = 1, mag2 = 2, E = 3, U = 3 + S, Uh = 3 + 2L * S, V = 3 + 3L * S, Vh = 3 + 4L * S,
               O = 3 + 5L * S;
    TransformerSpec spec;
    spec.variant = Variant::ModifiedLN;
    spec.layers = 3;
    spec.heads = {1, 1, 1};
    spec.d = static_cast<int>(D);
    spec.S = S;
    spec.T_max = T_max;
    spec.pos_mode = PosMode::RelativeKV;
    spec.ln_mode = LnMode::L2;
    spec.output_nl = OutputNl::Identity;
    spec.d_ff = static_cast<int>(D);
    spec.ffn_layers = {true, true, false};
    WeightSet w = blank_weights(spec);

    const double kappa_w = 4.0 * kappa * std::pow(9.0, -k);  // window bonus
    const double r2k = std::sqrt(2.0 * kappa);

    {
        Tensor& emb = w.at("emb");
        for (int x = 0; x < S; ++x) {
            put(emb, x, E + x, 1.0);
            put(emb, x, d0 + E + x, -1.0);
        }
    }

    // Shared relative tables for layers 1 and 2. Magnitude coordinates per
    // the 3-coordinate layout (offset 0 / middle / offset k), plus window
    // flags on coordinates that are still zero in the respective layer's
    // input stream (first u-slot for layer 1, first v-slot for layer 2).
    for (int l = 1; l <= 2; ++l) {
        Tensor& pk = w.at("pos.layer" + std::to_string(l) + ".K");
        for (int o = 0; o <= k && o < T_max; ++o) {
            double mag = (o + 1.0) * std::sqrt(kLn3);
            if (o == 0)
                put(pk, o, z, mag);
            else if (o < k)
                put(pk, o, mag1, mag);
            else
                put(pk, o, mag2, mag);
            if (o <= k - 1) put(pk, o, U, 1.0);  // layer-1 window [0, k-1]
            if (o >= 1) put(pk, o, V, 1.0);      // layer-2 window [1, k]
        }
        Tensor& pv = w.at("pos.layer" + std::to_string(l) + ".V");
        for (int o = 0; o <= k && o < T_max; ++o) {
            double zi = std::pow(3.0, o);
            put(pv, o, z, zi);
            put(pv, o, d0 + z, -zi);
        }
    }
    {
        Tensor& pk = w.at("pos.layer3.K");
        (void)pk;  // all zeros
    }

    auto mirror_value = [&](Tensor& wv, long out_first, long in_first, double v) {
        put(wv, out_first, in_first, v);
        put(wv, d0 + out_first, d0 + in_first, v);
    };

    // Layer 1: att ~ 3^o on window [0, k-1]; u into U-slot; FFN extracts u
    // into Uh-slot; L2-mode LN normalizes it.
    {
        Tensor& wk = w.at("layer1.head1.W_K");
        put(wk, 0, z, 1.0);
        put(wk, 0, mag1, 1.0);
        put(wk, 1, U, kappa_w);
        Tensor& wq = w.at("layer1.head1.W_Q");
        for (int s = 0; s < S; ++s) {
            put(wq, 0, E + s, std::sqrt(kLn3));
            put(wq, 1, E + s, 1.0);
        }
        Tensor& wv = w.at("layer1.head1.W_V");
        for (int s = 0; s < S; ++s) mirror_value(wv, U + s, E + s, 1.0);
        w.at("layer1.head1.W_O") = identity(D);

        w.at("layer1.ffn.W_1") = identity(D);
        Tensor& w2 = w.at("layer1.ffn.W_2");
        for (int s = 0; s < S; ++s) {
            put(w2, Uh + s, U + s, 1.0);
            put(w2, Uh + s, d0 + U + s, -1.0);
            put(w2, d0 + Uh + s, U + s, -1.0);
            put(w2, d0 + Uh + s, d0 + U + s, 1.0);
        }
    }

    // Layer 2: att ~ 3^o on window [1, k]; v into V-slot, Z into z; FFN
    // extracts v into Vh-slot.
    {
        Tensor& wk = w.at("layer2.head1.W_K");
        put(wk, 0, mag1, 1.0);
        put(wk, 0, mag2, 1.0);
        put(wk, 1, V, kappa_w);
        Tensor& wq = w.at("layer2.head1.W_Q");
        for (int s = 0; s < S; ++s) {
            put(wq, 0, E + s, std::sqrt(kLn3));
            put(wq, 1, E + s, 1.0);
        }
        Tensor& wv = w.at("layer2.head1.W_V");
        mirror_value(wv, z, z, 1.0);
        for (int s = 0; s < S; ++s) mirror_value(wv, V + s, E + s, 1.0);
        w.at("layer2.head1.W_O") = identity(D);

        w.at("layer2.ffn.W_1") = identity(D);
        Tensor& w2 = w.at("layer2.ffn.W_2");
        for (int s = 0; s < S; ++s) {
            put(w2, Vh + s, V + s, 1.0);
            put(w2, Vh + s, d0 + V + s, -1.0);
            put(w2, d0 + Vh + s, V + s, -1.0);
            put(w2, d0 + Vh + s, d0 + V + s, 1.0);
        }
    }

    // Layer 3: score 2*kappa*(Z_i * Z_n + <v_hat_i, u_hat_n>); value is the
    // symbol one-hot routed into the out-block. No FFN.
    {
        Tensor& wk = w.at("layer3.head1.W_K");
        put(wk, 0, z, r2k);
        for (int s = 0; s < S; ++s) put(wk, Uh + s, Vh + s, r2k);
        Tensor& wq = w.at("layer3.head1.W_Q");
        put(wq, 0, z, r2k);
        for (int s = 0; s < S; ++s) put(wq, Uh + s, Uh + s, r2k);
        Tensor& wv = w.at("layer3.head1.W_V");
        for (int s = 0; s < S; ++s) mirror_value(wv, O + s, E + s, 1.0);
        w.at("layer3.head1.W_O") = identity(D);
    }
    {
        Tensor& A = w.at("out.A");
        for (int s = 0; s < S; ++s) put(A, s, O + s, 1.0);
    }
    return {spec, std::move(w)};
}

std::pair<TransformerSpec, WeightSet> build_construction(const std::string& id, int S, int k, double kappa,
                                                         int T_max) {
    if (id == "t1") {
        if (k != 1) fail(ErrorCode::contract, "t1 supports k = 1 only");
        return build_theorem1(S, kappa, T_max);
    }
    if (id == "t2") return build_theorem2(S, k, kappa, T_max);
    if (id == "t3") return build_theorem3(S, k, kappa, T_max);
    if (id == "t4") return build_theorem4(S, k, kappa, T_max);
    fail(ErrorCode::config, "unknown construction '" + id + "' (expected t1|t2|t3|t4)");
}

namespace {

template <typename Real>
ConstructionReport verify_impl(const std::string& id, int S, int k, int T, int n_seqs, double kappa, double tol,
                               uint64_t seed) {
    auto [spec, weights] = build_construction(id, S, k, kappa, std::max(T, 8));
    auto model = EvalModel<Real>::build(spec, weights);

    ConstructionReport rep;
    rep.construction = id;
    rep.S = S;
    rep.k = k;
    rep.T = T;
    rep.kappa = kappa;
    rep.n_seqs = n_seqs;
    rep.tol = tol;

    Rng seeder(seed, "verify");
    const int final_layer = spec.layers;
    for (int sq = 0; sq < n_seqs; ++sq) {
        MarkovKernel kernel = sample_kernel(S, k, seeder.fork(2 * sq).next_u64());
        Sequence seq = sample_sequence(kernel, T, seeder.fork(2 * sq + 1).next_u64());
        for (int n = k + 1; n <= T; ++n) {
            Sequence prefix{S, std::vector<int>(seq.symbols.begin(), seq.symbols.begin() + n)};
            Distribution oracle = conditional_kgram(prefix, k);
            if (!oracle.defined) {
                rep.positions_skipped++;
                continue;
            }
            ForwardResult fr = model.forward(prefix, /*want_trace=*/true);
            rep.positions_checked++;
            for (int s = 0; s < S; ++s) {
                double got = fr.outputs[(n - 1) * S + s];
                if (!std::isfinite(got)) {
                    rep.max_abs_err = std::numeric_limits<double>::infinity();
                    continue;
                }
                rep.max_abs_err = std::max(rep.max_abs_err, std::abs(got - oracle.p[s]));
            }
            // final-layer attention row vs Unif(I_n)
            const auto& att = fr.trace.find(final_layer, 1);
            std::vector<int> matches = match_set(prefix, k, n);
            double tv = 0.0;
            double u = 1.0 / matches.size();
            std::vector<double> uni(n, 0.0);
            for (int i : matches) uni[i - 1] = u;
            for (int i = 0; i < n; ++i) {
                double a = att.att[(n - 1) * att.T + i];
                tv += std::abs(a - uni[i]);
            }
            rep.max_tv = std::max(rep.max_tv, 0.5 * tv);
        }
    }
    if (rep.positions_checked == 0)
        fail(ErrorCode::inconclusive, "verify_construction: every position was oracle-undefined");
    rep.pass = rep.max_abs_err <= tol;
    return rep;
}

}  // namespace

ConstructionReport verify_construction(const std::string& id, int S, int k, int T, int n_seqs, double kappa,
                                       double tol, uint64_t seed, Precision precision) {
    if (n_seqs < 1 || T < k + 1) fail(ErrorCode::contract, "verify_construction: need n_seqs >= 1 and T >= k+1");
    if (precision == Precision::f64) return verify_impl<double>(id, S, k, T, n_seqs, kappa, tol, seed);
    return verify_impl<float>(id, S, k, T, n_seqs, kappa, tol, seed);
}

std::string report_to_json(const ConstructionReport& r) {
    nlohmann::ordered_json j;
    j["construction"] = r.construction;
    j["S"] = r.S;
    j["k"] = r.k;
    j["T"] = r.T;
    j["kappa"] = r.kappa;
    j["n_seqs"] = r.n_seqs;
    j["positions_checked"] = r.positions_checked;
    j["positions_skipped"] = r.positions_skipped;
    j["max_abs_err"] = r.max_abs_err;
    j["max_tv"] = r.max_tv;
    j["tol"] = r.tol;
    j["pass"] = r.pass;
    return j.dump(2);
}

std::string report_csv_header() { return "construction,S,k,T,kappa,n_seqs,skipped,max_abs_err,max_tv,pass"; }

std::string report_to_csv_row(const ConstructionReport& r) {
    std::ostringstream os;
    os << r.construction << "," << r.S << "," << r.k << "," << r.T << "," << r.kappa << "," << r.n_seqs << ","
       << r.positions_skipped << "," << r.max_abs_err << "," << r.max_tv << "," << (r.pass ? 1 : 0);
    return os.str();
}

}  // namespace kgram
