#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgram/markov.hpp"
#include "kgram/tensor.hpp"

namespace kgram {

enum class Variant { AttentionOnly, ModifiedLN, StandardPreLN };
enum class PosMode { RelativeKV, LearnedAbsolute };
enum class LnMode { Standard, L2 };
enum class OutputNl { Softmax, ReLU, Identity };

// Architecture description. All three variants are decoder-only with causal
// attention; heads are full-width (each head owns d x d maps, concatenated
// outputs are routed through per-head output blocks).
struct TransformerSpec {
    Variant variant = Variant::AttentionOnly;
    int layers = 1;
    std::vector<int> heads;  // per layer
    int d = 8;
    int S = 2;
    int T_max = 64;
    PosMode pos_mode = PosMode::RelativeKV;
    LnMode ln_mode = LnMode::Standard;
    OutputNl output_nl = OutputNl::Softmax;
    int d_ff = 0;                  // 0 means 4*d for variants with an FFN
    std::vector<bool> ffn_layers;  // ModifiedLN: which layers carry an FFN (default: all)

    int heads_at(int layer) const { return heads.at(layer); }
    bool has_ffn(int layer) const;
    int ffn_width() const { return d_ff > 0 ? d_ff : 4 * d; }
    void validate() const;
};

// Every parameter tensor, in a canonical order with stable names:
//   emb                         S x d
//   wpe                         T_max x d        (LearnedAbsolute)
//   pos.layer<l>.K / .V         T_max x d        (RelativeKV)
//   layer<l>.head<h>.W_K/.W_Q/.W_V/.W_O          d x d
//   layer<l>.ln1.gain/.shift    d                (StandardPreLN)
//   layer<l>.ln2.gain/.shift    d                (StandardPreLN)
//   layer<l>.ffn.W_1            d_ff x d
//   layer<l>.ffn.W_2            d x d_ff
//   out.A                       S x d
//   out.b                       S
// Layer and head indices are 1-based in names.
struct WeightSet {
    std::vector<std::pair<std::string, Tensor>> items;
    std::unordered_map<std::string, size_t> index;

    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const { return index.count(name) != 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    void set_requires_grad(bool rg);
    long total_params() const;
};

// Per (layer, head) lower-triangular attention matrices from one forward.
struct AttentionTrace {
    struct Entry {
        int layer = 0;  // 1-based
        int head = 0;   // 1-based
        int T = 0;
        std::vector<double> att;  // T x T row-major, rows sum to 1
    };
    std::vector<Entry> entries;

    const Entry& find(int layer, int head) const;
};

struct ForwardResult {
    int T = 0;
    int S = 0;
    std::vector<double> outputs;  // T x S row-major, after the output nonlinearity
    AttentionTrace trace;
};

// Allocate the parameter set for a spec. Gaussian(0, 0.02^2) entries for
// weight matrices and embeddings, zeros for biases and relative position
// tables, ones/zeros for layer-norm gains/shifts. The per-tensor stream is
// hashed from (seed, name, shape), so different shapes decorrelate even at
// the same seed.
WeightSet init_weights(const TransformerSpec& spec, uint64_t seed);

// Autodiff forward. Returns the T x S output tensor (after the output
// nonlinearity) wired into the tape of `weights`.
Tensor forward_tape(const TransformerSpec& spec, const WeightSet& weights, const Sequence& seq);

// Plain evaluation forward (no tape), templated on the scalar type; float
// exists for the precision sweep. Captures attention traces on request.
template <typename Real>
struct EvalModel {
    TransformerSpec spec;
    std::unordered_map<std::string, std::vector<Real>> w;

    static EvalModel build(const TransformerSpec& spec, const WeightSet& weights);
    ForwardResult forward(const Sequence& seq, bool want_trace = false) const;
};

using EvalModelD = EvalModel<double>;
using EvalModelF = EvalModel<float>;

std::string spec_to_json_str(const TransformerSpec& spec);
TransformerSpec spec_from_json_str(const std::string& text);

// JSON checkpoint: {"spec": {...}, "tensors": {name: {"shape": [...], "data": [...]}}}.
// Round-trips 64-bit floats bit-exactly.
std::string serialize(const TransformerSpec& spec, const WeightSet& weights);
std::pair<TransformerSpec, WeightSet> deserialize(const std::string& text);
void save_checkpoint(const std::string& path, const TransformerSpec& spec, const WeightSet& weights);
std::pair<TransformerSpec, WeightSet> load_checkpoint(const std::string& path);

}  // namespace kgram
