#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kgram/error.hpp"

namespace kgram {

// Finite symbol string over {0..S-1}. Positions in public APIs are 1-based.
struct Sequence {
    int S = 0;
    std::vector<int> symbols;

    int length() const { return static_cast<int>(symbols.size()); }
    int at(int pos1) const { return symbols[pos1 - 1]; }  // 1-based accessor
};

// Order-k transition table: S^k context rows, each a distribution over S.
// The row index encodes the context (x_{n-k+1}, ..., x_n) in base S with the
// most recent symbol least significant.
struct MarkovKernel {
    int S = 0;
    int k = 0;
    std::vector<double> table;  // S^k rows * S cols, row-major

    long rows() const { return static_cast<long>(table.size()) / S; }
    const double* row(long ctx) const { return table.data() + ctx * S; }

    // Context row index for the k symbols ending at 1-based position n.
    long context_index(const Sequence& seq, int n) const;
};

// Probability vector over S symbols, or an explicit undefined marker.
struct Distribution {
    std::vector<double> p;
    bool defined = false;

    static Distribution undefined() { return {}; }
    static Distribution of(std::vector<double> probs) { return {std::move(probs), true}; }
};

// Each row i.i.d. Dirichlet(1,...,1): uniform on the simplex, realized by
// normalized standard-exponential draws. Deterministic given seed.
MarkovKernel sample_kernel(int S, int k, uint64_t seed);

// First k symbols i.i.d. uniform, then kernel transitions. T >= k.
Sequence sample_sequence(const MarkovKernel& kernel, int T, uint64_t seed);

// Kernel row for the context ending at position n (requires n >= k).
Distribution true_conditional(const MarkovKernel& kernel, const Sequence& seq, int n);

// Next-symbol predictor: given a sequence, return one distribution per
// position n in [k+1, T], where entry j predicts symbol x_{k+1+j}.
using Predictor = std::function<std::vector<Distribution>(const Sequence&)>;

struct EvalResult {
    double model_loss = 0.0;
    double bayes_loss = 0.0;
    double gap = 0.0;
    double gap_se = 0.0;  // Monte-Carlo standard error of the gap (per-sequence)
    long n_positions = 0;
};

// Mean next-symbol cross-entropy (nats) of `model` against the add-1
// Laplace-smoothed conditional k-gram baseline, over fresh (kernel,
// sequence) pairs with one kernel per sequence. Positions k+1..T.
EvalResult optimal_loss(int S, int k, const Predictor& model, int n_seqs, int T, uint64_t seed);

// Dataset export: header line "S=<S> k=<k> T=<T> seed=<seed>", then one
// space-separated sequence per line. All sequences come from one kernel
// sampled at `seed`; returns a checksum of the kernel table bytes.
uint64_t write_dataset(const std::string& path, int S, int k, int T, int n_seqs, uint64_t seed);

struct Dataset {
    int S = 0, k = 0, T = 0;
    uint64_t seed = 0;
    std::vector<Sequence> sequences;
};

Dataset read_dataset(const std::string& path);

}  // namespace kgram
