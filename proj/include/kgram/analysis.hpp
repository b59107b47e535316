#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgram/constructions.hpp"
#include "kgram/transformer.hpp"

namespace kgram {

// Entrywise mean/std of attention matrices over an ensemble of fresh
// (kernel, sequence) draws.
struct AttentionStats {
    struct Entry {
        int layer = 0;
        int head = 0;
        int T = 0;
        std::vector<double> mean;  // T x T
        std::vector<double> stddev;
    };
    std::vector<Entry> entries;
    int n_seqs = 0;
    int slice_row = 0;  // 1-based query position exported as the column slice

    const Entry& find(int layer, int head) const;
    // Long-form CSV: layer,head,n,i,mean,std (1-based n, i).
    std::string to_csv() const;
    // The designated row of the mean matrix (attention from query position
    // slice_row over key positions 1..slice_row).
    std::vector<double> mean_slice(int layer, int head) const;
};

// Mean/std over n_seqs sequences drawn from fresh kernels; population std
// via a deterministic two-pass reduction. slice_row defaults to 10.
AttentionStats attention_stats(const TransformerSpec& spec, const WeightSet& weights, int S, int k, int n_seqs,
                               int T, uint64_t seed, int slice_row = 10);

// Same statistics over a caller-supplied ensemble.
AttentionStats attention_stats_over(const TransformerSpec& spec, const WeightSet& weights,
                                    const std::vector<Sequence>& seqs, int slice_row = 10);

// Max entrywise std across the heads of one layer; 0 means the attention
// pattern is exactly input-independent.
double assumption1_score(const AttentionStats& stats, int layer);

struct NormErrorResult {
    double min_distance = 0.0;  // over unequal window pairs
    std::vector<int> window_a;
    std::vector<int> window_b;
    long pairs_checked = 0;
};

// Exhaustive minimum of || v/||v|| - u/||u|| || over all pairs of distinct
// length-k windows, where a window (w_1..w_k) maps to sum_j 3^(j-1) e_{w_j}.
// Guarded to S <= 4, k <= 6.
NormErrorResult normerror_bruteforce(int S, int k);

struct SweepPoint {
    double kappa = 0.0;
    Precision precision = Precision::f64;
    double max_abs_err = 0.0;
};

// verify_construction across a kappa ladder at one precision; errors are
// recorded (including non-finite ones from f32 overflow), never thrown.
std::vector<SweepPoint> precision_sweep(const std::string& id, int S, int k, int T,
                                        const std::vector<double>& kappas, Precision precision, int n_seqs,
                                        uint64_t seed);
std::string sweep_to_csv(const std::vector<SweepPoint>& points);

struct InductionHeadAudit {
    int n_total = 0;
    int n_scored = 0;  // sequences with a nonempty match set
    int n_passed = 0;
    double pass_rate = 0.0;  // over scored sequences
    double mean_tv = 0.0;
};

// Fraction of fresh sequences whose final-row attention at (layer, head 1)
// is argmax-exactly the match set, plus the mean TV distance to Unif(I_T).
InductionHeadAudit induction_head_audit(const TransformerSpec& spec, const WeightSet& weights, int S, int k,
                                        int n_seqs, int T, uint64_t seed, int layer);

}  // namespace kgram
