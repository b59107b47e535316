#pragma once

#include <string>

#include "kgram/transformer.hpp"

namespace kgram {

// Explicit weight constructions that make a transformer compute the
// in-context conditional k-gram estimate in the large-temperature limit.
// Each builder returns a fully populated (spec, weights) pair; kappa is the
// softmax temperature, and every attention pattern the construction relies
// on becomes exact as kappa -> infinity.
//
// All four builders gate out the early positions i <= k whose history is
// not fully defined; without the gate those positions can alias into the
// match set on sequences with repeated prefixes and the logits drift off
// the exact estimate by O(1/|matches|).

// 2-layer, 1-head, attention-only; k = 1; d = 3S+2.
std::pair<TransformerSpec, WeightSet> build_theorem1(int S, double kappa, int T_max = 512);

// 2-layer, k-head, attention-only; d = (k+2)S + k + 1.
std::pair<TransformerSpec, WeightSet> build_theorem2(int S, int k, double kappa, int T_max = 512);

// ceil(log2(k+1)) doubling layers + 1 matching layer, 1 head per layer,
// attention-only; d = (k*+1)S + log2(k*) + 1 with k* = 2^ceil(log2(k+1)).
std::pair<TransformerSpec, WeightSet> build_theorem3(int S, int k, double kappa, int T_max = 512);

// 3-layer, 1-head, modified architecture with L2-mode layer norm realized by
// the mirrored-embedding trick; width 2*(6S+3).
std::pair<TransformerSpec, WeightSet> build_theorem4(int S, int k, double kappa, int T_max = 512);

// Dispatch by id: "t1", "t2", "t3", "t4".
std::pair<TransformerSpec, WeightSet> build_construction(const std::string& id, int S, int k, double kappa,
                                                         int T_max = 512);

// Temperature schedule kappa = 9^k * (ln T + ln(1/eps)). The squared
// normalized-window distance between distinct contexts is >= 9^-k, so
// off-match attention weight is suppressed to <= eps/T per position.
// Guards against score magnitudes leaving the exp-safe range.
double recommended_kappa(int k, int T, double eps);

struct ConstructionReport {
    std::string construction;
    int S = 0, k = 0, T = 0;
    double kappa = 0.0;
    int n_seqs = 0;
    long positions_checked = 0;
    long positions_skipped = 0;  // oracle undefined
    double max_abs_err = 0.0;
    double max_tv = 0.0;  // final-layer attention vs Unif(I_n)
    double tol = 0.0;
    bool pass = false;
};

enum class Precision { f64, f32 };

// Samples n_seqs sequences from fresh Dirichlet kernels and compares the
// model's final-position output against the brute-force conditional k-gram
// at every position n in [k+1, T] (sliding prefix evaluation; relative
// encodings are anchored at the final position). Oracle-undefined positions
// are skipped. Throws an inconclusive error when nothing was checkable.
ConstructionReport verify_construction(const std::string& id, int S, int k, int T, int n_seqs, double kappa,
                                       double tol, uint64_t seed, Precision precision = Precision::f64);

std::string report_to_json(const ConstructionReport& r);
std::string report_csv_header();
std::string report_to_csv_row(const ConstructionReport& r);

}  // namespace kgram
