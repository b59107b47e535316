#pragma once

#include <vector>

#include "kgram/markov.hpp"

namespace kgram {

// Brute-force in-context k-gram machinery. These are the ground-truth
// oracles for the weight constructions, so everything here is a transparent
// exhaustive scan; no indexing tricks.

// Match set I_n: 1-based positions i with k+1 <= i <= n whose k preceding
// symbols equal the final k symbols of the prefix ending at n, i.e.
// x_{i-j} = x_{n-j+1} for every j in [1, k].
std::vector<int> match_set(const Sequence& seq, int k, int n);

// In-context estimate of the next-symbol distribution conditioned on the
// last k symbols, evaluated at n = T. Undefined when the match set is empty.
Distribution conditional_kgram(const Sequence& seq, int k);

// Add-alpha smoothed variant: (count(ctx, x) + alpha) / (count(ctx) + alpha*S).
// Always defined.
Distribution laplace_kgram(const Sequence& seq, int k, double alpha = 1.0);

struct InductionHeadScore {
    bool pass = false;
    double tv_to_uniform = 1.0;  // total variation to Unif(I_T)
    std::vector<int> argmax_positions;
    std::vector<int> match_positions;
};

// Checks whether an attention row over positions 1..T behaves as a
// kth-order induction head: its argmax set must be exactly the match set
// I_T. Argmax uses a relative tolerance so finite-temperature rows with a
// flat top count. Rows must sum to 1.
InductionHeadScore induction_head_score(const std::vector<double>& att_row, const Sequence& seq, int k);

}  // namespace kgram
