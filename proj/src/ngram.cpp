#include "kgram/ngram.hpp"

#include <algorithm>
#include <cmath>

namespace kgram {

std::vector<int> match_set(const Sequence& seq, int k, int n) {
    if (n <= k) fail(ErrorCode::context, "match_set needs n >= k+1, got n=" + std::to_string(n));
    if (n > seq.length()) fail(ErrorCode::context, "match_set: n beyond sequence end");
    std::vector<int> out;
    for (int i = k + 1; i <= n; ++i) {
        bool ok = true;
        for (int j = 1; j <= k; ++j) {
            if (seq.at(i - j) != seq.at(n - j + 1)) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(i);
    }
    return out;
}

Distribution conditional_kgram(const Sequence& seq, int k) {
    int T = seq.length();
    if (T <= k) fail(ErrorCode::context, "conditional_kgram needs T >= k+1");
    std::vector<int> matches = match_set(seq, k, T);
    if (matches.empty()) return Distribution::undefined();
    std::vector<double> p(seq.S, 0.0);
    for (int i : matches) p[seq.at(i)] += 1.0;
    for (double& v : p) v /= matches.size();
    return Distribution::of(std::move(p));
}

Distribution laplace_kgram(const Sequence& seq, int k, double alpha) {
    int T = seq.length();
    if (T < k) fail(ErrorCode::context, "laplace_kgram needs T >= k");
    if (!(alpha > 0.0)) fail(ErrorCode::contract, "laplace_kgram needs alpha > 0");
    std::vector<double> counts(seq.S, 0.0);
    double total = 0.0;
    if (T > k) {
        for (int i : match_set(seq, k, T)) {
            counts[seq.at(i)] += 1.0;
            total += 1.0;
        }
    }
    std::vector<double> p(seq.S);
    for (int s = 0; s < seq.S; ++s) p[s] = (counts[s] + alpha) / (total + alpha * seq.S);
    return Distribution::of(std::move(p));
}

InductionHeadScore induction_head_score(const std::vector<double>& att_row, const Sequence& seq, int k) {
    int T = seq.length();
    if (static_cast<int>(att_row.size()) != T)
        fail(ErrorCode::contract, "attention row length != sequence length");
    double sum = 0.0, mx = 0.0;
    for (double v : att_row) {
        if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCode::contract, "attention row has an invalid weight");
        sum += v;
        mx = std::max(mx, v);
    }
    if (std::abs(sum - 1.0) > 1e-9) fail(ErrorCode::contract, "attention row does not sum to 1");

    InductionHeadScore out;
    out.match_positions = match_set(seq, k, T);
    // flat-top argmax with relative tolerance
    for (int i = 1; i <= T; ++i)
        if (att_row[i - 1] >= mx * (1.0 - 1e-6)) out.argmax_positions.push_back(i);
    out.pass = !out.match_positions.empty() && out.argmax_positions == out.match_positions;

    if (!out.match_positions.empty()) {
        double u = 1.0 / out.match_positions.size();
        std::vector<double> uniform(T, 0.0);
        for (int i : out.match_positions) uniform[i - 1] = u;
        double tv = 0.0;
        for (int i = 0; i < T; ++i) tv += std::abs(att_row[i] - uniform[i]);
        out.tv_to_uniform = 0.5 * tv;
    }
    return out;
}

}  // namespace kgram
