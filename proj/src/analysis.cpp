#include "kgram/analysis.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "kgram/ngram.hpp"
#include "kgram/random.hpp"

namespace kgram {

const AttentionStats::Entry& AttentionStats::find(int layer, int head) const {
    for (const auto& e : entries)
        if (e.layer == layer && e.head == head) return e;
    fail(ErrorCode::contract, "no stats for layer " + std::to_string(layer) + " head " + std::to_string(head));
}

std::vector<double> AttentionStats::mean_slice(int layer, int head) const {
    const Entry& e = find(layer, head);
    if (slice_row < 1 || slice_row > e.T) fail(ErrorCode::contract, "slice row out of range");
    const double* row = e.mean.data() + static_cast<long>(slice_row - 1) * e.T;
    return std::vector<double>(row, row + slice_row);
}

std::string AttentionStats::to_csv() const {
    std::ostringstream os;
    os.precision(12);
    os << "layer,head,n,i,mean,std\n";
    for (const auto& e : entries)
        for (int n = 1; n <= e.T; ++n)
            for (int i = 1; i <= n; ++i)
                os << e.layer << "," << e.head << "," << n << "," << i << "," << e.mean[(n - 1) * e.T + (i - 1)]
                   << "," << e.stddev[(n - 1) * e.T + (i - 1)] << "\n";
    return os.str();
}

AttentionStats attention_stats(const TransformerSpec& spec, const WeightSet& weights, int S, int k, int n_seqs,
                               int T, uint64_t seed, int slice_row) {
    if (n_seqs < 2) fail(ErrorCode::contract, "attention_stats: need n_seqs >= 2");
    Rng seeder(seed, "attn-stats");
    std::vector<Sequence> seqs;
    seqs.reserve(n_seqs);
    for (int i = 0; i < n_seqs; ++i) {
        MarkovKernel kernel = sample_kernel(S, k, seeder.fork(2 * i).next_u64());
        seqs.push_back(sample_sequence(kernel, T, seeder.fork(2 * i + 1).next_u64()));
    }
    return attention_stats_over(spec, weights, seqs, slice_row);
}

AttentionStats attention_stats_over(const TransformerSpec& spec, const WeightSet& weights,
                                    const std::vector<Sequence>& seqs, int slice_row) {
    int n_seqs = static_cast<int>(seqs.size());
    if (n_seqs < 2) fail(ErrorCode::contract, "attention_stats: need n_seqs >= 2");
    auto model = EvalModelD::build(spec, weights);

    // two passes for a deterministic mean/std
    AttentionStats stats;
    stats.n_seqs = n_seqs;
    stats.slice_row = slice_row;

    for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i < n_seqs; ++i) {
            const Sequence& seq = seqs[i];
            ForwardResult fr = model.forward(seq, /*want_trace=*/true);
            if (pass == 0 && i == 0) {
                for (const auto& e : fr.trace.entries) {
                    AttentionStats::Entry se;
                    se.layer = e.layer;
                    se.head = e.head;
                    se.T = e.T;
                    se.mean.assign(e.att.size(), 0.0);
                    se.stddev.assign(e.att.size(), 0.0);
                    stats.entries.push_back(std::move(se));
                }
            }
            for (size_t t = 0; t < fr.trace.entries.size(); ++t) {
                auto& se = stats.entries[t];
                const auto& att = fr.trace.entries[t].att;
                if (pass == 0) {
                    for (size_t j = 0; j < att.size(); ++j) se.mean[j] += att[j];
                } else {
                    for (size_t j = 0; j < att.size(); ++j) {
                        double dlt = att[j] - se.mean[j];
                        se.stddev[j] += dlt * dlt;
                    }
                }
            }
        }
        if (pass == 0)
            for (auto& se : stats.entries)
                for (double& v : se.mean) v /= n_seqs;
    }
    for (auto& se : stats.entries)
        for (double& v : se.stddev) v = std::sqrt(v / n_seqs);  // population std
    return stats;
}

double assumption1_score(const AttentionStats& stats, int layer) {
    double mx = -1.0;
    for (const auto& e : stats.entries) {
        if (e.layer != layer) continue;
        for (double v : e.stddev) mx = std::max(mx, v);
    }
    if (mx < 0.0) fail(ErrorCode::contract, "assumption1_score: layer " + std::to_string(layer) + " not in stats");
    return mx;
}

NormErrorResult normerror_bruteforce(int S, int k) {
    if (S < 2 || k < 1) fail(ErrorCode::contract, "normerror_bruteforce: S >= 2, k >= 1");
    if (S > 4 || k > 6) fail(ErrorCode::capacity, "normerror_bruteforce: guarded to S <= 4, k <= 6");
    long n_windows = 1;
    for (int i = 0; i < k; ++i) n_windows *= S;

    auto window_vec = [&](long idx) {
        std::vector<double> v(S, 0.0);
        std::vector<int> w(k);
        double pw = 1.0;
        for (int j = 0; j < k; ++j) {
            w[j] = static_cast<int>(idx % S);
            idx /= S;
            v[w[j]] += pw;
            pw *= 3.0;
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
        return std::pair<std::vector<double>, std::vector<int>>(std::move(v), std::move(w));
    };

    std::vector<std::vector<double>> vecs(n_windows);
    std::vector<std::vector<int>> wins(n_windows);
    for (long i = 0; i < n_windows; ++i) {
        auto [v, w] = window_vec(i);
        vecs[i] = std::move(v);
        wins[i] = std::move(w);
    }

    NormErrorResult res;
    res.min_distance = std::numeric_limits<double>::infinity();
    for (long a = 0; a < n_windows; ++a) {
        for (long b = a + 1; b < n_windows; ++b) {
            double d2 = 0.0;
            for (int s = 0; s < S; ++s) {
                double dlt = vecs[a][s] - vecs[b][s];
                d2 += dlt * dlt;
            }
            double d = std::sqrt(d2);
            res.pairs_checked++;
            if (d < res.min_distance) {
                res.min_distance = d;
                res.window_a = wins[a];
                res.window_b = wins[b];
            }
        }
    }
    return res;
}

std::vector<SweepPoint> precision_sweep(const std::string& id, int S, int k, int T,
                                        const std::vector<double>& kappas, Precision precision, int n_seqs,
                                        uint64_t seed) {
    if (kappas.empty()) fail(ErrorCode::contract, "precision_sweep: empty kappa ladder");
    std::vector<SweepPoint> out;
    for (double kp : kappas) {
        SweepPoint p;
        p.kappa = kp;
        p.precision = precision;
        try {
            ConstructionReport rep = verify_construction(id, S, k, T, n_seqs, kp, /*tol=*/0.0, seed, precision);
            p.max_abs_err = rep.max_abs_err;
        } catch (const Error& e) {
            // overflow or degenerate arithmetic becomes a data point
            p.max_abs_err = std::numeric_limits<double>::infinity();
        }
        out.push_back(p);
    }
    return out;
}

std::string sweep_to_csv(const std::vector<SweepPoint>& points) {
    std::ostringstream os;
    os.precision(12);
    os << "kappa,precision,max_abs_err\n";
    for (const auto& p : points)
        os << p.kappa << "," << (p.precision == Precision::f64 ? "f64" : "f32") << "," << p.max_abs_err << "\n";
    return os.str();
}

InductionHeadAudit induction_head_audit(const TransformerSpec& spec, const WeightSet& weights, int S, int k,
                                        int n_seqs, int T, uint64_t seed, int layer) {
    if (layer < 1 || layer > spec.layers) fail(ErrorCode::contract, "induction_head_audit: bad layer");
    auto model = EvalModelD::build(spec, weights);
    Rng seeder(seed, "ih-audit");
    InductionHeadAudit audit;
    audit.n_total = n_seqs;
    double tv_sum = 0.0;
    for (int i = 0; i < n_seqs; ++i) {
        MarkovKernel kernel = sample_kernel(S, k, seeder.fork(2 * i).next_u64());
        Sequence seq = sample_sequence(kernel, T, seeder.fork(2 * i + 1).next_u64());
        if (match_set(seq, k, T).empty()) continue;
        ForwardResult fr = model.forward(seq, /*want_trace=*/true);
        const auto& e = fr.trace.find(layer, 1);
        std::vector<double> row(e.att.begin() + static_cast<long>(T - 1) * T, e.att.begin() + static_cast<long>(T) * T);
        InductionHeadScore score = induction_head_score(row, seq, k);
        audit.n_scored++;
        if (score.pass) audit.n_passed++;
        tv_sum += score.tv_to_uniform;
    }
    audit.pass_rate = audit.n_scored > 0 ? static_cast<double>(audit.n_passed) / audit.n_scored : 0.0;
    audit.mean_tv = audit.n_scored > 0 ? tv_sum / audit.n_scored : 0.0;
    return audit;
}

}  // namespace kgram
