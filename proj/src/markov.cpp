#include "kgram/markov.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "kgram/random.hpp"

namespace kgram {

namespace {

long checked_table_size(int S, int k) {
    if (S < 2) fail(ErrorCode::contract, "alphabet size must be >= 2, got " + std::to_string(S));
    if (k < 1) fail(ErrorCode::contract, "order must be >= 1, got " + std::to_string(k));
    constexpr long kMaxEntries = 1L << 28;
    long entries = S;
    for (int i = 0; i < k; ++i) {
        entries *= S;
        if (entries > kMaxEntries)
            fail(ErrorCode::capacity,
                 "kernel table S^k*S overflows capacity for S=" + std::to_string(S) + " k=" + std::to_string(k));
    }
    return entries;  // S^k * S
}

}  // namespace

long MarkovKernel::context_index(const Sequence& seq, int n) const {
    if (n < k) fail(ErrorCode::context, "context needs n >= k, got n=" + std::to_string(n) + " k=" + std::to_string(k));
    long ctx = 0;
    long pw = 1;
    for (int j = 0; j < k; ++j) {  // x_n least significant
        ctx += static_cast<long>(seq.at(n - j)) * pw;
        pw *= S;
    }
    return ctx;
}

MarkovKernel sample_kernel(int S, int k, uint64_t seed) {
    long entries = checked_table_size(S, k);
    MarkovKernel kernel{S, k, std::vector<double>(entries, 0.0)};
    Rng rng(seed, "kernel");
    long rows = entries / S;
    for (long r = 0; r < rows; ++r) {
        double* row = kernel.table.data() + r * S;
        double total = 0.0;
        for (int s = 0; s < S; ++s) total += row[s] = rng.exponential();
        for (int s = 0; s < S; ++s) row[s] /= total;
    }
    return kernel;
}

Sequence sample_sequence(const MarkovKernel& kernel, int T, uint64_t seed) {
    if (T < kernel.k) fail(ErrorCode::contract, "T must be >= k");
    Sequence seq{kernel.S, {}};
    seq.symbols.reserve(T);
    Rng rng(seed, "sequence");
    long ctx = 0;
    long ctx_mod = 1;
    for (int j = 0; j < kernel.k - 1; ++j) ctx_mod *= kernel.S;
    for (int n = 0; n < T; ++n) {
        int sym;
        if (n < kernel.k) {
            sym = static_cast<int>(rng.uniform_int(kernel.S));
        } else {
            const double* row = kernel.row(ctx);
            double u = rng.uniform();
            sym = kernel.S - 1;
            for (int s = 0; s < kernel.S; ++s) {
                u -= row[s];
                if (u < 0.0) {
                    sym = s;
                    break;
                }
            }
        }
        seq.symbols.push_back(sym);
        ctx = (ctx % ctx_mod) * kernel.S + sym;
    }
    return seq;
}

Distribution true_conditional(const MarkovKernel& kernel, const Sequence& seq, int n) {
    long ctx = kernel.context_index(seq, n);  // throws on n < k
    const double* row = kernel.row(ctx);
    return Distribution::of(std::vector<double>(row, row + kernel.S));
}

namespace {

// Incremental add-alpha smoothed conditional k-gram over a growing prefix.
class LaplaceCounter {
public:
    LaplaceCounter(int S, int k, double alpha) : S_(S), k_(k), alpha_(alpha) {
        long rows = 1;
        for (int i = 0; i < k; ++i) rows *= S;
        counts_.assign(rows * S, 0);
        row_totals_.assign(rows, 0);
    }

    std::vector<double> predict(long ctx) const {
        std::vector<double> p(S_);
        double denom = row_totals_[ctx] + alpha_ * S_;
        for (int s = 0; s < S_; ++s) p[s] = (counts_[ctx * S_ + s] + alpha_) / denom;
        return p;
    }

    void observe(long ctx, int sym) {
        counts_[ctx * S_ + sym] += 1;
        row_totals_[ctx] += 1;
    }

private:
    int S_, k_;
    double alpha_;
    std::vector<long> counts_;
    std::vector<long> row_totals_;
};

void check_distribution(const Distribution& d, int S, int pos) {
    if (!d.defined || static_cast<int>(d.p.size()) != S)
        fail(ErrorCode::contract, "predictor returned a non-distribution at position " + std::to_string(pos));
    double sum = 0.0;
    for (double v : d.p) {
        if (!(v >= 0.0)) fail(ErrorCode::contract, "predictor returned a negative probability at position " + std::to_string(pos));
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        fail(ErrorCode::contract, "predictor output does not sum to 1 at position " + std::to_string(pos));
}

}  // namespace

EvalResult optimal_loss(int S, int k, const Predictor& model, int n_seqs, int T, uint64_t seed) {
    Rng seeder(seed, "optimal_loss");
    EvalResult out;
    std::vector<double> per_seq_gap(n_seqs, 0.0);
    double model_sum = 0.0, bayes_sum = 0.0;
    for (int i = 0; i < n_seqs; ++i) {
        uint64_t kernel_seed = seeder.fork(2 * i).next_u64();
        uint64_t seq_seed = seeder.fork(2 * i + 1).next_u64();
        MarkovKernel kernel = sample_kernel(S, k, kernel_seed);
        Sequence seq = sample_sequence(kernel, T, seq_seed);

        std::vector<Distribution> dists = model(seq);
        if (static_cast<int>(dists.size()) != T - k)
            fail(ErrorCode::contract, "predictor returned " + std::to_string(dists.size()) + " distributions, expected " +
                                          std::to_string(T - k));
        LaplaceCounter laplace(S, k, 1.0);
        // seed the counter with observations from positions k+1..n-1 as we go
        long ctx_mod = 1;
        for (int j = 0; j < k - 1; ++j) ctx_mod *= S;
        double m_loss = 0.0, b_loss = 0.0;
        for (int n = k + 1; n <= T; ++n) {
            long ctx = 0;
            {
                long pw = 1;
                for (int j = 1; j <= k; ++j) {  // context (x_{n-k}, ..., x_{n-1})
                    ctx += static_cast<long>(seq.at(n - j)) * pw;
                    pw *= S;
                }
            }
            const Distribution& md = dists[n - k - 1];
            check_distribution(md, S, n);
            int target = seq.at(n);
            double pm = md.p[target];
            if (!(pm > 0.0)) fail(ErrorCode::contract, "predictor assigned zero probability at position " + std::to_string(n));
            std::vector<double> pb = laplace.predict(ctx);
            m_loss -= std::log(pm);
            b_loss -= std::log(pb[target]);
            laplace.observe(ctx, target);
        }
        int count = T - k;
        m_loss /= count;
        b_loss /= count;
        model_sum += m_loss;
        bayes_sum += b_loss;
        per_seq_gap[i] = m_loss - b_loss;
    }
    out.model_loss = model_sum / n_seqs;
    out.bayes_loss = bayes_sum / n_seqs;
    out.gap = out.model_loss - out.bayes_loss;
    out.n_positions = static_cast<long>(n_seqs) * (T - k);
    if (n_seqs > 1) {
        double mean = out.gap, ss = 0.0;
        for (double g : per_seq_gap) ss += (g - mean) * (g - mean);
        out.gap_se = std::sqrt(ss / (n_seqs - 1)) / std::sqrt(static_cast<double>(n_seqs));
    }
    return out;
}

uint64_t write_dataset(const std::string& path, int S, int k, int T, int n_seqs, uint64_t seed) {
    MarkovKernel kernel = sample_kernel(S, k, seed);
    std::ofstream f(path);
    if (!f) fail(ErrorCode::io, "cannot open " + path + " for writing");
    f << "S=" << S << " k=" << k << " T=" << T << " seed=" << seed << "\n";
    Rng seeder(seed, "dataset");
    for (int i = 0; i < n_seqs; ++i) {
        Sequence seq = sample_sequence(kernel, T, seeder.fork(i).next_u64());
        for (int n = 0; n < T; ++n) f << (n ? " " : "") << seq.symbols[n];
        f << "\n";
    }
    if (!f) fail(ErrorCode::io, "write failed for " + path);
    // checksum of the kernel table bits
    uint64_t h = 0xcbf29ce484222325ull;
    for (double v : kernel.table) {
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        h = mix64(h ^ bits);
    }
    return h;
}

Dataset read_dataset(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorCode::io, "cannot open " + path);
    Dataset ds;
    std::string header;
    if (!std::getline(f, header)) fail(ErrorCode::parse, path + ": missing header");
    if (std::sscanf(header.c_str(), "S=%d k=%d T=%d seed=%llu", &ds.S, &ds.k, &ds.T,
                    reinterpret_cast<unsigned long long*>(&ds.seed)) != 4)
        fail(ErrorCode::parse, path + ": bad header '" + header + "'");
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        Sequence seq{ds.S, {}};
        std::istringstream is(line);
        int sym;
        while (is >> sym) {
            if (sym < 0 || sym >= ds.S) fail(ErrorCode::parse, path + ": symbol out of range");
            seq.symbols.push_back(sym);
        }
        if (seq.length() != ds.T) fail(ErrorCode::parse, path + ": sequence length != T");
        ds.sequences.push_back(std::move(seq));
    }
    return ds;
}

}  // namespace kgram
