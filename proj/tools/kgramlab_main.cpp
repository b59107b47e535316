// kgramlab: data generation, construction verification, training and
// analysis for in-context k-gram transformers.
//
// Exit codes: 0 pass, 1 fail, 2 inconclusive, 64 usage/config error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kgram/analysis.hpp"
#include "kgram/constructions.hpp"
#include "kgram/markov.hpp"
#include "kgram/ngram.hpp"
#include "kgram/training.hpp"
#include "kgram/transformer.hpp"
#include "kgram/version.hpp"

namespace {

using kgram::Error;
using kgram::ErrorCode;
using json = nlohmann::ordered_json;

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitInconclusive = 2;
constexpr int kExitUsage = 64;

// Weak hook so a single-threaded BLAS is enforced when OpenBLAS is linked.
extern "C" void openblas_set_num_threads(int) __attribute__((weak));

void pin_blas_threads() {
    if (openblas_set_num_threads) openblas_set_num_threads(1);
}

struct Manifest {
    std::string subcommand;
    json config;
    uint64_t seed = 0;
    std::vector<std::string> outputs;
    double wall_clock_s = 0.0;

    json to_json() const {
        json j;
        j["tool"] = "kgramlab";
        j["version"] = kgram::kVersion;
        j["subcommand"] = subcommand;
        j["config"] = config;
        j["seed"] = seed;
        j["outputs"] = outputs;
        j["wall_clock_s"] = wall_clock_s;
        return j;
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) kgram::fail(ErrorCode::io, "cannot open " + path + " for writing");
    f << text;
    if (!f) kgram::fail(ErrorCode::io, "write failed for " + path);
}

// The manifest is written before results so a crashed run still records its
// resolved configuration; wall clock is filled in afterwards.
class ManifestWriter {
public:
    ManifestWriter(Manifest m, std::string path) : m_(std::move(m)), path_(std::move(path)) {
        start_ = std::chrono::steady_clock::now();
        if (!path_.empty()) write_text(path_, m_.to_json().dump(2) + "\n");
    }
    void finish() {
        if (path_.empty()) return;
        m_.wall_clock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_text(path_, m_.to_json().dump(2) + "\n");
    }

private:
    Manifest m_;
    std::string path_;
    std::chrono::steady_clock::time_point start_;
};

std::pair<kgram::TransformerSpec, kgram::WeightSet> resolve_model(const std::string& checkpoint,
                                                                  const std::string& construction, int S, int k,
                                                                  double kappa, int T) {
    if (!checkpoint.empty()) return kgram::load_checkpoint(checkpoint);
    if (construction.empty())
        kgram::fail(ErrorCode::config, "need --checkpoint or --construction");
    return kgram::build_construction(construction, S, k, kappa, std::max(T, 8));
}

double resolve_kappa(const std::string& kappa_flag, int k, int T, double eps) {
    if (kappa_flag == "auto" || kappa_flag.empty()) return kgram::recommended_kappa(k, T, eps);
    try {
        size_t pos = 0;
        double v = std::stod(kappa_flag, &pos);
        if (pos != kappa_flag.size()) throw std::invalid_argument(kappa_flag);
        return v;
    } catch (const std::exception&) {
        kgram::fail(ErrorCode::config, "--kappa must be a number or 'auto'");
    }
}

int cmd_gen_data(int S, int k, int T, int n, uint64_t seed, const std::string& out) {
    Manifest m;
    m.subcommand = "gen-data";
    m.config = {{"S", S}, {"k", k}, {"T", T}, {"n", n}, {"out", out}};
    m.seed = seed;
    m.outputs = {out};
    ManifestWriter mw(m, out + ".manifest.json");
    uint64_t checksum = kgram::write_dataset(out, S, k, T, n, seed);
    mw.finish();
    std::cout << "wrote " << n << " sequences to " << out << "\n";
    std::cout << "kernel checksum: " << std::hex << std::setw(16) << std::setfill('0') << checksum << std::dec
              << "\n";
    return kExitPass;
}

int cmd_verify(const std::string& construction, int S, int k, int T, int n_seqs, const std::string& kappa_flag,
               double tol, double eps, uint64_t seed, const std::string& out, const std::string& csv,
               const std::string& precision) {
    double kappa = resolve_kappa(kappa_flag, k, T, eps);
    kgram::Precision prec = precision == "f32" ? kgram::Precision::f32 : kgram::Precision::f64;
    Manifest m;
    m.subcommand = "verify";
    m.config = {{"construction", construction}, {"S", S},     {"k", k},           {"T", T},
                {"n_seqs", n_seqs},             {"kappa", kappa}, {"tol", tol},   {"precision", precision}};
    m.seed = seed;
    if (!out.empty()) m.outputs.push_back(out);
    if (!csv.empty()) m.outputs.push_back(csv);
    ManifestWriter mw(m, out.empty() ? "" : out + ".manifest.json");

    kgram::ConstructionReport rep = kgram::verify_construction(construction, S, k, T, n_seqs, kappa, tol, seed, prec);
    std::string rep_json = kgram::report_to_json(rep);
    if (!out.empty()) write_text(out, rep_json + "\n");
    if (!csv.empty()) write_text(csv, kgram::report_csv_header() + "\n" + kgram::report_to_csv_row(rep) + "\n");
    mw.finish();
    std::cout << rep_json << "\n";
    return rep.pass ? kExitPass : kExitFail;
}

int cmd_train(const std::string& config_path, uint64_t seed, const std::string& out_dir, int threads) {
    std::ifstream cf(config_path);
    if (!cf) kgram::fail(ErrorCode::config, "cannot open config file " + config_path);
    std::stringstream ss;
    ss << cf.rdbuf();
    kgram::TrainConfig cfg = kgram::train_config_from_json(ss.str());
    if (threads > 0) cfg.threads = threads;
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    Manifest m;
    m.subcommand = "train";
    m.config = json::parse(kgram::train_config_to_json(cfg));
    m.seed = seed;
    m.outputs = {out_dir + "/trainlog.csv", out_dir + "/checkpoint.json"};
    ManifestWriter mw(m, out_dir + "/manifest.json");

    kgram::TrainResult result = kgram::train(cfg, seed);
    write_text(out_dir + "/trainlog.csv", result.log.to_csv());
    kgram::save_checkpoint(out_dir + "/checkpoint.json", cfg.spec, result.weights);
    mw.finish();

    const auto& last = result.log.rows.back();
    std::cout << "iterations: " << result.iterations_run << "\n";
    std::cout << "final test loss: " << last.test_loss << "  bayes loss: " << last.bayes_loss
              << "  gap: " << last.gap << " nats\n";
    return kExitPass;
}

int cmd_analyze_normerror(int S, int k) {
    kgram::NormErrorResult res = kgram::normerror_bruteforce(S, k);
    std::cout << "pairs checked: " << res.pairs_checked << "\n";
    std::cout << "min mismatch distance: " << std::setprecision(12) << res.min_distance << "\n";
    std::cout << "bound 3^-k:            " << std::pow(3.0, -k) << "\n";
    auto show = [](const std::vector<int>& w) {
        std::string s;
        for (int v : w) s += std::to_string(v);
        return s;
    };
    std::cout << "witness pair: (" << show(res.window_a) << ", " << show(res.window_b) << ")\n";
    return res.min_distance >= std::pow(3.0, -k) ? kExitPass : kExitFail;
}

int cmd_analyze_gradcheck(int S, int L, int d, int T, uint64_t seed) {
    kgram::TrainConfig cfg = kgram::TrainConfig::defaults(S, 1, L, d, T);
    kgram::WeightSet w = kgram::init_weights(cfg.spec, seed);
    w.set_requires_grad(true);
    kgram::MarkovKernel kernel = kgram::sample_kernel(S, 1, seed + 1);
    kgram::Sequence seq = kgram::sample_sequence(kernel, T, seed + 2);
    std::vector<int> targets(T, 0);
    for (int r = 0; r + 1 < T; ++r) targets[r] = seq.symbols[r + 1];
    auto loss = [&]() {
        return kgram::ops::cross_entropy_mean(kgram::forward_tape(cfg.spec, w, seq), targets, 1, T - 1);
    };
    kgram::GradCheckOptions opts;
    opts.seed = seed;
    kgram::GradCheckReport rep = kgram::grad_check(w.items, loss, opts);
    std::cout << "checked " << rep.coords_checked << " coordinates, max rel err " << rep.max_rel_err << " (worst: "
              << rep.worst_param << ")\n";
    return rep.pass ? kExitPass : kExitFail;
}

int cmd_analyze_attn_stats(const std::string& checkpoint, const std::string& construction, int S, int k,
                           const std::string& kappa_flag, int n_seqs, int T, uint64_t seed, int slice_row,
                           const std::string& out) {
    double kappa = construction.empty() ? 0.0 : resolve_kappa(kappa_flag, k, T, 1e-3);
    auto [spec, weights] = resolve_model(checkpoint, construction, S, k, kappa, T);
    kgram::AttentionStats stats = kgram::attention_stats(spec, weights, S, k, n_seqs, T, seed, slice_row);
    if (!out.empty()) write_text(out, stats.to_csv());
    for (int l = 1; l <= spec.layers; ++l)
        std::cout << "assumption-1 score (max std), layer " << l << ": " << kgram::assumption1_score(stats, l)
                  << "\n";
    auto slice = stats.mean_slice(1, 1);
    long argmax = 0;
    for (size_t i = 0; i < slice.size(); ++i)
        if (slice[i] > slice[argmax]) argmax = static_cast<long>(i);
    std::cout << "layer-1 mean attention row n=" << slice_row << " peaks at i=" << (argmax + 1) << "\n";
    if (!out.empty()) std::cout << "stats written to " << out << "\n";
    return kExitPass;
}

int cmd_analyze_sweep(const std::string& construction, int S, int k, int T, const std::string& kappas_flag,
                      const std::string& precision, int n_seqs, uint64_t seed, const std::string& out) {
    std::vector<double> ladder;
    if (kappas_flag.empty()) {
        double k0 = kgram::recommended_kappa(k, T, 1.0);
        for (int i = 0; i < 4; ++i) ladder.push_back(k0 * (1 << i));
    } else {
        std::stringstream ss(kappas_flag);
        std::string item;
        while (std::getline(ss, item, ',')) ladder.push_back(std::stod(item));
    }
    kgram::Precision prec = precision == "f32" ? kgram::Precision::f32 : kgram::Precision::f64;
    auto points = kgram::precision_sweep(construction, S, k, T, ladder, prec, n_seqs, seed);
    std::string csv = kgram::sweep_to_csv(points);
    if (!out.empty()) write_text(out, csv);
    std::cout << csv;
    return kExitPass;
}

int cmd_analyze_ih_audit(const std::string& checkpoint, const std::string& construction, int S, int k,
                         const std::string& kappa_flag, int n_seqs, int T, uint64_t seed, int layer) {
    double kappa = construction.empty() ? 0.0 : resolve_kappa(kappa_flag, k, T, 1e-3);
    auto [spec, weights] = resolve_model(checkpoint, construction, S, k, kappa, T);
    if (layer <= 0) layer = spec.layers;
    kgram::InductionHeadAudit audit = kgram::induction_head_audit(spec, weights, S, k, n_seqs, T, seed, layer);
    std::cout << "scored " << audit.n_scored << "/" << audit.n_total << " sequences (nonempty match set)\n";
    std::cout << "pass rate: " << audit.pass_rate << "\n";
    std::cout << "mean TV to Unif(I_T): " << audit.mean_tv << "\n";
    return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
    pin_blas_threads();
    CLI::App app{"in-context k-gram transformer laboratory"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kgram::kVersion);

    uint64_t seed = 0;
    int threads = 1;
    app.add_option("--seed", seed, "master 64-bit seed")->capture_default_str();
    app.add_option("--threads", threads, "worker threads (training)")->capture_default_str();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "sample a kernel and write a sequence dataset");
    int gS = 2, gk = 1, gT = 32, gn = 10;
    std::string gout;
    gen->add_option("--S", gS, "alphabet size")->capture_default_str();
    gen->add_option("--k", gk, "Markov order")->capture_default_str();
    gen->add_option("--T", gT, "sequence length")->capture_default_str();
    gen->add_option("--n", gn, "number of sequences")->capture_default_str();
    gen->add_option("--out", gout, "output path")->required();

    // verify
    auto* ver = app.add_subcommand("verify", "check a construction against the brute-force oracle");
    std::string vcons, vkappa = "auto", vout, vcsv, vprec = "f64";
    int vS = 2, vk = 1, vT = 64, vn = 100;
    double vtol = 1e-3, veps = 1e-3;
    ver->add_option("--construction", vcons, "t1|t2|t3|t4")->required();
    ver->add_option("--S", vS, "alphabet size")->capture_default_str();
    ver->add_option("--k", vk, "Markov order")->capture_default_str();
    ver->add_option("--T", vT, "sequence length")->capture_default_str();
    ver->add_option("--n-seqs", vn, "number of sequences")->capture_default_str();
    ver->add_option("--kappa", vkappa, "temperature, or 'auto'")->capture_default_str();
    ver->add_option("--eps", veps, "target mass for kappa=auto")->capture_default_str();
    ver->add_option("--tol", vtol, "max abs logit error tolerance")->capture_default_str();
    ver->add_option("--out", vout, "report JSON path");
    ver->add_option("--csv", vcsv, "report CSV path");
    ver->add_option("--precision", vprec, "f64|f32")->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "train a standard pre-LN model on Markov data");
    std::string tconfig, tout = "train-out";
    tr->add_option("--config", tconfig, "TrainConfig JSON path")->required();
    tr->add_option("--out-dir", tout, "output directory")->capture_default_str();

    // analyze
    auto* an = app.add_subcommand("analyze", "attention statistics, sweeps, audits, gradient checks");
    std::string amode, acheckpoint, acons, akappa = "auto", aout, akappas, aprec = "f64";
    int aS = 2, ak = 1, aT = 64, an_seqs = 100, alayer = 0, aL = 2, ad = 16, aslice = 10;
    an->add_option("--mode", amode, "attn-stats|sweep|normerror|ih-audit|gradcheck")->required();
    an->add_option("--checkpoint", acheckpoint, "model checkpoint JSON");
    an->add_option("--construction", acons, "t1|t2|t3|t4");
    an->add_option("--kappa", akappa, "temperature, or 'auto'")->capture_default_str();
    an->add_option("--kappas", akappas, "comma-separated ladder for sweep");
    an->add_option("--precision", aprec, "f64|f32 (sweep)")->capture_default_str();
    an->add_option("--S", aS, "alphabet size")->capture_default_str();
    an->add_option("--k", ak, "Markov order")->capture_default_str();
    an->add_option("--T", aT, "sequence length")->capture_default_str();
    an->add_option("--n-seqs", an_seqs, "ensemble size")->capture_default_str();
    an->add_option("--layer", alayer, "layer to audit (default: last)")->capture_default_str();
    an->add_option("--L", aL, "layers for gradcheck model")->capture_default_str();
    an->add_option("--d", ad, "width for gradcheck model")->capture_default_str();
    an->add_option("--slice-row", aslice, "query position for the exported slice")->capture_default_str();
    an->add_option("--out", aout, "output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*gen) {
            if (gk < 1 || gS < 2 || gT < gk || gn < 1)
                kgram::fail(ErrorCode::config, "gen-data: need S >= 2, k >= 1, T >= k, n >= 1");
            return cmd_gen_data(gS, gk, gT, gn, seed, gout);
        }
        if (*ver) return cmd_verify(vcons, vS, vk, vT, vn, vkappa, vtol, veps, seed, vout, vcsv, vprec);
        if (*tr) return cmd_train(tconfig, seed, tout, threads);
        if (*an) {
            if (amode == "normerror") return cmd_analyze_normerror(aS, ak);
            if (amode == "gradcheck") return cmd_analyze_gradcheck(aS, aL, ad, aT, seed);
            if (amode == "attn-stats")
                return cmd_analyze_attn_stats(acheckpoint, acons, aS, ak, akappa, an_seqs, aT, seed, aslice, aout);
            if (amode == "sweep") return cmd_analyze_sweep(acons, aS, ak, aT, akappas, aprec, an_seqs, seed, aout);
            if (amode == "ih-audit")
                return cmd_analyze_ih_audit(acheckpoint, acons, aS, ak, akappa, an_seqs, aT, seed, alayer);
            kgram::fail(ErrorCode::config, "unknown --mode '" + amode + "'");
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.code()) {
            case ErrorCode::inconclusive: return kExitInconclusive;
            case ErrorCode::config:
            case ErrorCode::parse: return kExitUsage;
            default: return kExitFail;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFail;
    }
    return kExitPass;
}
