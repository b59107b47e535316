#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kgram/analysis.hpp"
#include "kgram/constructions.hpp"
#include "kgram/markov.hpp"
#include "kgram/ngram.hpp"
#include "kgram/training.hpp"
#include "kgram/version.hpp"

namespace py = pybind11;
using namespace kgram;

extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace {

Sequence to_sequence(int S, const std::vector<int>& symbols) { return Sequence{S, symbols}; }

py::dict report_dict(const ConstructionReport& r) {
    py::dict d;
    d["construction"] = r.construction;
    d["S"] = r.S;
    d["k"] = r.k;
    d["T"] = r.T;
    d["kappa"] = r.kappa;
    d["n_seqs"] = r.n_seqs;
    d["positions_checked"] = r.positions_checked;
    d["positions_skipped"] = r.positions_skipped;
    d["max_abs_err"] = r.max_abs_err;
    d["max_tv"] = r.max_tv;
    d["pass"] = r.pass;
    return d;
}

// A construction compiled to weights, wrapped for evaluation.
class ConstructionModel {
public:
    ConstructionModel(const std::string& id, int S, int k, double kappa, int T_max) {
        auto [spec, weights] = build_construction(id, S, k, kappa, T_max);
        spec_ = spec;
        model_ = EvalModelD::build(spec, weights);
    }

    std::vector<std::vector<double>> forward(const std::vector<int>& symbols) const {
        ForwardResult fr = model_.forward(to_sequence(spec_.S, symbols));
        std::vector<std::vector<double>> rows(fr.T, std::vector<double>(fr.S));
        for (int n = 0; n < fr.T; ++n)
            for (int s = 0; s < fr.S; ++s) rows[n][s] = fr.outputs[n * fr.S + s];
        return rows;
    }

    std::vector<std::vector<double>> attention(const std::vector<int>& symbols, int layer, int head) const {
        ForwardResult fr = model_.forward(to_sequence(spec_.S, symbols), /*want_trace=*/true);
        const auto& e = fr.trace.find(layer, head);
        std::vector<std::vector<double>> rows(e.T, std::vector<double>(e.T));
        for (int n = 0; n < e.T; ++n)
            for (int i = 0; i < e.T; ++i) rows[n][i] = e.att[n * e.T + i];
        return rows;
    }

    int layers() const { return spec_.layers; }
    int width() const { return spec_.d; }

private:
    TransformerSpec spec_;
    EvalModelD model_;
};

}  // namespace

PYBIND11_MODULE(kgramlab, m) {
    m.doc() = "in-context k-gram transformer laboratory";
    m.attr("__version__") = kVersion;
    if (openblas_set_num_threads) openblas_set_num_threads(1);

    py::register_exception<Error>(m, "KgramError");

    m.def(
        "sample_kernel",
        [](int S, int k, uint64_t seed) {
            MarkovKernel kernel = sample_kernel(S, k, seed);
            std::vector<std::vector<double>> rows(kernel.rows(), std::vector<double>(S));
            for (long r = 0; r < kernel.rows(); ++r)
                for (int s = 0; s < S; ++s) rows[r][s] = kernel.row(r)[s];
            return rows;
        },
        py::arg("S"), py::arg("k"), py::arg("seed"),
        "Order-k transition table sampled row-wise from Dirichlet(1).");

    m.def(
        "sample_sequence",
        [](int S, int k, int T, uint64_t kernel_seed, uint64_t seq_seed) {
            MarkovKernel kernel = sample_kernel(S, k, kernel_seed);
            return sample_sequence(kernel, T, seq_seed).symbols;
        },
        py::arg("S"), py::arg("k"), py::arg("T"), py::arg("kernel_seed"), py::arg("seq_seed"));

    m.def(
        "match_set",
        [](int S, const std::vector<int>& symbols, int k, int n) { return match_set(to_sequence(S, symbols), k, n); },
        py::arg("S"), py::arg("symbols"), py::arg("k"), py::arg("n"),
        "1-based positions whose k-symbol history matches the final context.");

    m.def(
        "conditional_kgram",
        [](int S, const std::vector<int>& symbols, int k) -> py::object {
            Distribution d = conditional_kgram(to_sequence(S, symbols), k);
            if (!d.defined) return py::none();
            return py::cast(d.p);
        },
        py::arg("S"), py::arg("symbols"), py::arg("k"),
        "In-context conditional k-gram estimate; None when undefined.");

    m.def(
        "laplace_kgram",
        [](int S, const std::vector<int>& symbols, int k, double alpha) {
            return laplace_kgram(to_sequence(S, symbols), k, alpha).p;
        },
        py::arg("S"), py::arg("symbols"), py::arg("k"), py::arg("alpha") = 1.0);

    m.def("recommended_kappa", &recommended_kappa, py::arg("k"), py::arg("T"), py::arg("eps"));

    m.def(
        "verify_construction",
        [](const std::string& id, int S, int k, int T, int n_seqs, double kappa, double tol, uint64_t seed,
           const std::string& precision) {
            Precision p = precision == "f32" ? Precision::f32 : Precision::f64;
            return report_dict(verify_construction(id, S, k, T, n_seqs, kappa, tol, seed, p));
        },
        py::arg("id"), py::arg("S"), py::arg("k"), py::arg("T"), py::arg("n_seqs"), py::arg("kappa"),
        py::arg("tol"), py::arg("seed"), py::arg("precision") = "f64");

    m.def(
        "normerror_bruteforce",
        [](int S, int k) {
            NormErrorResult r = normerror_bruteforce(S, k);
            py::dict d;
            d["min_distance"] = r.min_distance;
            d["window_a"] = r.window_a;
            d["window_b"] = r.window_b;
            d["pairs_checked"] = r.pairs_checked;
            return d;
        },
        py::arg("S"), py::arg("k"));

    py::class_<ConstructionModel>(m, "ConstructionModel")
        .def(py::init<const std::string&, int, int, double, int>(), py::arg("id"), py::arg("S"), py::arg("k"),
             py::arg("kappa"), py::arg("T_max") = 512)
        .def("forward", &ConstructionModel::forward, py::arg("symbols"),
             "Per-position outputs (probabilities of the next symbol).")
        .def("attention", &ConstructionModel::attention, py::arg("symbols"), py::arg("layer"), py::arg("head") = 1)
        .def_property_readonly("layers", &ConstructionModel::layers)
        .def_property_readonly("width", &ConstructionModel::width);
}
