#include "kgram/tensor.hpp"

#include <algorithm>
#include <cblas.h>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "kgram/random.hpp"

namespace kgram {

namespace {

long product(const std::vector<long>& shape) {
    long n = 1;
    for (long s : shape) n *= s;
    return n;
}

std::string shape_to_str(const std::vector<long>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

// C[m x n] += A @ B with optional transposes; the one BLAS touchpoint.
void dgemm_acc(bool ta, bool tb, long m, long n, long k, const double* a, const double* b, double* c,
               double beta) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a,
                static_cast<int>(ta ? m : k), b, static_cast<int>(tb ? k : n), beta, c,
                static_cast<int>(n));
}

}  // namespace

Tensor::Tensor(std::vector<long> shape, bool requires_grad) {
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->data.assign(product(node_->shape), 0.0);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<long> shape, bool requires_grad) { return Tensor(std::move(shape), requires_grad); }

Tensor Tensor::from_data(std::vector<long> shape, std::vector<double> data, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    if (static_cast<long>(data.size()) != t.numel())
        fail(ErrorCode::dimension, "from_data: " + std::to_string(data.size()) + " values for shape " + t.shape_str());
    t.node_->data = std::move(data);
    return t;
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

const std::vector<long>& Tensor::shape() const { return node_->shape; }
long Tensor::rank() const { return static_cast<long>(node_->shape.size()); }
long Tensor::rows() const { return rank() == 2 ? node_->shape[0] : 1; }
long Tensor::cols() const { return rank() == 2 ? node_->shape[1] : node_->shape[0]; }
long Tensor::numel() const { return node_->numel(); }
std::string Tensor::shape_str() const { return shape_to_str(node_->shape); }

const std::vector<double>& Tensor::data() const { return node_->data; }

std::vector<double>& Tensor::mutable_data() {
    if (node_->backfn) fail(ErrorCode::contract, "mutable_data on a non-leaf tensor");
    return node_->data;
}

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

double Tensor::item() const {
    if (numel() != 1) fail(ErrorCode::dimension, "item() on tensor of shape " + shape_str());
    return node_->data[0];
}

void Tensor::zero_grad() const { node_->grad.assign(node_->data.size(), 0.0); }

void Tensor::backward() const {
    if (numel() != 1) fail(ErrorCode::dimension, "backward() requires a scalar root, got " + shape_str());
    // Iterative post-order topological sort over parents.
    std::vector<Node*> topo;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({node_.get(), 0});
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (!seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(n);
            stack.pop_back();
        }
    }
    node_->ensure_grad();
    node_->grad[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backfn) n->backfn(*n);
    }
}

namespace ops {

namespace {

Tensor make_result(std::vector<long> shape, std::vector<Tensor> inputs, std::function<void(Tensor::Node&)> backfn) {
    bool rg = false;
    for (const auto& t : inputs) rg = rg || t.requires_grad();
    Tensor out(std::move(shape), rg);
    if (rg) {
        for (const auto& t : inputs) out.node()->parents.push_back(t.shared_node());
        out.node()->backfn = std::move(backfn);
    }
    return out;
}

void check_2d(const Tensor& t, const char* op) {
    if (t.rank() != 2) fail(ErrorCode::dimension, std::string(op) + ": expected rank-2 tensor, got " + t.shape_str());
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    if (a.cols() != b.rows())
        fail(ErrorCode::dimension, "matmul: inner dimensions disagree, " + a.shape_str() + " x " + b.shape_str());
    long m = a.rows(), k = a.cols(), n = b.cols();
    auto an = a.shared_node(), bn = b.shared_node();
    Tensor out = make_result({m, n}, {a, b}, [an, bn, m, k, n](Tensor::Node& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            dgemm_acc(false, true, m, k, n, o.grad.data(), bn->data.data(), an->grad.data(), 1.0);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            dgemm_acc(true, false, k, n, m, an->data.data(), o.grad.data(), bn->grad.data(), 1.0);
        }
    });
    dgemm_acc(false, false, m, n, k, a.data().data(), b.data().data(), out.node()->data.data(), 0.0);
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul_nt");
    check_2d(b, "matmul_nt");
    if (a.cols() != b.cols())
        fail(ErrorCode::dimension, "matmul_nt: inner dimensions disagree, " + a.shape_str() + " x " + b.shape_str() + "^T");
    long m = a.rows(), k = a.cols(), n = b.rows();
    auto an = a.shared_node(), bn = b.shared_node();
    Tensor out = make_result({m, n}, {a, b}, [an, bn, m, k, n](Tensor::Node& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            dgemm_acc(false, false, m, k, n, o.grad.data(), bn->data.data(), an->grad.data(), 1.0);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            dgemm_acc(true, false, n, k, m, o.grad.data(), an->data.data(), bn->grad.data(), 1.0);
        }
    });
    dgemm_acc(false, true, m, n, k, a.data().data(), b.data().data(), out.node()->data.data(), 0.0);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        fail(ErrorCode::dimension, "add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    auto an = a.shared_node(), bn = b.shared_node();
    Tensor out = make_result(a.shape(), {a, b}, [an, bn](Tensor::Node& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i];
        }
    });
    auto& d = out.node()->data;
    for (size_t i = 0; i < d.size(); ++i) d[i] = a.data()[i] + b.data()[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        fail(ErrorCode::dimension, "sub: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    auto an = a.shared_node(), bn = b.shared_node();
    Tensor out = make_result(a.shape(), {a, b}, [an, bn](Tensor::Node& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
        }
    });
    auto& d = out.node()->data;
    for (size_t i = 0; i < d.size(); ++i) d[i] = a.data()[i] - b.data()[i];
    return out;
}

Tensor scale(const Tensor& a, double c) {
    auto an = a.shared_node();
    Tensor out = make_result(a.shape(), {a}, [an, c](Tensor::Node& o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += c * o.grad[i];
    });
    auto& d = out.node()->data;
    for (size_t i = 0; i < d.size(); ++i) d[i] = c * a.data()[i];
    return out;
}

Tensor add_rowvec(const Tensor& mat, const Tensor& row) {
    check_2d(mat, "add_rowvec");
    if (row.numel() != mat.cols())
        fail(ErrorCode::dimension, "add_rowvec: " + mat.shape_str() + " vs row " + row.shape_str());
    long r = mat.rows(), c = mat.cols();
    auto mn = mat.shared_node(), rn = row.shared_node();
    Tensor out = make_result(mat.shape(), {mat, row}, [mn, rn, r, c](Tensor::Node& o) {
        if (mn->requires_grad) {
            mn->ensure_grad();
            for (size_t i = 0; i < o.grad.size(); ++i) mn->grad[i] += o.grad[i];
        }
        if (rn->requires_grad) {
            rn->ensure_grad();
            for (long i = 0; i < r; ++i)
                for (long j = 0; j < c; ++j) rn->grad[j] += o.grad[i * c + j];
        }
    });
    auto& d = out.node()->data;
    for (long i = 0; i < r; ++i)
        for (long j = 0; j < c; ++j) d[i * c + j] = mat.data()[i * c + j] + row.data()[j];
    return out;
}

Tensor relu(const Tensor& a) {
    auto an = a.shared_node();
    Tensor out = make_result(a.shape(), {a}, [an](Tensor::Node& o) {
        an->ensure_grad();
        // derivative at exactly 0 is defined as 0
        for (size_t i = 0; i < o.grad.size(); ++i)
            if (an->data[i] > 0.0) an->grad[i] += o.grad[i];
    });
    auto& d = out.node()->data;
    for (size_t i = 0; i < d.size(); ++i) d[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    return out;
}

Tensor sum(const Tensor& a) {
    auto an = a.shared_node();
    Tensor out = make_result({1}, {a}, [an](Tensor::Node& o) {
        an->ensure_grad();
        for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += o.grad[0];
    });
    double s = 0.0;
    for (double v : a.data()) s += v;
    out.node()->data[0] = s;
    return out;
}

Tensor row_softmax(const Tensor& a, bool causal) {
    check_2d(a, "row_softmax");
    long r = a.rows(), c = a.cols();
    if (causal && r != c)
        fail(ErrorCode::dimension, "row_softmax: causal mask needs a square matrix, got " + a.shape_str());
    auto an = a.shared_node();
    Tensor out = make_result({r, c}, {a}, [an, r, c, causal](Tensor::Node& o) {
        an->ensure_grad();
        for (long i = 0; i < r; ++i) {
            long lim = causal ? i + 1 : c;
            const double* p = o.data.data() + i * c;
            const double* gp = o.grad.data() + i * c;
            double dot = 0.0;
            for (long j = 0; j < lim; ++j) dot += p[j] * gp[j];
            double* ga = an->grad.data() + i * c;
            for (long j = 0; j < lim; ++j) ga[j] += p[j] * (gp[j] - dot);
        }
    });
    auto& d = out.node()->data;
    for (long i = 0; i < r; ++i) {
        long lim = causal ? i + 1 : c;
        const double* x = a.data().data() + i * c;
        double mx = -std::numeric_limits<double>::infinity();
        for (long j = 0; j < lim; ++j) mx = std::max(mx, x[j]);
        if (mx == -std::numeric_limits<double>::infinity())
            fail(ErrorCode::degenerate_input, "row_softmax: row " + std::to_string(i) + " has no valid key");
        double z = 0.0;
        double* y = d.data() + i * c;
        for (long j = 0; j < lim; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (long j = 0; j < lim; ++j) y[j] /= z;
        for (long j = lim; j < c; ++j) y[j] = 0.0;
    }
    return out;
}

namespace {

// Shared kernel for the row-wise standard layer norm family.
// gain == nullptr means a fixed scalar gain and no shift.
Tensor layernorm_impl(const Tensor& x, const Tensor* gain, const Tensor* shift, double fixed_gain) {
    long r = x.rows(), c = x.cols();
    if (c < 2) fail(ErrorCode::dimension, "layernorm: feature dimension must be >= 2, got " + x.shape_str());
    if (gain && (gain->numel() != c || shift->numel() != c))
        fail(ErrorCode::dimension, "layernorm: gain/shift do not match feature dim " + x.shape_str());

    std::vector<Tensor> inputs = {x};
    if (gain) {
        inputs.push_back(*gain);
        inputs.push_back(*shift);
    }
    auto xn = x.shared_node();
    auto gn = gain ? gain->shared_node() : nullptr;
    auto sn = shift ? shift->shared_node() : nullptr;
    // sigma is recomputed in backward from the saved input.
    auto backfn = [xn, gn, sn, r, c, fixed_gain](Tensor::Node& o) {
        for (long i = 0; i < r; ++i) {
            const double* xi = xn->data.data() + i * c;
            double mu = 0.0;
            for (long j = 0; j < c; ++j) mu += xi[j];
            mu /= c;
            double var = 0.0;
            for (long j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
            var /= c;
            double sigma = std::sqrt(var);
            const double* go = o.grad.data() + i * c;
            // dy/dxhat terms
            double mean_g = 0.0, mean_gx = 0.0;
            for (long j = 0; j < c; ++j) {
                double gj = gn ? gn->data[j] : fixed_gain;
                double xhat = (xi[j] - mu) / sigma;
                mean_g += go[j] * gj;
                mean_gx += go[j] * gj * xhat;
            }
            mean_g /= c;
            mean_gx /= c;
            if (xn->requires_grad) {
                xn->ensure_grad();
                double* gx = xn->grad.data() + i * c;
                for (long j = 0; j < c; ++j) {
                    double gj = gn ? gn->data[j] : fixed_gain;
                    double xhat = (xi[j] - mu) / sigma;
                    gx[j] += (go[j] * gj - mean_g - xhat * mean_gx) / sigma;
                }
            }
            if (gn && gn->requires_grad) {
                gn->ensure_grad();
                sn->ensure_grad();
                for (long j = 0; j < c; ++j) {
                    double xhat = (xi[j] - mu) / sigma;
                    gn->grad[j] += go[j] * xhat;
                    sn->grad[j] += go[j];
                }
            }
        }
    };
    Tensor out = make_result(x.shape(), inputs, backfn);
    auto& d = out.node()->data;
    for (long i = 0; i < r; ++i) {
        const double* xi = x.data().data() + i * c;
        double mu = 0.0;
        for (long j = 0; j < c; ++j) mu += xi[j];
        mu /= c;
        double var = 0.0;
        for (long j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= c;
        if (var <= 0.0)
            fail(ErrorCode::degenerate_input, "layernorm: zero variance (constant vector) in row " + std::to_string(i));
        double sigma = std::sqrt(var);
        for (long j = 0; j < c; ++j) {
            double xhat = (xi[j] - mu) / sigma;
            d[i * c + j] = gain ? gain->data()[j] * xhat + shift->data()[j] : fixed_gain * xhat;
        }
    }
    return out;
}

}  // namespace

Tensor layernorm_standard(const Tensor& v) {
    if (v.rank() != 1) fail(ErrorCode::dimension, "layernorm_standard: expected rank-1, got " + v.shape_str());
    return layernorm_impl(v, nullptr, nullptr, 1.0);
}

Tensor layernorm_rows(const Tensor& x, const Tensor& gain, const Tensor& shift) {
    check_2d(x, "layernorm_rows");
    return layernorm_impl(x, &gain, &shift, 1.0);
}

Tensor layernorm_rows_fixed(const Tensor& x, double gain) {
    check_2d(x, "layernorm_rows_fixed");
    return layernorm_impl(x, nullptr, nullptr, gain);
}

Tensor layernorm_l2(const Tensor& v) {
    if (v.rank() != 1) fail(ErrorCode::dimension, "layernorm_l2: expected rank-1, got " + v.shape_str());
    double nsq = 0.0;
    for (double x : v.data()) nsq += x * x;
    if (nsq <= 0.0) fail(ErrorCode::degenerate_input, "layernorm_l2: zero vector");
    double nrm = std::sqrt(nsq);
    auto vn = v.shared_node();
    Tensor out = make_result(v.shape(), {v}, [vn, nrm](Tensor::Node& o) {
        vn->ensure_grad();
        double dot = 0.0;
        for (size_t i = 0; i < o.data.size(); ++i) dot += o.data[i] * o.grad[i];
        for (size_t i = 0; i < o.data.size(); ++i) vn->grad[i] += (o.grad[i] - o.data[i] * dot) / nrm;
    });
    auto& d = out.node()->data;
    for (size_t i = 0; i < d.size(); ++i) d[i] = v.data()[i] / nrm;
    return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& idx) {
    check_2d(table, "gather_rows");
    long v = table.rows(), d = table.cols();
    for (int i : idx)
        if (i < 0 || i >= v) fail(ErrorCode::dimension, "gather_rows: index " + std::to_string(i) + " out of range");
    long t = static_cast<long>(idx.size());
    auto tn = table.shared_node();
    auto ids = idx;
    Tensor out = make_result({t, d}, {table}, [tn, ids, d](Tensor::Node& o) {
        tn->ensure_grad();
        for (size_t r = 0; r < ids.size(); ++r) {
            double* dst = tn->grad.data() + static_cast<long>(ids[r]) * d;
            const double* src = o.grad.data() + static_cast<long>(r) * d;
            for (long j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
    auto& out_d = out.node()->data;
    for (long r = 0; r < t; ++r)
        std::copy_n(table.data().data() + static_cast<long>(idx[r]) * d, d, out_d.data() + r * d);
    return out;
}

Tensor cross_entropy_mean(const Tensor& probs, const std::vector<int>& targets, int start, int end) {
    check_2d(probs, "cross_entropy");
    long r = probs.rows(), s = probs.cols();
    if (end < 0) end = static_cast<int>(targets.size());
    if (start < 1 || end > r || end > static_cast<int>(targets.size()) || start > end)
        fail(ErrorCode::dimension, "cross_entropy: bad range [" + std::to_string(start) + ", " + std::to_string(end) +
                                       "] for " + std::to_string(r) + " rows");
    long count = end - start + 1;
    auto pn = probs.shared_node();
    auto tg = targets;
    Tensor out = make_result({1}, {probs}, [pn, tg, start, end, s, count](Tensor::Node& o) {
        pn->ensure_grad();
        for (int n = start; n <= end; ++n) {
            long row = n - 1;
            int t = tg[row];
            pn->grad[row * s + t] += -o.grad[0] / (count * pn->data[row * s + t]);
        }
    });
    double loss = 0.0;
    for (int n = start; n <= end; ++n) {
        long row = n - 1;
        int t = targets[row];
        if (t < 0 || t >= s) fail(ErrorCode::dimension, "cross_entropy: target out of range at position " + std::to_string(n));
        double p = probs.data()[row * s + t];
        if (!(p > 0.0))
            fail(ErrorCode::numeric, "cross_entropy: zero probability at position " + std::to_string(n));
        loss -= std::log(p);
    }
    out.node()->data[0] = loss / count;
    return out;
}

Tensor rel_score(const Tensor& q, const Tensor& pk) {
    check_2d(q, "rel_score");
    check_2d(pk, "rel_score");
    if (q.cols() != pk.cols())
        fail(ErrorCode::dimension, "rel_score: width mismatch " + q.shape_str() + " vs " + pk.shape_str());
    long t = q.rows(), d = q.cols(), tmax = pk.rows();
    auto qn = q.shared_node(), pn = pk.shared_node();
    Tensor out = make_result({t, t}, {q, pk}, [qn, pn, t, d, tmax](Tensor::Node& o) {
        for (long n = 0; n < t; ++n) {
            const double* go = o.grad.data() + n * t;
            for (long i = 0; i <= n; ++i) {
                long off = n - i;
                if (off >= tmax) continue;
                double g = go[i];
                if (g == 0.0) continue;
                if (qn->requires_grad) {
                    qn->ensure_grad();
                    double* gq = qn->grad.data() + n * d;
                    const double* pv = pn->data.data() + off * d;
                    for (long j = 0; j < d; ++j) gq[j] += g * pv[j];
                }
                if (pn->requires_grad) {
                    pn->ensure_grad();
                    double* gp = pn->grad.data() + off * d;
                    const double* qv = qn->data.data() + n * d;
                    for (long j = 0; j < d; ++j) gp[j] += g * qv[j];
                }
            }
        }
    });
    auto& dd = out.node()->data;
    for (long n = 0; n < t; ++n) {
        const double* qv = q.data().data() + n * d;
        for (long i = 0; i <= n; ++i) {
            long off = n - i;
            double s = 0.0;
            if (off < tmax) {
                const double* pv = pk.data().data() + off * d;
                for (long j = 0; j < d; ++j) s += qv[j] * pv[j];
            }
            dd[n * t + i] = s;
        }
    }
    return out;
}

Tensor rel_value(const Tensor& att, const Tensor& pv) {
    check_2d(att, "rel_value");
    check_2d(pv, "rel_value");
    if (att.rows() != att.cols())
        fail(ErrorCode::dimension, "rel_value: attention must be square, got " + att.shape_str());
    long t = att.rows(), d = pv.cols(), tmax = pv.rows();
    auto an = att.shared_node(), pn = pv.shared_node();
    Tensor out = make_result({t, d}, {att, pv}, [an, pn, t, d, tmax](Tensor::Node& o) {
        for (long n = 0; n < t; ++n) {
            const double* go = o.grad.data() + n * d;
            for (long i = 0; i <= n; ++i) {
                long off = n - i;
                if (off >= tmax) continue;
                if (an->requires_grad) {
                    an->ensure_grad();
                    const double* pvv = pn->data.data() + off * d;
                    double s = 0.0;
                    for (long j = 0; j < d; ++j) s += go[j] * pvv[j];
                    an->grad[n * t + i] += s;
                }
                if (pn->requires_grad) {
                    pn->ensure_grad();
                    double a = an->data[n * t + i];
                    double* gp = pn->grad.data() + off * d;
                    for (long j = 0; j < d; ++j) gp[j] += a * go[j];
                }
            }
        }
    });
    auto& dd = out.node()->data;
    for (long n = 0; n < t; ++n) {
        double* on = dd.data() + n * d;
        const double* arow = att.data().data() + n * t;
        for (long i = 0; i <= n; ++i) {
            long off = n - i;
            if (off >= tmax) continue;
            double a = arow[i];
            if (a == 0.0) continue;
            const double* pvv = pv.data().data() + off * d;
            for (long j = 0; j < d; ++j) on[j] += a * pvv[j];
        }
    }
    return out;
}

}  // namespace ops

GradCheckReport grad_check(const std::vector<std::pair<std::string, Tensor>>& params,
                           const std::function<Tensor()>& loss_builder, const GradCheckOptions& opts) {
    Tensor loss = loss_builder();
    if (!std::isfinite(loss.item())) fail(ErrorCode::numeric, "grad_check: loss is non-finite at the base point");
    for (auto& [name, p] : params) p.zero_grad();
    loss.backward();

    long total = 0;
    for (auto& [name, p] : params) total += p.numel();
    long n_check = std::min<long>(total, std::max<long>(100, opts.max_coords));

    // sample distinct flat coordinates
    Rng rng(opts.seed, "grad_check");
    std::vector<long> coords;
    if (n_check >= total) {
        coords.resize(total);
        for (long i = 0; i < total; ++i) coords[i] = i;
    } else {
        std::unordered_set<long> taken;
        while (static_cast<long>(coords.size()) < n_check) {
            long c = static_cast<long>(rng.uniform_int(static_cast<uint64_t>(total)));
            if (taken.insert(c).second) coords.push_back(c);
        }
        std::sort(coords.begin(), coords.end());
    }

    GradCheckReport rep;
    rep.coords_checked = static_cast<long>(coords.size());
    for (long flat : coords) {
        // locate the owning parameter
        long off = flat;
        size_t pi = 0;
        while (off >= params[pi].second.numel()) {
            off -= params[pi].second.numel();
            ++pi;
        }
        Tensor p = params[pi].second;
        double saved = p.data()[off];
        double ad = p.grad()[off];

        p.mutable_data()[off] = saved + opts.eps;
        double fp = loss_builder().item();
        p.mutable_data()[off] = saved - opts.eps;
        double fm = loss_builder().item();
        p.mutable_data()[off] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            fail(ErrorCode::numeric,
                 "grad_check: non-finite loss at coordinate " + params[pi].first + "[" + std::to_string(off) + "]");
        double fd = (fp - fm) / (2.0 * opts.eps);
        double rel = std::abs(ad - fd) / (std::max(std::abs(ad), std::abs(fd)) + 1e-6);
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_coord = flat;
            rep.worst_param = params[pi].first;
        }
    }
    rep.pass = rep.max_rel_err <= opts.tol;
    return rep;
}

}  // namespace kgram
