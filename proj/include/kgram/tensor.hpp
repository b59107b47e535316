#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "kgram/error.hpp"

namespace kgram {

// Dense 64-bit float array (rank 1 or 2) with reverse-mode autodiff.
//
// Tensor is a cheap handle onto a shared node. Ops record parents and a
// backward closure on a dynamically built graph whenever an input has
// requires_grad set; Tensor::backward() on a scalar walks the graph in
// reverse topological order and accumulates grads into the leaves.
//
// Data is immutable once a tensor has been consumed by an op; the only
// sanctioned mutation points are leaf initialization and optimizer updates
// between graphs.
class Tensor {
public:
    struct Node;

    Tensor() = default;
    Tensor(std::vector<long> shape, bool requires_grad = false);
    static Tensor zeros(std::vector<long> shape, bool requires_grad = false);
    static Tensor from_data(std::vector<long> shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    const std::vector<long>& shape() const;
    long rank() const;
    long rows() const;  // rank-1 tensors count as a single row
    long cols() const;
    long numel() const;
    std::string shape_str() const;

    const std::vector<double>& data() const;
    std::vector<double>& mutable_data();  // leaves only (init / optimizer step)
    const std::vector<double>& grad() const;
    bool requires_grad() const;

    double item() const;  // requires numel() == 1

    // Backward from a scalar root. Accumulates into .grad() of every
    // reachable tensor with requires_grad.
    void backward() const;
    void zero_grad() const;

    // Internal: graph plumbing used by ops.
    Node* node() const { return node_.get(); }
    std::shared_ptr<Node> shared_node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

struct Tensor::Node {
    std::vector<long> shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized lazily
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backfn;  // pushes this->grad into parents

    long numel() const { return static_cast<long>(data.size()); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

namespace ops {

// c = a @ b for a[m x k], b[k x n]. Dimension mismatch raises an error
// naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
// c = a @ b^T for a[m x k], b[n x k]. Used for weight matrices stored row-major.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// mat[r x d] + row broadcast over rows.
Tensor add_rowvec(const Tensor& mat, const Tensor& row);

Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);  // scalar

// Row-wise softmax. With causal set, requires a square matrix and masks
// entries j > i to exactly 0. Rows are stabilized by max subtraction.
// A row whose unmasked entries are all -inf is an error.
Tensor row_softmax(const Tensor& a, bool causal);

// Rank-1 layer norms per the architecture definitions.
Tensor layernorm_standard(const Tensor& v);  // (v - mean) / population std
Tensor layernorm_l2(const Tensor& v);        // v / ||v||_2

// Row-wise standard layer norm with trainable gain/shift (both length d).
Tensor layernorm_rows(const Tensor& x, const Tensor& gain, const Tensor& shift);
// Row-wise standard layer norm with a fixed scalar gain and no shift.
// With gain = sqrt(2/d) this computes w/||w|| on each half of a mirrored
// row [w | -w], which is how the L2 layer-norm mode is realized.
Tensor layernorm_rows_fixed(const Tensor& x, double gain);

// out[t] = table[idx[t]] for an embedding table[v x d].
Tensor gather_rows(const Tensor& table, const std::vector<int>& idx);

// Mean of -log probs[n-1][targets[n-1]] over 1-based n in [start, end]
// (end defaults to targets.size()). Zero probability at a target is an
// error naming the position.
Tensor cross_entropy_mean(const Tensor& probs, const std::vector<int>& targets, int start, int end = -1);

// Relative-position helpers for decoder attention with offset tables
// indexed by n - i in [0, T_max).
//
// rel_score: out[n, i] = <q[n], pk[n-i]> for i <= n, 0 above the diagonal.
Tensor rel_score(const Tensor& q, const Tensor& pk);
// rel_value: out[n] = sum_{i<=n} att[n, i] * pv[n-i].
Tensor rel_value(const Tensor& att, const Tensor& pv);

}  // namespace ops

struct GradCheckReport {
    double max_rel_err = 0.0;
    long worst_coord = -1;     // flat index into the concatenated parameters
    std::string worst_param;
    long coords_checked = 0;
    bool pass = false;
};

struct GradCheckOptions {
    double eps = 1e-5;
    double tol = 1e-4;
    long max_coords = 120;  // random subsample size (>= 100 per contract)
    uint64_t seed = 0;
};

// Central-difference check of reverse-mode gradients.
//
// loss_builder must rebuild the graph from the current parameter values.
// The parameters are perturbed in place (+/- eps) and restored. Relative
// error uses |ad - fd| / (max(|ad|, |fd|) + 1e-6) so coordinates with
// near-zero gradients do not amplify finite-difference noise.
GradCheckReport grad_check(const std::vector<std::pair<std::string, Tensor>>& params,
                           const std::function<Tensor()>& loss_builder,
                           const GradCheckOptions& opts = {});

}  // namespace kgram
