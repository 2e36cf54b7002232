#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "pae/tensor.hpp"

namespace pae {

class Tape;

// Handle into a tape; cheap to copy.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& val() const;
    const Tensor& grad() const;
};

// Define-by-run reverse-mode tape. Rebuilt per training step; backward walks
// nodes in reverse creation order, so topological order holds by construction.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool needs_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);  // a · bᵀ
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var add_rowvec(Var mat, Var row);  // broadcast row over every matrix row
    Var scale(Var a, double c);
    Var hadamard(Var a, Var b);
    Var relu(Var a);  // subgradient 0 at x = 0
    Var gelu(Var a);
    Var row_softmax(Var a);
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_rows(Var a, std::size_t r0, std::size_t r1);
    Var slice_cols(Var a, std::size_t c0, std::size_t c1);
    Var frobenius_sq(Var a);
    Var sum_all(Var a);
    // Mean cross-entropy of row-wise logits against integer labels.
    Var cross_entropy_logits(Var logits, const std::vector<std::size_t>& labels);

    // Seeds d(root)=1 and propagates to every leaf marked needs_grad.
    void backward(Var root);

    const Tensor& value(int id) const { return nodes_[id].value; }
    const Tensor& grad(int id);  // zero-allocates for leaves never reached
    bool needs_grad(int id) const { return nodes_[id].needs_grad; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated on demand in backward()
        bool needs_grad = false;
        std::function<void(Tape&)> back;  // accumulates into parents' grads
    };

    Var push(Tensor value, bool needs_grad, std::function<void(Tape&)> back);
    Tensor& grad_mut(int id);
    void check(Var v) const;

    std::vector<Node> nodes_;
};

// Central differences (f(θ+h·e) − f(θ−h·e)) / 2h with h = h0·(1+|θ_coord|).
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& theta,
                        double h0 = 1e-6);

// max relative error: |a−b| / max(1e-12, |a|, |b|) over all coordinates.
double max_rel_err(const Tensor& a, const Tensor& b);

}  // namespace pae
