#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "factost/mat.hpp"
#include "factost/rng.hpp"

namespace factost::ag {

// Handle into a Tape. Cheap to copy; valid until the owning tape is reset.
struct Var {
    int id = -1;
    int rows = 0;
    int cols = 0;
};

// Partial rotary embedding spec, applied per head to the first r_dim
// dimensions (the highest-frequency pairs). theta_i = base^(-2i/d_head).
struct RopeSpec {
    int n_heads = 1;
    int d_head = 0;
    int r_dim = 0;  // even, number of rotated dims per head
    double base = 10000.0;
};

// Reverse-mode tape over dense matrices. Build a graph with the op methods,
// call backward() on a scalar, then read parameter gradients.
class Tape {
public:
    explicit Tape(bool with_grad = true) : with_grad_(with_grad) {}

    // Leaves.
    Var input(Mat m);
    Var param(const Mat& values, int slot);  // dedupes by slot
    Var zeros(int r, int c);

    // Linear algebra.
    Var matmul(Var a, Var b);     // A B
    Var matmul_nt(Var a, Var b);  // A B^T
    Var add(Var a, Var b);        // same shape
    Var sub(Var a, Var b);
    Var add_rowvec(Var a, Var bias);  // bias is 1 x cols, broadcast over rows
    Var mul(Var a, Var b);            // elementwise
    Var scale(Var a, double s);

    // Nonlinearities.
    Var row_softmax(Var a);
    Var sigmoid(Var a);
    Var gelu(Var a);  // exact erf form
    Var layer_norm(Var x, Var gain, Var bias, double eps);

    // Position encoding: rows of x rotated by their position; position -1
    // leaves the row untouched (used for prompt tokens).
    Var rope(Var x, std::vector<int> positions, const RopeSpec& spec);

    // Shape plumbing.
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var reshape(Var a, int r, int c);  // row-major reinterpretation
    Var slice_rows(Var a, int r0, int n);
    Var slice_cols(Var a, int c0, int n);
    Var gather_rows(Var table, std::vector<int> idx);  // backward scatter-adds

    // Reductions / broadcasts.
    Var row_sum(Var a);         // m x n -> m x 1
    Var col_mul(Var a, Var s);  // a (m x n) scaled per row by s (m x 1)
    Var mean_all(Var a);        // -> 1 x 1

    Var dropout(Var a, double rate, Rng& rng);

    // Losses (targets are constants).
    Var pinball_loss(Var pred, const Mat& target, const std::vector<double>& quantiles);
    Var l1_loss(Var pred, const Mat& target);

    const Mat& value(Var v) const { return nodes_[v.id].val; }
    // Gradient of a node after backward(); null when grads were not requested.
    const Mat* grad_of(Var v) const;

    void backward(Var loss);

    // Adds every parameter gradient into sink[slot]; sink entries must be
    // pre-shaped or empty (empty entries are shaped on first touch).
    void accumulate_param_grads(std::vector<Mat>& sink) const;

    // Allocation accounting for the scaling probe.
    size_t peak_node_bytes() const { return peak_bytes_; }
    size_t total_node_bytes() const { return total_bytes_; }
    int node_count() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Mat val;
        Mat grad;
    };

    Var make(Mat val);
    Mat& g(int id) { return nodes_[id].grad; }

    bool with_grad_;
    bool ran_backward_ = false;
    std::vector<Node> nodes_;
    std::vector<std::function<void()>> backs_;
    std::unordered_map<int, int> param_by_slot_;
    std::vector<std::pair<int, int>> params_;  // (slot, node id)
    size_t peak_bytes_ = 0;
    size_t total_bytes_ = 0;
};

}  // namespace factost::ag
