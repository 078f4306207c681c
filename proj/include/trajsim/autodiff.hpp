#pragma once

// Reverse-mode differentiation over a recorded tape of matrix operations.
//
// A Graph owns the tape. Each op appends a node holding its forward value and
// a closure that pushes the node's gradient into its parents. Nodes are
// appended in topological order, so backward is a single reverse sweep.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "trajsim/param_store.hpp"
#include "trajsim/tensor.hpp"

namespace trajsim {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its Graph lives.
class Var {
public:
    Var() = default;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    [[nodiscard]] Graph& graph() const noexcept { return *graph_; }
    [[nodiscard]] std::size_t id() const noexcept { return id_; }
    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] std::size_t rows() const { return value().rows(); }
    [[nodiscard]] std::size_t cols() const { return value().cols(); }

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = delete;
    Graph& operator=(Graph&&) = delete;

    /// Leaf without gradient.
    Var constant(Tensor value);
    /// Leaf that receives a gradient (read it back with grad()).
    Var variable(Tensor value);
    /// Leaf bound to a stored parameter; the store must outlive the graph.
    Var param(const ParamStore& store, std::size_t index);
    Var param(const ParamStore& store, std::string_view name);

    [[nodiscard]] const Tensor& value(Var v) const { return value(v.id()); }
    [[nodiscard]] const Tensor& value(std::size_t id) const;
    /// Gradient of the last backward pass; zeros when the node got none.
    [[nodiscard]] Tensor grad(Var v) const;
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    /// Backward from a 1x1 node seeded with 1. Throws ShapeError otherwise.
    void backward(Var loss);
    /// Backward from any node with an explicit seed gradient.
    void backward(Var out, const Tensor& seed);

    /// Adds the gradients of all parameter leaves into `into`.
    void accumulate_param_grads(Gradients& into) const;

    // Op construction interface.
    Var push(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);
    [[nodiscard]] bool requires_grad(std::size_t id) const noexcept { return nodes_[id].requires_grad; }
    [[nodiscard]] const Tensor& grad_of(std::size_t id) const noexcept { return nodes_[id].grad; }
    /// Gradient buffer of a node, allocated as zeros on first use.
    Tensor& grad_accum(std::size_t id);

private:
    struct Node {
        Tensor value;
        const Tensor* external = nullptr;
        Tensor grad;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        bool requires_grad = false;
        std::ptrdiff_t param_index = -1;
    };

    std::deque<Node> nodes_;
};

namespace ad {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
/// Adds a 1 x m row to every row of an n x m matrix.
Var add_row(Var a, Var row);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double c);
/// Multiplies by a 1x1 node.
Var scale_by(Var a, Var s);

Var exp(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
/// Exact (erf-based) GELU.
Var gelu(Var a);

/// Row-wise softmax with max subtraction.
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Per-row normalization to zero mean and unit population variance
/// (variance floored by eps), followed by gain * x + bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

Var slice_cols(Var a, std::size_t start, std::size_t count);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

Var sum(Var a);
Var mean(Var a);
/// 1 x m mean over the rows of an n x m matrix.
Var mean_rows(Var a);

/// B x B matrix of sqrt(||h_i - h_j||^2 + eps) over the rows of h.
Var pairwise_distances(Var h, double eps);
/// n x n -> n x (n - 1): row i with column i removed.
Var off_diagonal(Var a);

/// Copy of the value as a constant leaf.
Var stop_gradient(Var a);

struct LstmWeights {
    Var w_ih;  // d_in x 4d, gate order i, f, g, o
    Var w_hh;  // d x 4d
    Var bias;  // 1 x 4d
};

struct LstmState {
    Var h;  // 1 x d
    Var c;  // 1 x d
};

/// One LSTM cell update for a 1 x d_in input row.
LstmState lstm_step(Var x_t, LstmState state, const LstmWeights& w);
/// Runs the cell over the rows of x (n x d_in) from a zero state and returns
/// the n x d stack of hidden states.
Var lstm_sequence(Var x, const LstmWeights& w);

}  // namespace ad

}  // namespace trajsim
