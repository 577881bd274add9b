#pragma once
// Tape-based reverse-mode autodiff over Tensor. Covers exactly the primitive
// set the encoders and the contrastive objective are composed of: affine
// maps, strided 2-D/3-D convolutions, relu, means, log-sum-exp, row L2
// normalization. All accumulation happens in double.

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "egossl/param_store.hpp"
#include "egossl/tensor.hpp"

namespace egossl::numerics {

struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

class Graph {
  public:
    Graph() = default;
    explicit Graph(ParamStore* store) : store_(store) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Leaves.
    Var input(Tensor value);
    Var param(const std::string& name);  // bound to the store; grads flow back

    // Elementwise.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var relu(Var a);

    // Linear algebra. matmul: [m,k]x[k,n]; matmul_nt: [m,k]x[n,k]^T -> [m,n].
    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);
    Var add_rowvec(Var x, Var bias);  // [m,n] + [n]
    Var transpose(Var a);             // [m,n] -> [n,m]

    // Convolutions, valid padding. conv2d: x [B,C,H,W], w [F,C,kh,kw].
    // conv3d: x [B,C,T,H,W], w [F,C,kt,kh,kw].
    Var conv2d(Var x, Var w, Var bias, std::size_t sh, std::size_t sw);
    Var conv3d(Var x, Var w, Var bias, std::size_t st, std::size_t sh, std::size_t sw);

    // Shape and reductions.
    Var reshape(Var a, Shape s);
    Var mean_axis(Var a, std::size_t axis);  // drops the axis
    Var mean_all(Var a);                     // -> [1]
    Var sum_all(Var a);                      // -> [1]

    // Rows = leading dimension of a 2-D tensor.
    Var row_l2_normalize(Var a);
    Var logsumexp_rows(Var a);  // [m,n] -> [m], max-subtracted
    Var softmax_rows(Var a);
    Var diag_part(Var a);                              // [n,n] -> [n]
    Var gather_cols(Var x, std::vector<std::size_t> cols);  // y[i] = x[i, cols[i]]

    // Reverse sweep from a scalar loss; accumulates parameter gradients into
    // the bound store.
    void backward(Var loss);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
    double scalar_value(Var v) const;

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void()> backprop;  // empty for leaves
    };

    Var emplace(Tensor value, std::function<void()> backprop = {});
    Tensor& val(Var v) { return nodes_[v.id].value; }
    Tensor& grd(Var v) { return nodes_[v.id].grad; }

    std::vector<Node> nodes_;
    std::vector<std::pair<std::size_t, std::string>> param_leaves_;
    ParamStore* store_ = nullptr;
};

// A differentiable scalar function expressed against a graph whose parameter
// leaves are bound to a store.
using GraphFn = std::function<Var(Graph&)>;

// Builds the graph, checks the loss is a finite scalar, runs the reverse
// sweep, and adds gradients into the store (grads are zeroed first). Returns
// the loss. Parameters the function never touches keep zero gradient.
double forward_backward(const GraphFn& fn, ParamStore& params);

// Forward-only evaluation.
double forward_value(const GraphFn& fn, ParamStore& params);

// Max over all parameter entries of the relative disagreement between the
// analytic gradient and a central finite difference with the given step.
double fd_check(const GraphFn& fn, ParamStore& params, double step);

}  // namespace egossl::numerics
