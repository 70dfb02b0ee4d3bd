#pragma once

#include "moda/kernels.hpp"
#include "moda/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

// Tape-free reverse-mode differentiation. Each operation returns a Var whose
// node remembers its inputs and a closure that pushes the output gradient
// back to them. Nodes whose inputs need no gradient carry no closure, so
// inference builds no graph.
namespace moda::ad {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    Tensor& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Var constant(Tensor value);
    static Var parameter(Tensor value);

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& grad_buffer() { return node_->grad_buffer(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
    std::size_t size() const { return node_->value.size(); }
    bool defined() const { return static_cast<bool>(node_); }
    const std::shared_ptr<Node>& node() const { return node_; }

    // Scalar value of a one-element Var.
    double item() const { return node_->value[0]; }

private:
    std::shared_ptr<Node> node_;
};

// Seeds d(root)/d(root) = 1 and propagates to every reachable node.
void backward(const Var& root);
void zero_grad(const std::vector<Var>& params);

// --- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double value);
Var square(const Var& a);
Var abs(const Var& a);
Var exp(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.2);
Var gelu(const Var& a);
// Gradient is zero where the input lies outside [lo, hi].
Var clamp(const Var& a, double lo, double hi);
Var detach(const Var& a);
Var reshape(const Var& a, Shape shape);

// --- reductions ------------------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
// mean |a - b| over all elements.
Var mean_abs_diff(const Var& a, const Var& b);
Var mean_square(const Var& a);

// --- matrices [rows x cols] --------------------------------------------------
Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);
// Adds the length-cols vector b to every row of a.
Var add_row_vector(const Var& a, const Var& b);
Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& a, std::size_t start, std::size_t count);
// [1 x cols] mean over rows.
Var mean_rows(const Var& a);
// Tiles a [1 x cols] (or [cols]) vector into [rows x cols].
Var broadcast_rows(const Var& v, std::size_t rows);
// Row-wise softmax(scores + bias); bias is a constant that may hold -inf.
Var softmax_rows(const Var& scores, const Tensor& bias);
Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);

// --- images [N x C x H x W] ---------------------------------------------------
Var conv2d(const Var& input, const Var& weight, const Var& bias, std::size_t stride, std::size_t pad);
Var upsample2x(const Var& input);
Var avg_pool2x(const Var& input);
Var concat_channels(const Var& a, const Var& b);

}  // namespace moda::ad
