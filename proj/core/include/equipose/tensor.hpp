#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "equipose/errors.hpp"

namespace equipose::mt {

// Dense row-major tensor with reverse-mode autodiff.
//
// Storage is 32-bit; reductions (sum/mean/softmax normalization, losses)
// accumulate in 64-bit. Scalar results keep a 64-bit shadow of their value so
// finite-difference checks are not limited by storage precision.
//
// Primitive catalog (each differentiable, anything else composes from them):
//   add, sub, mul (elementwise, identical shapes), scale (by a scalar),
//   relu, matmul (batched over leading axes; a rank-2 operand broadcasts),
//   softmax / mean / sum over a named axis, concat over a named axis,
//   gather_rows (index-gather along the first axis), transpose_last2,
//   mse_loss, cross_entropy_loss (logits + integer targets),
//   weighted_mse_loss (per-row weights).
// reshape is a layout utility (axis bookkeeping only, identity gradient),
// not an arithmetic primitive.

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);

struct Node;

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, float value);
    static Tensor from_data(Shape shape, std::vector<float> data);
    // Leaf with requires_grad set; the unit the optimizer updates.
    static Tensor param(Shape shape, std::vector<float> data);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int rank() const { return static_cast<int>(shape().size()); }
    int64_t numel() const;
    int64_t dim(int axis) const;

    const std::vector<float>& data() const;
    std::vector<float>& mutable_data();  // leaf mutation (optimizer, FD probes)
    bool requires_grad() const;
    bool has_grad() const;
    const std::vector<float>& grad() const;
    void zero_grad();

    // Scalar value; uses the 64-bit shadow when one exists.
    double item() const;

    std::shared_ptr<Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<Node> node_;
};

// -- autodiff graph -------------------------------------------------------------

// Reverse-topological record of one forward pass, rooted at a scalar loss.
// A graph is consumed by run_backward; reuse throws.
class Graph {
public:
    static Graph trace(const Tensor& loss);
    // Populates grad buffers of every requires_grad tensor reachable from the
    // loss. Deterministic given identical inputs and graph.
    void run_backward(const Tensor& loss);
    size_t size() const { return order_.size(); }

private:
    std::vector<std::shared_ptr<Node>> order_;
    bool consumed_ = false;
};

// trace + run_backward in one call.
void backward(const Tensor& loss);

// While alive, ops do not record inputs or backward closures; intermediates
// free as soon as they go out of scope. Nestable.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// -- primitive catalog ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);

// [batch..., m, k] @ [batch..., k, n] -> [batch..., m, n]. A rank-2 operand
// broadcasts across the other operand's batch axes.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& a, int axis);
Tensor mean(const Tensor& a, int axis);
Tensor sum(const Tensor& a, int axis);
Tensor concat(const std::vector<Tensor>& parts, int axis);

// out[i, ...] = a[indices[i], ...]; gradient scatter-adds into a.
Tensor gather_rows(const Tensor& a, std::vector<int64_t> indices);

Tensor transpose_last2(const Tensor& a);

// mean over all entries of (pred - target)^2.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// logits [n, classes], targets[i] in [0, classes). Mean over rows of
// -log softmax(logits)[i, targets[i]].
Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int64_t>& targets);

// mean over all entries of row_weights[r] * (pred - target)^2, where r
// indexes the first axis. row_weights has shape [pred.dim(0)].
Tensor weighted_mse_loss(const Tensor& pred, const Tensor& target, const Tensor& row_weights);

// Layout utility: same numel, data copied, gradient reshaped back.
Tensor reshape(const Tensor& a, Shape shape);

}  // namespace equipose::mt
