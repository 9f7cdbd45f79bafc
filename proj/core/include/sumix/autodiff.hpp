#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sumix/tensor.hpp"

namespace sumix::ad {

// Define-by-run reverse-mode tape. Every op creates a Node holding the
// result value; nodes of one forward pass form a DAG whose creation order
// (seq) is already a topological order, so backward() just walks the
// reachable set by descending seq. Leaves created with requires_grad keep
// their grad tensor across graphs (parameters accumulate until zeroed).
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    Tensor& ensure_grad();
};

class Value {
public:
    Value() = default;

    static Value leaf(Tensor v, bool requires_grad = false);

    const Tensor& val() const { return node_->value; }
    Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    bool defined() const { return node_ != nullptr; }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    // Same value, cut off from the graph.
    Value detach() const { return leaf(node_->value, false); }
    void zero_grad() const { node_->grad = Tensor(); }

    std::shared_ptr<Node>& node() { return node_; }
    const std::shared_ptr<Node>& node() const { return node_; }

    static Value wrap(std::shared_ptr<Node> n);

private:
    std::shared_ptr<Node> node_;
};

// While alive, ops compute values only; no graph is recorded.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// Elementwise; operands must agree in shape.
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double s);
Value neg(const Value& a);
Value exp(const Value& a);
Value relu(const Value& a);

Value reshape(const Value& a, std::vector<long> shape);

// (N,I) x (O,I) + (O,) -> (N,O)
Value affine(const Value& x, const Value& w, const Value& b);

// Row-wise softmax / L2 norm over the last axis of a (N,D) matrix.
Value softmax_rows(const Value& x);
Value l2_norm_rows(const Value& x);

// (N,K) scaled per row by s (N,)
Value mul_rows(const Value& x, const Value& s);

// Per-row cross entropy of logits (N,K) against integer labels; stable
// log-sum-exp. Returns (N,).
Value ce_rows(const Value& logits, const std::vector<int>& labels);

Value sum_all(const Value& x);
Value mean_all(const Value& x);

// 3x3 convolution, zero padding 1, given stride. x (N,C,H,W), w (O,C,3,3),
// b (O,).
Value conv2d(const Value& x, const Value& w, const Value& b, int stride);

// (N,C,H,W) -> (N,C)
Value global_avg_pool(const Value& x);

enum class BnMode {
    train,        // batch statistics, running averages updated
    eval,         // running averages
    frozen_stats  // batch statistics, running averages untouched
};

// Per-channel batch normalization of (N,C,H,W). running_mean/var are the
// layer's persistent buffers.
Value batchnorm(const Value& x, const Value& gamma, const Value& beta, Tensor& running_mean,
                Tensor& running_var, BnMode mode, double eps = 1e-5, double momentum = 0.1);

// Reverse pass from a scalar root. Throws InvalidParameter when the root
// does not depend on any differentiable leaf.
void backward(const Value& root);

}  // namespace sumix::ad
