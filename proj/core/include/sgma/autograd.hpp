#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sgma/tensor.hpp"

namespace sgma {

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily by ensure_grad()
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this->grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad();
};

/// Handle to a value in the computation graph. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }

    /// Gradient accumulated by backward(); zeros if nothing reached this node.
    const Tensor& grad() const;
    void zero_grad();

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& shared() const { return node_; }

    /// Result node of an op. When no input requires a gradient (or grad mode
    /// is off) the inputs and backward function are dropped immediately.
    static Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

private:
    std::shared_ptr<Node> node_;
};

/// Back-propagates from a scalar (one-element) output with seed gradient 1.
void backward(const Var& root);

bool grad_enabled();

/// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace sgma
