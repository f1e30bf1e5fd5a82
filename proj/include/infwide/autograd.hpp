#pragma once

#include "infwide/tensor.hpp"

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace infwide {

namespace detail {
inline bool& grad_enabled_flag()
{
    thread_local bool enabled = true;
    return enabled;
}
} // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
    ~NoGradGuard() { detail::grad_enabled_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

template <typename Scalar>
struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad; // empty until something flows into it
    bool requires_grad = false;
    bool is_leaf = true;
    bool consumed = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    /// Propagates this node's grad into its inputs.
    std::function<void(Node&)> adjoint;

    Tensor<Scalar>& grad_buffer()
    {
        if (grad.empty() && value.size() > 0) grad = Tensor<Scalar>(value.shape());
        return grad;
    }
};

/// Handle to a value that may participate in reverse-mode differentiation.
template <typename Scalar>
class Var {
public:
    using NodePtr = std::shared_ptr<Node<Scalar>>;

    Var() = default;
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    static Var constant(Tensor<Scalar> value)
    {
        auto n = std::make_shared<Node<Scalar>>();
        n->value = std::move(value);
        return Var(std::move(n));
    }
    static Var parameter(Tensor<Scalar> value)
    {
        auto n = std::make_shared<Node<Scalar>>();
        n->value = std::move(value);
        n->requires_grad = true;
        return Var(std::move(n));
    }

    [[nodiscard]] bool defined() const { return node_ != nullptr; }
    [[nodiscard]] const Tensor<Scalar>& value() const { return node_->value; }
    Tensor<Scalar>& mutable_value() { return node_->value; }
    [[nodiscard]] const Tensor<Scalar>& grad() const { return node_->grad; }
    Tensor<Scalar>& mutable_grad() { return node_->grad_buffer(); }
    [[nodiscard]] bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad = Tensor<Scalar>(); }
    [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
    [[nodiscard]] Index dim(Index i) const { return node_->value.dim(i); }
    [[nodiscard]] Index size() const { return node_->value.size(); }
    [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
    [[nodiscard]] bool is_leaf() const { return node_->is_leaf; }
    [[nodiscard]] const NodePtr& node() const { return node_; }
    [[nodiscard]] Scalar item() const
    {
        if (size() != 1) throw ContractError("item() on tensor of shape " + shape().str());
        return value()[0];
    }

private:
    NodePtr node_;
};

/// Creates the output node of an operation. When any input requires a gradient and
/// recording is enabled, the adjoint is attached and the inputs are retained.
template <typename Scalar>
Var<Scalar> record(const char* op, Tensor<Scalar> value, std::vector<Var<Scalar>> inputs,
                   std::function<void(Node<Scalar>&)> adjoint)
{
#ifndef NDEBUG
    if (!value.all_finite()) {
        bool inputs_finite = true;
        for (const auto& in : inputs) inputs_finite = inputs_finite && in.value().all_finite();
        if (inputs_finite) throw ContractError(std::string("non-finite output from ") + op);
    }
#endif
    auto n = std::make_shared<Node<Scalar>>();
    n->value = std::move(value);
    n->op = op;
    n->is_leaf = false;
    bool needs = false;
    if (grad_enabled())
        for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
        n->requires_grad = true;
        n->inputs.reserve(inputs.size());
        for (auto& in : inputs) n->inputs.push_back(in.node());
        n->adjoint = std::move(adjoint);
    }
    return Var<Scalar>(std::move(n));
}

/// Nodes reachable from a root, in an order where every node's inputs precede it.
template <typename Scalar>
class Tape {
public:
    using NodePtr = std::shared_ptr<Node<Scalar>>;

    explicit Tape(const Var<Scalar>& root)
    {
        std::unordered_set<const Node<Scalar>*> visited;
        std::vector<std::pair<NodePtr, std::size_t>> stack;
        stack.emplace_back(root.node(), 0);
        visited.insert(root.node().get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->inputs.size()) {
                NodePtr child = node->inputs[next++];
                if (child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(child, 0);
            } else {
                nodes_.push_back(node);
                stack.pop_back();
            }
        }
    }

    [[nodiscard]] const std::vector<NodePtr>& nodes() const { return nodes_; }

    /// Runs the adjoints in reverse order. Intermediate grads and saved inputs are released.
    void run()
    {
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node<Scalar>& n = **it;
            if (n.is_leaf) continue;
            if (!n.grad.empty() && n.adjoint) n.adjoint(n);
            n.grad = Tensor<Scalar>();
            n.adjoint = nullptr;
            n.inputs.clear();
        }
    }

private:
    std::vector<NodePtr> nodes_;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a gradient.
template <typename Scalar>
void backward(const Var<Scalar>& loss)
{
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward requires a scalar loss, got shape " +
                            (loss.defined() ? loss.shape().str() : std::string("<undefined>")));
    auto& root = *loss.node();
    if (root.consumed) throw ContractError("backward called twice on the same graph");
    if (!root.requires_grad) throw ContractError("loss does not depend on any parameter");
    root.consumed = true;
    Tape<Scalar> tape(loss);
    root.grad_buffer().array().setOnes();
    if (root.is_leaf) return;
    tape.run();
}

} // namespace infwide
