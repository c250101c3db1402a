// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace bwarea {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

class DimensionError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

/// Counters for the autograd engine, used by tests to check that backward
/// visits every tape node exactly once.
struct AutogradStats {
    std::size_t backward_calls = 0;
    std::size_t nodes_visited = 0;
};

inline AutogradStats& autograd_stats() {
    thread_local AutogradStats stats;
    return stats;
}

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

/// Disables tape recording for its lifetime.
class NoGradGuard {
   public:
    NoGradGuard() : previous_(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

/// Shared handle to a node of the autograd tape. Copies alias the same
/// storage; use clone() for an independent copy.
template <typename T>
class Tensor {
   public:
    using Node = TensorNode<T>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto node = std::make_shared<Node>();
        node->value.assign(shape_size(shape), T(0));
        node->shape = std::move(shape);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
        if (values.size() != shape_size(shape))
            throw DimensionError("tensor values (" + std::to_string(values.size()) +
                                 ") do not match shape " + shape_str(shape));
        auto node = std::make_shared<Node>();
        node->shape = std::move(shape);
        node->value = std::move(values);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor scalar(T v, bool requires_grad = false) { return from({1, 1}, {v}, requires_grad); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    std::size_t rows() const { return node_->shape.at(0); }
    std::size_t cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }

    std::span<T> values() { return node_->value; }
    std::span<const T> values() const { return node_->value; }
    T* data() { return node_->value.data(); }
    const T* data() const { return node_->value.data(); }
    T& at(std::size_t r, std::size_t c) { return node_->value[r * cols() + c]; }
    T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
    T item() const {
        if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
        return node_->value[0];
    }

    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    std::span<T> grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    std::span<const T> grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.clear(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }
    const char* op() const { return node_->op; }

    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

    /// Deep copy of shape and values; the copy is a fresh leaf.
    Tensor clone() const { return from(shape(), node_->value, node_->requires_grad); }

   private:
    std::shared_ptr<Node> node_;
};

/// Builds the result node of an operation. The backward closure is attached
/// only when grad mode is on and at least one input requires a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const char* op,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(TensorNode<T>&)> backward) {
    auto node = std::make_shared<TensorNode<T>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    bool needs = false;
    if (grad_enabled()) {
        for (const Tensor<T>* in : inputs) needs = needs || in->requires_grad();
    }
    if (needs) {
        node->requires_grad = true;
        for (const Tensor<T>* in : inputs) node->parents.push_back(in->node_ptr());
        node->backward = std::move(backward);
    }
    return Tensor<T>(std::move(node));
}

/// Reverse-mode sweep from a scalar loss. Each reachable interior node runs
/// its backward closure once, in reverse topological order.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) throw DimensionError("backward() requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    using Node = TensorNode<T>;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(&loss.node(), 0);
    seen.insert(&loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    auto& stats = autograd_stats();
    loss.node().ensure_grad();
    loss.node().grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        ++stats.nodes_visited;
        if (!node->backward) continue;
        for (auto& p : node->parents)
            if (p->requires_grad) p->ensure_grad();
        node->backward(*node);
        ++stats.backward_calls;
    }
}

template <typename T>
bool all_finite(std::span<const T> xs) {
    for (T x : xs)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace bwarea
