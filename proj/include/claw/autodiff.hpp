#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "claw/tensor.hpp"

namespace claw {

template <typename T>
struct Node;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

/// One value in the computation graph. Leaves are inputs or parameters;
/// interior nodes carry a closure that pushes this node's gradient into its
/// parents. Graphs are acyclic; parents are held by strong reference, so a
/// graph lives exactly as long as its final node.
template <typename T>
struct Node {
    Tensor4<T> value;
    Tensor4<T> grad;  // allocated lazily on first accumulation
    bool requires_grad = false;
    std::vector<NodePtr<T>> parents;
    std::function<void(Node<T>&)> backward_fn;

    void accumulate(const Tensor4<T>& g) {
        if (grad.empty()) {
            grad = zeros_like(value);
        }
        for (std::size_t i = 0; i < grad.data.size(); ++i) {
            grad.data[i] += g.data[i];
        }
    }

    Tensor4<T>& ensure_grad() {
        if (grad.empty()) {
            grad = zeros_like(value);
        }
        return grad;
    }
};

namespace autodiff_detail {
inline thread_local int no_grad_depth = 0;
}

inline bool grad_enabled() { return autodiff_detail::no_grad_depth == 0; }

/// RAII guard: ops executed inside do not record the graph.
struct NoGradGuard {
    NoGradGuard() { ++autodiff_detail::no_grad_depth; }
    ~NoGradGuard() { --autodiff_detail::no_grad_depth; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
NodePtr<T> make_leaf(Tensor4<T> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

/// Wraps an op result. When gradients are off or no parent needs them, the
/// result is a detached leaf and the closure is dropped.
template <typename T>
NodePtr<T> make_node(Tensor4<T> value, std::vector<NodePtr<T>> parents,
                     std::function<void(Node<T>&)> backward_fn) {
    bool track = grad_enabled();
    if (track) {
        track = false;
        for (const auto& p : parents) {
            if (p && p->requires_grad) {
                track = true;
                break;
            }
        }
    }
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    if (track) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

/// Reverse-mode sweep from a scalar node. Seeds d(loss)/d(loss) = 1, then runs
/// every backward closure in reverse topological order. Interior gradients are
/// released as soon as they have been consumed.
template <typename T>
void backward(const NodePtr<T>& loss) {
    if (!loss || !loss->requires_grad) {
        throw std::invalid_argument("backward: node does not require gradients");
    }
    if (loss->value.size() != 1) {
        throw std::invalid_argument("backward: loss must be a scalar node");
    }

    std::vector<Node<T>*> topo;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next].get();
            ++next;
            if (parent && parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad.data[0] = T(1);
    // topo is in child-after-parent order from the DFS post-order; iterate in
    // reverse-topological (child first) order.
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward_fn) {
            if (!node->grad.empty()) {
                node->backward_fn(*node);
            }
            node->grad = Tensor4<T>();
            node->backward_fn = nullptr;
        }
    }
}

}  // namespace claw
