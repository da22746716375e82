#include "artadapter/autograd.hpp"

#include <unordered_set>

namespace artadapter {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::ensure_grad() {
    if (grad.empty() && value.numel() > 0) grad = Tensor(value.shape());
    return grad;
}

void Node::zero_grad() {
    if (!grad.empty()) grad.fill(0.0);
}

Var make_leaf(Tensor value, bool requires_grad, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    return n;
}

Var make_constant(Tensor value) { return make_leaf(std::move(value), false); }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

namespace detail {

bool track(const std::vector<Var>& inputs) {
    if (!g_grad_enabled) return false;
    for (const auto& v : inputs)
        if (v && v->requires_grad) return true;
    return false;
}

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (track(parents)) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

}  // namespace detail

void backward(const Var& root) {
    if (!root) throw ArgumentError("backward: null root");
    if (root->value.numel() != 1) throw ShapeError("backward: root must be scalar");
    if (!root->requires_grad) return;

    // Iterative post-order DFS; parents are visited in declaration order so
    // the resulting schedule is deterministic.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node* p = f.node->parents[f.next_parent++].get();
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad.fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

}  // namespace artadapter
