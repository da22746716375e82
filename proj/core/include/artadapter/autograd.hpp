#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "artadapter/tensor.hpp"

namespace artadapter {

class Node;
using Var = std::shared_ptr<Node>;

// One value in a define-by-run reverse-mode graph. Ops allocate a Node per
// result; backward closures add into parent grads in a fixed order, so a
// whole backward sweep is deterministic.
class Node {
public:
    Tensor value;
    Tensor grad;  // allocated on demand, same shape as value
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;  // may be empty for leaves
    std::string name;                        // set for parameters only

    Tensor& ensure_grad();
    void zero_grad();
};

Var make_leaf(Tensor value, bool requires_grad = false, std::string name = {});
Var make_constant(Tensor value);

// Seeds root with d(root)/d(root) = 1 (root must be scalar) and runs the
// reverse sweep in topological order.
void backward(const Var& root);

// While a guard is alive, ops compute values but record no graph.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

namespace detail {
// True if the op should record a backward edge for this input set.
bool track(const std::vector<Var>& inputs);
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);
}  // namespace detail

}  // namespace artadapter
