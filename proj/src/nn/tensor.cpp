#include "changen/nn/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace changen::nn {

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

Var constant(std::vector<int> shape, std::vector<real> data) {
    if (numel(shape) != data.size()) throw DimensionError("constant: shape/data mismatch");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->v = std::move(data);
    return n;
}

Var scalar(real value) { return constant({1}, {value}); }

Var leaf(std::vector<int> shape, std::vector<real> data) {
    Var n = constant(std::move(shape), std::move(data));
    n->requires_grad = true;
    n->is_leaf = true;
    return n;
}

void backward(const Var& root, bool free_buffers) {
    if (!root || root->size() != 1) throw DimensionError("backward: root must be scalar");
    if (!root->requires_grad) throw ParameterError("backward: root does not require grad");

    // Iterative post-order DFS over grad-requiring nodes. The order vector
    // holds shared_ptrs so freeing parent edges cannot destroy pending nodes.
    std::vector<Var> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Var, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Var parent = node->parents[idx++];
            if (parent->requires_grad && !visited.count(parent.get())) {
                visited.insert(parent.get());
                stack.emplace_back(std::move(parent), 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->g[0] = real{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = it->get();
        if (n->backward_fn) n->backward_fn();
        if (free_buffers && !n->is_leaf) {
            n->g = {};
            if (n != root.get()) n->v = {};
            n->backward_fn = nullptr;
            n->parents.clear();
        }
    }
}

std::vector<real> zeros(size_t n) { return std::vector<real>(n, real{0}); }

std::vector<real> xavier_uniform(int fan_in, int fan_out, size_t n, Rng& rng) {
    real limit = std::sqrt(real{6} / (fan_in + fan_out));
    std::vector<real> v(n);
    for (auto& x : v) x = rng.uniform(-limit, limit);
    return v;
}

std::vector<real> normal_init(size_t n, real stddev, Rng& rng) {
    std::vector<real> v(n);
    for (auto& x : v) x = stddev * rng.normal();
    return v;
}

}  // namespace changen::nn
