#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <vector>

#include "changen/core/errors.hpp"
#include "changen/core/rng.hpp"

namespace changen::nn {

using real = double;

inline size_t numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

class Node;
using Var = std::shared_ptr<Node>;

// One value in the reverse-mode graph. Gradients are accumulated into `g`
// by consumers before the node's own backward closure runs.
class Node {
public:
    std::vector<real> v;
    std::vector<real> g;
    std::vector<int> shape;
    std::vector<Var> parents;
    std::function<void()> backward_fn;
    bool requires_grad = false;
    bool is_leaf = false;

    size_t size() const { return v.size(); }

    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), real{0});
    }
};

// Global (thread-local) autograd switch. Sampling runs under NoGradGuard so
// forward passes allocate no graph.
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;

private:
    bool prev_;
};

Var constant(std::vector<int> shape, std::vector<real> data);
Var scalar(real value);
// Trainable leaf; its gradient persists after backward().
Var leaf(std::vector<int> shape, std::vector<real> data);

// Reverse sweep from a scalar root. Intermediate value/grad buffers are
// released as soon as they have been consumed to bound peak memory.
void backward(const Var& root, bool free_buffers = true);

// Init helpers.
std::vector<real> zeros(size_t n);
std::vector<real> xavier_uniform(int fan_in, int fan_out, size_t n, Rng& rng);
std::vector<real> normal_init(size_t n, real stddev, Rng& rng);

}  // namespace changen::nn
