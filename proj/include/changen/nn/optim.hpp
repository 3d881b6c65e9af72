#pragma once

#include "changen/nn/tensor.hpp"

namespace changen::nn {

class Adam {
public:
    explicit Adam(std::vector<Var> params, real lr = 1e-4, real beta1 = 0.9,
                  real beta2 = 0.999, real eps = 1e-8);

    void zero_grad();
    void step();

    real lr;

private:
    std::vector<Var> params_;
    std::vector<std::vector<real>> m_, v_;
    real beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace changen::nn
