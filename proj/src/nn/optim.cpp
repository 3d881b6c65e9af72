#include "changen/nn/optim.hpp"

#include <cmath>

namespace changen::nn {

Adam::Adam(std::vector<Var> params, real lr_in, real beta1, real beta2, real eps)
    : lr(lr_in), params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i]->size(), real{0});
        v_[i].assign(params_[i]->size(), real{0});
    }
}

void Adam::zero_grad() {
    for (Var& p : params_) {
        p->ensure_grad();
        std::fill(p->g.begin(), p->g.end(), real{0});
    }
}

void Adam::step() {
    ++t_;
    real bc1 = real{1} - std::pow(beta1_, static_cast<real>(t_));
    real bc2 = real{1} - std::pow(beta2_, static_cast<real>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Var& p = params_[i];
        if (p->g.size() != p->v.size()) continue;  // never touched this step
        for (size_t k = 0; k < p->v.size(); ++k) {
            real g = p->g[k];
            m_[i][k] = beta1_ * m_[i][k] + (real{1} - beta1_) * g;
            v_[i][k] = beta2_ * v_[i][k] + (real{1} - beta2_) * g * g;
            real mhat = m_[i][k] / bc1;
            real vhat = v_[i][k] / bc2;
            p->v[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace changen::nn
