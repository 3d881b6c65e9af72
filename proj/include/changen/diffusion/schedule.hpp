#pragma once

#include <string>
#include <vector>

#include "changen/core/errors.hpp"
#include "changen/core/rng.hpp"

namespace changen::diffusion {

struct ScheduleConfig {
    std::string kind = "linear";
    int num_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
};

// Forward-process tables. Steps are 1-indexed: beta(i) is defined for
// i in [1, N], alpha_bar(i) for i in [0, N] with alpha_bar(0) == 1 so that
// step 0 means clean data.
class NoiseSchedule {
public:
    explicit NoiseSchedule(const ScheduleConfig& cfg);
    static NoiseSchedule linear(int num_steps, double beta_start = 1e-4, double beta_end = 2e-2);

    int num_steps() const { return cfg_.num_steps; }
    const ScheduleConfig& config() const { return cfg_; }

    double beta(int i) const { check_step(i); return betas_[i - 1]; }
    double alpha(int i) const { check_step(i); return 1.0 - betas_[i - 1]; }
    double alpha_bar(int i) const {
        if (i < 0 || i > cfg_.num_steps) throw ParameterError("schedule: step out of range");
        return alpha_bars_[i];
    }

    // Variance of q(x^(i-1) | x^(i), x^(0)).
    double posterior_variance(int i) const;
    double posterior_log_variance(int i) const;
    // mean = coef0 * x0 + coef1 * x_i
    double posterior_mean_coef0(int i) const;
    double posterior_mean_coef1(int i) const;

private:
    void check_step(int i) const {
        if (i < 1 || i > cfg_.num_steps) throw ParameterError("schedule: step out of range");
    }
    ScheduleConfig cfg_;
    std::vector<double> betas_;       // [i-1] for i in 1..N
    std::vector<double> alpha_bars_;  // [i] for i in 0..N
};

using Tensor = std::vector<double>;

// x^(i) = sqrt(abar_i) x0 + sqrt(1 - abar_i) noise
Tensor perturb(const Tensor& x0, int step, const Tensor& noise, const NoiseSchedule& sched);

// Mean squared error over all elements.
double simple_loss(const Tensor& eps_pred, const Tensor& eps_true);

// KL(q(x^(i-1)|x^(i),x^(0)) || N(mean_pred, exp(logvar_pred))), mean over
// elements, nats. The mean term carries no gradient by construction here
// (plain-value API); the autograd twin lives in nn. Step 1 uses the
// discretized decoder likelihood.
double vlb_covariance_loss(const Tensor& x0, const Tensor& x_i, int step,
                           const Tensor& mean_pred, const Tensor& logvar_pred,
                           const NoiseSchedule& sched);

// Interpolated log variance: coef in [0,1] blends log(beta_i) (coef=1) with
// the posterior log variance (coef=0).
double interp_log_variance(double coef, int step, const NoiseSchedule& sched);

// Per-element negative log likelihood of data x under a Gaussian discretized
// to 256 bins over [-1, 1].
double discretized_gaussian_nll(double x, double mean, double logvar);

// Deterministic DDIM update from step i to step j < i (eta = 0).
Tensor ddim_step(const Tensor& x_i, const Tensor& eps_pred, int step_from, int step_to,
                 const NoiseSchedule& sched);

// Strictly decreasing, evenly spaced subsequence of {N..1} of length T whose
// final entry steps down to 0.
std::vector<int> make_sampling_steps(int T, int N);

}  // namespace changen::diffusion
