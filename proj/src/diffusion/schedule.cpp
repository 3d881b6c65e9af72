#include "changen/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>

namespace changen::diffusion {

NoiseSchedule::NoiseSchedule(const ScheduleConfig& cfg) : cfg_(cfg) {
    if (cfg.num_steps < 1) throw ParameterError("schedule: num_steps must be >= 1");
    if (cfg.kind != "linear") throw ParameterError("schedule: unknown kind " + cfg.kind);
    if (!(cfg.beta_start > 0.0) || !(cfg.beta_end < 1.0) || cfg.beta_end < cfg.beta_start)
        throw ParameterError("schedule: betas must satisfy 0 < start <= end < 1");

    const int n = cfg.num_steps;
    betas_.resize(n);
    for (int i = 0; i < n; ++i)
        betas_[i] = n == 1 ? cfg.beta_start
                           : cfg.beta_start + (cfg.beta_end - cfg.beta_start) * i / (n - 1);
    alpha_bars_.resize(n + 1);
    alpha_bars_[0] = 1.0;
    for (int i = 1; i <= n; ++i) alpha_bars_[i] = alpha_bars_[i - 1] * (1.0 - betas_[i - 1]);
}

NoiseSchedule NoiseSchedule::linear(int num_steps, double beta_start, double beta_end) {
    ScheduleConfig cfg;
    cfg.num_steps = num_steps;
    cfg.beta_start = beta_start;
    cfg.beta_end = beta_end;
    return NoiseSchedule(cfg);
}

double NoiseSchedule::posterior_variance(int i) const {
    check_step(i);
    return (1.0 - alpha_bar(i - 1)) / (1.0 - alpha_bar(i)) * beta(i);
}

double NoiseSchedule::posterior_log_variance(int i) const {
    // beta_tilde(1) == 0; clamp like the step-2 value to keep logs finite.
    double v = i == 1 ? posterior_variance(std::min(2, num_steps())) : posterior_variance(i);
    return std::log(v);
}

double NoiseSchedule::posterior_mean_coef0(int i) const {
    check_step(i);
    return std::sqrt(alpha_bar(i - 1)) * beta(i) / (1.0 - alpha_bar(i));
}

double NoiseSchedule::posterior_mean_coef1(int i) const {
    check_step(i);
    return std::sqrt(alpha(i)) * (1.0 - alpha_bar(i - 1)) / (1.0 - alpha_bar(i));
}

Tensor perturb(const Tensor& x0, int step, const Tensor& noise, const NoiseSchedule& sched) {
    if (noise.size() != x0.size()) throw DimensionError("perturb: noise shape mismatch");
    double ab = sched.alpha_bar(step);  // validates range
    double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Tensor out(x0.size());
    for (size_t k = 0; k < x0.size(); ++k) out[k] = a * x0[k] + b * noise[k];
    return out;
}

double simple_loss(const Tensor& eps_pred, const Tensor& eps_true) {
    if (eps_pred.size() != eps_true.size()) throw DimensionError("simple_loss: shape mismatch");
    if (eps_pred.empty()) throw DimensionError("simple_loss: empty input");
    double acc = 0.0;
    for (size_t k = 0; k < eps_pred.size(); ++k) {
        double d = eps_pred[k] - eps_true[k];
        acc += d * d;
    }
    return acc / static_cast<double>(eps_pred.size());
}

double interp_log_variance(double coef, int step, const NoiseSchedule& sched) {
    coef = std::clamp(coef, 0.0, 1.0);
    return coef * std::log(sched.beta(step)) + (1.0 - coef) * sched.posterior_log_variance(step);
}

double discretized_gaussian_nll(double x, double mean, double logvar) {
    auto cdf = [](double z) { return 0.5 * (1.0 + std::erf(z / std::sqrt(2.0))); };
    double inv_std = std::exp(-0.5 * logvar);
    double plus = cdf((x - mean + 1.0 / 255.0) * inv_std);
    double minus = cdf((x - mean - 1.0 / 255.0) * inv_std);
    double p;
    if (x < -0.999) p = plus;
    else if (x > 0.999) p = 1.0 - minus;
    else p = plus - minus;
    return -std::log(std::max(p, 1e-12));
}

double vlb_covariance_loss(const Tensor& x0, const Tensor& x_i, int step,
                           const Tensor& mean_pred, const Tensor& logvar_pred,
                           const NoiseSchedule& sched) {
    if (step < 1 || step > sched.num_steps())
        throw ParameterError("vlb_covariance_loss: step out of range");
    if (x_i.size() != x0.size() || mean_pred.size() != x0.size() || logvar_pred.size() != x0.size())
        throw DimensionError("vlb_covariance_loss: shape mismatch");

    double acc = 0.0;
    if (step == 1) {
        for (size_t k = 0; k < x0.size(); ++k)
            acc += discretized_gaussian_nll(x0[k], mean_pred[k], logvar_pred[k]);
    } else {
        double c0 = sched.posterior_mean_coef0(step);
        double c1 = sched.posterior_mean_coef1(step);
        double log_vq = sched.posterior_log_variance(step);
        double vq = std::exp(log_vq);
        for (size_t k = 0; k < x0.size(); ++k) {
            double mu_q = c0 * x0[k] + c1 * x_i[k];
            double log_vp = logvar_pred[k];
            double d = mu_q - mean_pred[k];
            acc += 0.5 * (log_vp - log_vq + (vq + d * d) * std::exp(-log_vp) - 1.0);
        }
    }
    return acc / static_cast<double>(x0.size());
}

Tensor ddim_step(const Tensor& x_i, const Tensor& eps_pred, int step_from, int step_to,
                 const NoiseSchedule& sched) {
    if (step_to >= step_from) throw ParameterError("ddim_step: target step must be < source step");
    if (eps_pred.size() != x_i.size()) throw DimensionError("ddim_step: shape mismatch");
    double ab_i = sched.alpha_bar(step_from);
    double ab_j = sched.alpha_bar(step_to);
    double si = std::sqrt(1.0 - ab_i), sqrt_ab_i = std::sqrt(ab_i);
    double sj = std::sqrt(1.0 - ab_j), sqrt_ab_j = std::sqrt(ab_j);
    Tensor out(x_i.size());
    for (size_t k = 0; k < x_i.size(); ++k) {
        double x0_hat = (x_i[k] - si * eps_pred[k]) / sqrt_ab_i;
        out[k] = step_to == 0 ? x0_hat : sqrt_ab_j * x0_hat + sj * eps_pred[k];
    }
    return out;
}

std::vector<int> make_sampling_steps(int T, int N) {
    if (T < 1 || T > N) throw ParameterError("make_sampling_steps: need 1 <= T <= N");
    std::vector<int> steps(T);
    for (int k = 0; k < T; ++k) {
        long v = std::lround(static_cast<double>(T - k) * N / T);
        steps[k] = static_cast<int>(std::clamp<long>(v, 1, N));
    }
    // Rounding can in principle collide; enforce strict decrease.
    for (int k = 1; k < T; ++k)
        if (steps[k] >= steps[k - 1]) steps[k] = steps[k - 1] - 1;
    if (steps.back() < 1) throw ParameterError("make_sampling_steps: subsequence underflow");
    return steps;
}

}  // namespace changen::diffusion
