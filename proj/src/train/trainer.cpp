#include "changen/train/trainer.hpp"

#include <cmath>

#include "changen/nn/optim.hpp"
#include "changen/sampler/sampler.hpp"

namespace changen::train {

using nn::Var;

void TrainConfig::validate() const {
    scene.validate();
    model.validate();
    if (steps < 1) throw ParameterError("train: steps must be >= 1");
    if (batch_size < 1) throw ParameterError("train: batch_size must be >= 1");
    if (lr <= 0.0) throw ParameterError("train: lr must be positive");
    if (vlb_weight < 0.0) throw ParameterError("train: vlb_weight must be >= 0");
    if (model.condition_channels != scene.num_classes)
        throw ParameterError("train: model condition channels must equal scene classes");
}

Var sample_loss(const rsdit::RsDit& model, const diffusion::NoiseSchedule& sched,
                const std::vector<double>& x0, const rsdit::DenseCondition& cond, int step,
                const std::vector<double>& noise, double vlb_weight, double* eps_loss_out) {
    diffusion::Tensor x_i = diffusion::perturb(x0, step, noise, sched);
    const int c = model.config().in_channels, h = cond.height, w = cond.width;
    Var xv = nn::constant({c, h, w}, x_i);
    Var cv = nn::constant({cond.channels, cond.height, cond.width}, cond.data);
    rsdit::RsDit::Output out = model.forward(xv, step, cv);

    Var loss = nn::mse_loss(out.eps, noise);
    if (eps_loss_out) *eps_loss_out = loss->v[0];

    // Covariance head: interpolation coefficient in [0,1] between log(beta)
    // and the posterior log variance, trained by a KL whose mean is frozen
    // at the current noise prediction (no gradient through the mean path).
    if (out.logvar_coef && vlb_weight > 0.0 && step >= 2) {
        double log_beta = std::log(sched.beta(step));
        double log_post = sched.posterior_log_variance(step);
        Var coef = nn::clamp01(nn::scale(nn::add_scalar(out.logvar_coef, 1.0), 0.5));
        Var logvar = nn::add_scalar(nn::scale(coef, log_beta - log_post), log_post);

        double sa = std::sqrt(sched.alpha_bar(step));
        double sb = std::sqrt(1.0 - sched.alpha_bar(step));
        double c0 = sched.posterior_mean_coef0(step);
        double c1 = sched.posterior_mean_coef1(step);
        double var_q = sched.posterior_variance(step);
        std::vector<double> gap(x0.size());  // var_q + (mu_q - mu_p)^2, constants
        for (size_t i = 0; i < x0.size(); ++i) {
            double x0_hat = (x_i[i] - sb * out.eps->v[i]) / sa;
            double mu_p = c0 * x0_hat + c1 * x_i[i];
            double mu_q = c0 * x0[i] + c1 * x_i[i];
            double d = mu_q - mu_p;
            gap[i] = var_q + d * d;
        }
        Var gap_c = nn::constant({c, h, w}, std::move(gap));
        // KL(q || p) = 0.5 * (gap * exp(-logvar) + logvar - log var_q - 1)
        Var kl_terms = nn::add(nn::mul(gap_c, nn::exp_val(nn::scale(logvar, -1.0))), logvar);
        Var kl = nn::scale(nn::add_scalar(nn::mean(kl_terms), -log_post - 1.0), 0.5);
        loss = nn::add(loss, nn::scale(kl, vlb_weight));
    }
    return loss;
}

TrainResult train_denoiser(const TrainConfig& cfg, std::ostream* log) {
    cfg.validate();
    diffusion::NoiseSchedule sched(cfg.schedule);
    TrainResult result;
    result.model = std::make_unique<rsdit::RsDit>(cfg.model, Rng::derive(cfg.seed, 0x11));
    nn::Adam opt(result.model->parameters(), cfg.lr);
    Rng rng(Rng::derive(cfg.seed, 0x22));
    sampler::IdentityCodec codec;

    const size_t numel =
        static_cast<size_t>(cfg.model.in_channels) * cfg.scene.height * cfg.scene.width;
    for (long step = 0; step < cfg.steps; ++step) {
        opt.zero_grad();
        double total = 0.0, total_eps = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            datagen::Scene scn = gen_procedural_scene(cfg.scene, rng.next_u64());
            sampler::Raster latent = codec.encode(scn.image);
            rsdit::DenseCondition cond = rsdit::DenseCondition::from_semantic(scn.mask);
            int i = rng.uniform_int(1, sched.num_steps());
            std::vector<double> noise(numel);
            for (double& v : noise) v = rng.normal();

            double eps_loss = 0.0;
            Var loss = nn::scale(sample_loss(*result.model, sched, latent.data, cond, i, noise,
                                             cfg.vlb_weight, &eps_loss),
                                 1.0 / cfg.batch_size);
            total += loss->v[0] * cfg.batch_size;
            total_eps += eps_loss;
            nn::backward(loss);
        }
        opt.step();

        if (step % cfg.log_every == 0 || step == cfg.steps - 1) {
            TrainPoint pt{step, total / cfg.batch_size, total_eps / cfg.batch_size};
            result.curve.push_back(pt);
            if (log)
                *log << "step " << pt.step << " loss " << pt.loss << " eps " << pt.eps_loss
                     << std::endl;
        }
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            (step + 1) % cfg.checkpoint_every == 0)
            rsdit::save_checkpoint(cfg.checkpoint_path, *result.model, cfg.schedule, step + 1);
    }
    if (!cfg.checkpoint_path.empty())
        rsdit::save_checkpoint(cfg.checkpoint_path, *result.model, cfg.schedule, cfg.steps);
    return result;
}

}  // namespace changen::train
