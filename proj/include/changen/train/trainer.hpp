#pragma once

#include <ostream>

#include "changen/datagen/scene_gen.hpp"
#include "changen/diffusion/schedule.hpp"
#include "changen/rsdit/model.hpp"

namespace changen::train {

struct TrainConfig {
    datagen::SceneSpec scene;
    rsdit::DenoiserConfig model;
    diffusion::ScheduleConfig schedule;
    long steps = 2000;
    int batch_size = 2;
    double lr = 1e-4;
    // Weight of the covariance (VLB) term next to the noise-prediction MSE.
    double vlb_weight = 1e-3;
    uint64_t seed = 0;
    long log_every = 50;
    std::string checkpoint_path;  // written at the end when non-empty
    long checkpoint_every = 0;    // additionally every N steps when > 0

    void validate() const;
};

struct TrainPoint {
    long step;
    double loss;      // total
    double eps_loss;  // noise-prediction MSE component
};

struct TrainResult {
    std::unique_ptr<rsdit::RsDit> model;
    std::vector<TrainPoint> curve;
};

// Noise-prediction training on procedurally generated (image, mask) scenes:
// MSE on the predicted noise plus a mean-frozen Gaussian KL that trains the
// interpolated covariance head. Deterministic in cfg.seed.
TrainResult train_denoiser(const TrainConfig& cfg, std::ostream* log = nullptr);

// One training sample's loss graph; exposed for the trainer's tests.
nn::Var sample_loss(const rsdit::RsDit& model, const diffusion::NoiseSchedule& sched,
                    const std::vector<double>& x0, const rsdit::DenseCondition& cond, int step,
                    const std::vector<double>& noise, double vlb_weight, double* eps_loss_out);

}  // namespace changen::train
