#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "changen/train/trainer.hpp"

using namespace changen;
using namespace changen::train;

namespace {

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.scene.height = cfg.scene.width = 16;
    cfg.scene.num_classes = 2;
    cfg.scene.min_objects = 1;
    cfg.scene.max_objects = 2;
    cfg.scene.min_size = 4;
    cfg.scene.max_size = 6;
    cfg.model.patch_size = 2;
    cfg.model.hidden_dim = 16;
    cfg.model.depth = 2;
    cfg.model.num_heads = 2;
    cfg.model.window_size = 2;
    cfg.model.global_attention_period = 2;
    cfg.model.condition_channels = 2;
    cfg.model.time_embed_dim = 8;
    cfg.schedule.num_steps = 100;
    cfg.steps = 4;
    cfg.batch_size = 1;
    cfg.log_every = 1;
    return cfg;
}

}  // namespace

TEST_CASE("at init the noise loss equals the zero-prediction baseline") {
    TrainConfig cfg = tiny_train_config();
    diffusion::NoiseSchedule sched(cfg.schedule);
    rsdit::RsDit model(cfg.model, 5);

    Rng rng(6);
    datagen::Scene scn = datagen::gen_procedural_scene(cfg.scene, 7);
    std::vector<double> x0(3 * 16 * 16);
    for (size_t i = 0; i < x0.size(); ++i) x0[i] = 2 * scn.image.data[i] - 1;
    rsdit::DenseCondition cond = rsdit::DenseCondition::from_semantic(scn.mask);
    std::vector<double> noise(x0.size());
    for (auto& v : noise) v = rng.normal();

    double eps_part = 0;
    nn::Var loss = sample_loss(model, sched, x0, cond, 40, noise, 0.0, &eps_part);
    double expect = 0;
    for (double v : noise) expect += v * v;
    expect /= static_cast<double>(noise.size());
    CHECK(loss->v[0] == doctest::Approx(expect).epsilon(1e-9));
    CHECK(eps_part == doctest::Approx(expect).epsilon(1e-9));

    // with the covariance term on, the loss grows by the weighted KL
    nn::Var with_vlb = sample_loss(model, sched, x0, cond, 40, noise, 1e-3, &eps_part);
    CHECK(with_vlb->v[0] >= loss->v[0]);
    CHECK(std::isfinite(with_vlb->v[0]));
}

TEST_CASE("training runs, logs, checkpoints, and is seed-deterministic") {
    namespace fs = std::filesystem;
    TrainConfig cfg = tiny_train_config();
    cfg.checkpoint_path = (fs::temp_directory_path() / "t_train.ckpt").string();
    TrainResult a = train_denoiser(cfg);
    REQUIRE(a.curve.size() >= 4);
    for (const auto& p : a.curve) CHECK(std::isfinite(p.loss));

    rsdit::LoadedCheckpoint ck = rsdit::load_checkpoint(cfg.checkpoint_path);
    CHECK(ck.train_step == cfg.steps);
    CHECK(ck.model->parameter_count() == a.model->parameter_count());

    TrainResult b = train_denoiser(cfg);
    for (size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].loss == b.curve[i].loss);
    const auto& pa = a.model->named_parameters();
    const auto& pb = b.model->named_parameters();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second->v == pb[i].second->v);
}

TEST_CASE("trainer validates its configuration") {
    TrainConfig cfg = tiny_train_config();
    cfg.model.condition_channels = 5;  // != scene classes
    CHECK_THROWS_AS(train_denoiser(cfg), ParameterError);
    cfg = tiny_train_config();
    cfg.steps = 0;
    CHECK_THROWS_AS(train_denoiser(cfg), ParameterError);
}
