#include <doctest.h>

#include <cmath>

#include "changen/sampler/sampler.hpp"

using namespace changen;
using namespace changen::sampler;

namespace {

rsdit::DenoiserConfig tiny_config() {
    rsdit::DenoiserConfig cfg;
    cfg.patch_size = 2;
    cfg.hidden_dim = 16;
    cfg.depth = 2;
    cfg.num_heads = 2;
    cfg.window_size = 2;
    cfg.global_attention_period = 2;
    cfg.condition_channels = 2;
    cfg.in_channels = 3;
    cfg.mlp_ratio = 2;
    cfg.time_embed_dim = 8;
    return cfg;
}

rsdit::RsDit random_model(uint64_t seed) {
    rsdit::RsDit model(tiny_config(), seed);
    Rng rng(seed + 1);
    for (const auto& [name, p] : model.named_parameters())
        for (auto& v : p->v) v = rng.uniform(-0.05, 0.05);
    return model;
}

Raster random_image(int h, int w, uint64_t seed) {
    Raster r;
    r.channels = 3;
    r.height = h;
    r.width = w;
    r.data.resize(r.size());
    Rng rng(seed);
    for (auto& v : r.data) v = rng.uniform(0, 1);
    return r;
}

scene::SemanticMask mask_with_box(int h, int w, int y0, int x0, int s) {
    scene::SemanticMask m(h, w, 2);
    for (int y = y0; y < y0 + s; ++y)
        for (int x = x0; x < x0 + s; ++x) m.data.at(y, x) = 1;
    return m;
}

}  // namespace

TEST_CASE("identity codec maps [0,1] to [-1,1] and clamps on decode") {
    IdentityCodec codec;
    Raster img = random_image(4, 4, 1);
    Raster lat = codec.encode(img);
    for (size_t i = 0; i < img.data.size(); ++i)
        CHECK(lat.data[i] == doctest::Approx(2 * img.data[i] - 1));
    Raster back = codec.decode(lat);
    for (size_t i = 0; i < img.data.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(img.data[i]));
    lat.data[0] = 3.0;
    lat.data[1] = -3.0;
    Raster clamped = codec.decode(lat);
    CHECK(clamped.data[0] == 1.0);
    CHECK(clamped.data[1] == 0.0);
}

TEST_CASE("guidance config counts guided steps by the floor rule") {
    GuidanceConfig g;
    g.T = 50;
    for (auto [lambda, expect] : std::initializer_list<std::pair<double, int>>{
             {0.0, 0}, {0.3, 15}, {0.5, 25}, {1.0, 50}}) {
        g.lambda = lambda;
        CHECK(g.guided_steps() == expect);
    }
    g.lambda = 0.33;
    g.T = 10;
    CHECK(g.guided_steps() == 3);
    g.lambda = 1.5;
    CHECK_THROWS_AS(g.validate(), ParameterError);
    g.lambda = 0.5;
    g.T = 0;
    CHECK_THROWS_AS(g.validate(), ParameterError);
}

TEST_CASE("guided mixing: C=0 cells equal the perturbed pre-event latent") {
    rsdit::RsDit model = random_model(3);
    diffusion::NoiseSchedule sched = diffusion::NoiseSchedule::linear(100);
    const int h = 16, w = 16;
    scene::SemanticMask post = mask_with_box(h, w, 2, 2, 5);
    rsdit::DenseCondition cond = rsdit::DenseCondition::from_semantic(post);

    scene::ChangeMask change(h, w);
    for (int y = 2; y < 7; ++y)
        for (int x = 2; x < 7; ++x) change.data.at(y, x) = 1;

    std::vector<double> x_post(3 * h * w), x_pre(3 * h * w);
    Rng init(4);
    for (auto& v : x_post) v = init.normal();
    for (auto& v : x_pre) v = init.uniform(-1, 1);

    int i = 80, j = 60;
    Rng rng_a(42);
    diffusion::Tensor out =
        masked_change_step(x_post, x_pre, change, i, j, true, model, sched, cond, 3, h, w, rng_a);

    // independent mixing loop with the identical rng stream
    Rng rng_b(42);
    std::vector<double> noise(x_post.size());
    for (auto& v : noise) v = rng_b.normal();
    diffusion::Tensor pre_i = diffusion::perturb(x_pre, i, noise, sched);
    std::vector<double> mixed(x_post.size());
    size_t plane = static_cast<size_t>(h) * w;
    for (int c = 0; c < 3; ++c)
        for (size_t p = 0; p < plane; ++p)
            mixed[c * plane + p] = change.data[p] ? x_post[c * plane + p] : pre_i[c * plane + p];
    auto pred = model.predict(mixed, 3, h, w, i, cond);
    diffusion::Tensor expect = diffusion::ddim_step(mixed, pred.eps, i, j, sched);
    for (size_t k = 0; k < out.size(); ++k) CHECK(out[k] == expect[k]);
}

TEST_CASE("all-ones change mask makes guided mixing a no-op") {
    rsdit::RsDit model = random_model(5);
    diffusion::NoiseSchedule sched = diffusion::NoiseSchedule::linear(100);
    const int h = 16, w = 16;
    rsdit::DenseCondition cond =
        rsdit::DenseCondition::from_semantic(mask_with_box(h, w, 3, 3, 4));
    scene::ChangeMask ones(h, w);
    for (size_t i = 0; i < ones.data.size(); ++i) ones.data[i] = 1;

    std::vector<double> x_post(3 * h * w), x_pre(3 * h * w);
    Rng init(6);
    for (auto& v : x_post) v = init.normal();
    for (auto& v : x_pre) v = init.uniform(-1, 1);

    Rng rng(7);
    diffusion::Tensor guided = masked_change_step(x_post, x_pre, ones, 50, 30, true, model,
                                                  sched, cond, 3, h, w, rng);
    // no pre-event content can enter: equals the plain ddim update of x_post
    auto pred = model.predict(x_post, 3, h, w, 50, cond);
    diffusion::Tensor plain = diffusion::ddim_step(x_post, pred.eps, 50, 30, sched);
    for (size_t k = 0; k < guided.size(); ++k) CHECK(guided[k] == plain[k]);
}

TEST_CASE("lambda=0 output is bitwise independent of the pre-event image") {
    rsdit::RsDit model = random_model(8);
    diffusion::NoiseSchedule sched = diffusion::NoiseSchedule::linear(100);
    const int h = 16, w = 16;
    scene::SemanticMask pre_mask = mask_with_box(h, w, 2, 2, 4);
    scene::SemanticMask post_mask = mask_with_box(h, w, 8, 8, 4);

    SynthesisRequest req;
    req.pre_condition = rsdit::DenseCondition::from_semantic(pre_mask);
    req.post_condition = rsdit::DenseCondition::from_semantic(post_mask);
    req.change = scene::change_mask_of(pre_mask, post_mask);
    req.guidance = GuidanceConfig{0.0, 10, 99};

    IdentityCodec codec;
    req.pre_image = random_image(h, w, 10);
    SamplerStats stats_a;
    Raster a = synthesize_post_event(req, model, sched, codec, &stats_a);
    req.pre_image = random_image(h, w, 11);  // totally different pre image
    Raster b = synthesize_post_event(req, model, sched, codec);
    CHECK(a.data == b.data);
    CHECK(stats_a.guided_steps_executed == 0);
    CHECK(stats_a.total_steps_executed == 10);

    // and with lambda > 0 the pre image does matter
    req.guidance.lambda = 1.0;
    Raster c = synthesize_post_event(req, model, sched, codec);
    req.pre_image = random_image(h, w, 10);
    SamplerStats stats_d;
    Raster d = synthesize_post_event(req, model, sched, codec, &stats_d);
    CHECK(stats_d.guided_steps_executed == 10);
    CHECK(c.data != d.data);
}

TEST_CASE("synthesis is deterministic in the seed") {
    rsdit::RsDit model = random_model(12);
    diffusion::NoiseSchedule sched = diffusion::NoiseSchedule::linear(100);
    const int h = 16, w = 16;
    scene::SemanticMask pre_mask = mask_with_box(h, w, 2, 2, 4);
    scene::SemanticMask post_mask = mask_with_box(h, w, 8, 8, 4);
    SynthesisRequest req;
    req.pre_image = random_image(h, w, 13);
    req.pre_condition = rsdit::DenseCondition::from_semantic(pre_mask);
    req.post_condition = rsdit::DenseCondition::from_semantic(post_mask);
    req.change = scene::change_mask_of(pre_mask, post_mask);
    req.guidance = GuidanceConfig{0.6, 8, 1234};
    IdentityCodec codec;
    Raster a = synthesize_post_event(req, model, sched, codec);
    Raster b = synthesize_post_event(req, model, sched, codec);
    CHECK(a.data == b.data);
    req.guidance.seed = 1235;
    Raster c = synthesize_post_event(req, model, sched, codec);
    CHECK(a.data != c.data);
}

TEST_CASE("condition channel mismatch is a configuration error") {
    rsdit::RsDit model = random_model(14);
    diffusion::NoiseSchedule sched = diffusion::NoiseSchedule::linear(100);
    const int h = 16, w = 16;
    scene::SemanticMask three_class(h, w, 3);
    SynthesisRequest req;
    req.pre_image = random_image(h, w, 15);
    req.pre_condition = rsdit::DenseCondition::from_semantic(three_class);
    req.post_condition = rsdit::DenseCondition::from_semantic(three_class);
    req.change = scene::ChangeMask(h, w);
    req.guidance = GuidanceConfig{0.5, 4, 0};
    IdentityCodec codec;
    CHECK_THROWS_AS(synthesize_post_event(req, model, sched, codec), ParameterError);
}

TEST_CASE("time series chains events and stays label-consistent") {
    rsdit::RsDit model = random_model(16);
    diffusion::NoiseSchedule sched = diffusion::NoiseSchedule::linear(100);
    const int h = 16, w = 16;
    scene::SemanticMask mask0 = mask_with_box(h, w, 2, 2, 4);
    for (int y = 9; y < 13; ++y)
        for (int x = 9; x < 13; ++x) mask0.data.at(y, x) = 1;
    scene::InstanceMap inst0 = scene::instances_of(mask0);
    Raster img0 = random_image(h, w, 17);
    IdentityCodec codec;

    std::vector<event::EventSpec> events(3);
    for (auto& e : events) {
        e.kind = event::EventKind::Remove;
        e.selection_prob = 0.5;
    }
    GuidanceConfig g{0.5, 5, 777};
    TimeSeriesSample ts =
        synthesize_time_series(img0, mask0, inst0, events, g, model, sched, codec);
    REQUIRE(ts.images.size() == 4);
    REQUIRE(ts.conditions.size() == 4);
    REQUIRE(ts.change_masks.size() == 3);

    // label-image contract: stored masks recompute from stored conditions
    for (size_t k = 0; k < 3; ++k)
        CHECK(ts.change_masks[k].data ==
              scene::change_mask_of(ts.conditions[k], ts.conditions[k + 1]).data);
    CHECK(ts.cumulative_change.data ==
          scene::change_mask_of(ts.conditions.front(), ts.conditions.back()).data);

    // remove-only: foreground is non-increasing
    auto fg = [](const scene::SemanticMask& m) {
        size_t n = 0;
        for (size_t i = 0; i < m.data.size(); ++i) n += m.data[i] != 0;
        return n;
    };
    for (size_t k = 0; k + 1 < ts.conditions.size(); ++k)
        CHECK(fg(ts.conditions[k + 1]) <= fg(ts.conditions[k]));

    // replay determinism
    TimeSeriesSample again =
        synthesize_time_series(img0, mask0, inst0, events, g, model, sched, codec);
    for (size_t k = 0; k < ts.images.size(); ++k) CHECK(ts.images[k].data == again.images[k].data);
    CHECK(ts.event_seeds == again.event_seeds);

    // n=1 equals one direct synthesis call
    std::vector<event::EventSpec> one(events.begin(), events.begin() + 1);
    TimeSeriesSample single =
        synthesize_time_series(img0, mask0, inst0, one, g, model, sched, codec);
    event::EventSpec replay = one[0];
    replay.rng_seed = single.event_seeds[0];
    event::EventOutcome outcome = event::simulate_event(mask0, inst0, replay);
    SynthesisRequest req;
    req.pre_image = img0;
    req.pre_condition = rsdit::DenseCondition::from_semantic(mask0);
    req.post_condition = rsdit::DenseCondition::from_semantic(outcome.next_mask);
    req.change = outcome.change;
    req.guidance = g;
    req.guidance.seed = single.guidance_seeds[0];
    Raster direct = synthesize_post_event(req, model, sched, codec);
    CHECK(single.images[1].data == direct.data);
}
