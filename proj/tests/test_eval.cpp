#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "changen/eval/harness.hpp"
#include "changen/nn/optim.hpp"

using namespace changen;
using namespace changen::eval;
namespace fs = std::filesystem;

namespace {

scene::ChangeMask mask_from(std::initializer_list<std::initializer_list<int>> rows) {
    int h = static_cast<int>(rows.size());
    int w = static_cast<int>(rows.begin()->size());
    scene::ChangeMask m(h, w);
    int y = 0;
    for (const auto& row : rows) {
        int x = 0;
        for (int v : row) m.data.at(y, x++) = static_cast<uint8_t>(v);
        ++y;
    }
    return m;
}

}  // namespace

TEST_CASE("metrics on hand-worked cases") {
    scene::ChangeMask pred = mask_from({{1, 0}, {0, 0}});
    scene::ChangeMask truth = mask_from({{1, 1}, {0, 0}});
    BinaryChangeMetrics m = compute_metrics(pred, truth);
    CHECK(m.precision == doctest::Approx(1.0));
    CHECK(m.recall == doctest::Approx(0.5));
    CHECK(m.f1 == doctest::Approx(2.0 / 3));
    CHECK(m.iou == doctest::Approx(0.5));
    CHECK(m.tp == 1);
    CHECK(m.fp == 0);
    CHECK(m.fn == 1);

    BinaryChangeMetrics perfect = compute_metrics(truth, truth);
    CHECK(perfect.f1 == 1.0);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.iou == 1.0);

    scene::ChangeMask zeros = mask_from({{0, 0}, {0, 0}});
    BinaryChangeMetrics none = compute_metrics(zeros, truth);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);

    CHECK_THROWS_AS(compute_metrics(mask_from({{1}}), truth), DimensionError);
}

TEST_CASE("micro F1 satisfies F1 = 2*IoU/(1+IoU) and is order-exchangeable") {
    Rng rng(3);
    std::vector<std::pair<scene::ChangeMask, scene::ChangeMask>> batch;
    for (int s = 0; s < 12; ++s) {
        scene::ChangeMask p(6, 6), t(6, 6);
        for (size_t i = 0; i < p.data.size(); ++i) {
            p.data[i] = rng.bernoulli(0.4) ? 1 : 0;
            t.data[i] = rng.bernoulli(0.4) ? 1 : 0;
        }
        batch.emplace_back(p, t);
    }
    MetricAccumulator fwd, rev;
    for (const auto& [p, t] : batch) fwd.add(p, t);
    for (auto it = batch.rbegin(); it != batch.rend(); ++it) rev.add(it->first, it->second);
    BinaryChangeMetrics a = fwd.finalize(), b = rev.finalize();
    CHECK(a.f1 == b.f1);
    CHECK(a.tp == b.tp);
    CHECK(a.f1 == doctest::Approx(2.0 * a.iou / (1.0 + a.iou)).epsilon(1e-12));
}

TEST_CASE("analytic baselines") {
    CHECK(all_ones_f1(0.0) == 0.0);
    CHECK(all_ones_f1(1.0) == doctest::Approx(1.0));
    CHECK(all_ones_f1(0.25) == doctest::Approx(0.4));
    CHECK(prevalence_matched_f1(0.25) == doctest::Approx(0.25));
}

TEST_CASE("d4 transforms form the dihedral group on rasters") {
    Rng rng(5);
    std::vector<double> img(2 * 6 * 6);
    for (auto& v : img) v = rng.uniform(0, 1);

    // identity
    CHECK(d4_transform(img, 2, 6, 6, 0) == img);
    // every element is a bijection: multiset of values is preserved
    for (int k = 1; k < 8; ++k) {
        std::vector<double> out = d4_transform(img, 2, 6, 6, k);
        CHECK(out != img);
        std::vector<double> a = img, b = out;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(a == b);
    }
    // rotation by 90 four times is the identity
    std::vector<double> r = img;
    for (int t = 0; t < 4; ++t) r = d4_transform(r, 2, 6, 6, 1);
    CHECK(r == img);
    // flip twice is the identity
    CHECK(d4_transform(d4_transform(img, 2, 6, 6, 4), 2, 6, 6, 4) == img);

    // a concrete 2x2 single-channel rotation
    std::vector<double> quad = {1, 2, 3, 4};
    std::vector<double> cw = d4_transform(quad, 1, 2, 2, 1);
    CHECK(cw == std::vector<double>{3, 1, 4, 2});

    CHECK_THROWS_AS(d4_transform(img, 2, 6, 6, 8), ParameterError);
    std::vector<double> rect(2 * 3 * 4);
    CHECK_THROWS_AS(d4_transform(rect, 2, 3, 4, 1), DimensionError);
    std::vector<double> flipped = d4_transform(rect, 2, 3, 4, 4);  // flips allow non-square
    CHECK(flipped.size() == rect.size());
}

TEST_CASE("joint d4 augmentation keeps image and label aligned") {
    Rng rng(6);
    sampler::Raster t0, t1;
    t0.channels = t1.channels = 3;
    t0.height = t1.height = 8;
    t0.width = t1.width = 8;
    t0.data.resize(t0.size());
    t1.data.resize(t1.size());
    for (auto& v : t0.data) v = rng.uniform(0, 1);
    t1.data = t0.data;
    scene::ChangeMask change(8, 8);
    for (int y = 2; y < 5; ++y)
        for (int x = 3; x < 6; ++x) {
            change.data.at(y, x) = 1;
            for (int c = 0; c < 3; ++c) t1.data[c * 64 + y * 8 + x] = rng.uniform(0, 1);
        }
    for (int k = 0; k < 8; ++k) {
        std::vector<double> a0 = d4_transform(t0.data, 3, 8, 8, k);
        std::vector<double> a1 = d4_transform(t1.data, 3, 8, 8, k);
        scene::ChangeMask lc = d4_transform(change, k);
        // images differ exactly where the transformed label says so
        for (int p = 0; p < 64; ++p) {
            bool differs = false;
            for (int c = 0; c < 3; ++c)
                if (a0[c * 64 + p] != a1[c * 64 + p]) differs = true;
            CHECK(differs == (lc.data[p] != 0));
        }
    }
}

TEST_CASE("detector memorizes a single clear pair") {
    // one synthetic pair with an unmistakable change region
    Rng rng(7);
    sampler::Raster t0, t1;
    t0.channels = t1.channels = 3;
    t0.height = t1.height = 16;
    t0.width = t1.width = 16;
    t0.data.assign(t0.size(), 0.2);
    t1.data = t0.data;
    // region aligned to the 2x2 prediction blocks: the head emits logits at
    // half resolution, so misaligned boundaries are structurally inexact
    scene::ChangeMask truth(16, 16);
    for (int y = 4; y < 10; ++y)
        for (int x = 4; x < 12; ++x) {
            truth.data.at(y, x) = 1;
            for (int c = 0; c < 3; ++c) t1.data[c * 256 + y * 16 + x] = 0.9;
        }
    std::vector<double> label(truth.data.size());
    for (size_t i = 0; i < label.size(); ++i) label[i] = truth.data[i];

    DetectorConfig cfg;
    cfg.width = 8;
    cfg.steps = 400;
    cfg.batch_size = 1;
    cfg.lr = 3e-3;
    SiameseDetector det(cfg, 11);
    nn::Adam opt(det.parameters(), cfg.lr);
    double first_loss = 0, last_loss = 0;
    for (int step = 0; step < 400; ++step) {
        opt.zero_grad();
        nn::Var a = nn::constant({3, 16, 16}, t0.data);
        nn::Var b = nn::constant({3, 16, 16}, t1.data);
        nn::Var loss = nn::bce_with_logits(det.forward(a, b), label);
        if (step == 0) first_loss = loss->v[0];
        last_loss = loss->v[0];
        nn::backward(loss);
        opt.step();
    }
    CHECK(last_loss < 0.3 * first_loss);
    BinaryChangeMetrics m = compute_metrics(det.predict(t0, t1), truth);
    CHECK(m.f1 > 0.95);

    // swapped temporal order is structurally accepted
    scene::ChangeMask swapped = det.predict(t1, t0);
    CHECK(swapped.height() == 16);
}

TEST_CASE("detector checkpoint round trip") {
    DetectorConfig cfg;
    cfg.width = 4;
    SiameseDetector det(cfg, 3);
    std::string path = (fs::temp_directory_path() / "t_det.ckpt").string();
    save_detector(path, det, 42);
    LoadedDetector back = load_detector(path);
    CHECK(back.train_step == 42);
    Rng rng(4);
    sampler::Raster t0, t1;
    t0.channels = t1.channels = 3;
    t0.height = t1.height = 8;
    t0.width = t1.width = 8;
    t0.data.resize(t0.size());
    t1.data.resize(t1.size());
    for (auto& v : t0.data) v = rng.uniform(0, 1);
    for (auto& v : t1.data) v = rng.uniform(0, 1);
    CHECK(det.predict_probs(t0, t1) == back.detector->predict_probs(t0, t1));
}

TEST_CASE("leak guard rejects shared scene seeds") {
    datagen::DatasetManifest train;
    train.records.push_back({0, 111, "remove", "samples/0"});
    // a "held-out" manifest that reuses seed 111
    fs::path dir = fs::temp_directory_path() / "t_leak";
    fs::create_directories(dir);
    datagen::DatasetManifest held = train;
    held.name = "Changen2-S1-1";
    held.pair_count = 1;
    held.class_count = 2;
    {
        std::ofstream f(dir / "manifest.json", std::ios::trunc);
        f << held.to_json_text();
    }
    DetectorConfig cfg;
    cfg.width = 4;
    SiameseDetector det(cfg, 1);
    CHECK_THROWS_AS(zero_shot_eval(det, dir.string(), &train), ParameterError);
}
