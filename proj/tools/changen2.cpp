// Command-line front end: train the denoiser, generate datasets or time
// series, verify/inspect datasets, and run the evaluation harness.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "changen/datagen/dataset.hpp"
#include "changen/eval/harness.hpp"
#include "changen/io/png.hpp"
#include "changen/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace changen;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

std::vector<event::EventSpec> event_pool_from(const std::string& config_path,
                                              const std::vector<std::string>& kinds,
                                              int num_classes) {
    std::vector<event::EventSpec> pool;
    if (!config_path.empty()) {
        json arr = json::parse(slurp(config_path));
        if (!arr.is_array()) throw ParameterError("event config must be a JSON array");
        for (const auto& e : arr) pool.push_back(event::EventSpec::from_json_text(e.dump()));
    }
    for (const std::string& k : kinds) {
        event::EventSpec spec;
        spec.kind = event::event_kind_from_string(k);
        if (spec.kind == event::EventKind::Edit)
            spec.transition = event::TransitionMatrix::uniform(num_classes);
        pool.push_back(spec);
    }
    if (pool.empty()) {
        for (event::EventKind k : {event::EventKind::Create, event::EventKind::Remove}) {
            event::EventSpec spec;
            spec.kind = k;
            pool.push_back(spec);
        }
    }
    return pool;
}

void write_time_series(const fs::path& dir, const sampler::TimeSeriesSample& ts) {
    fs::create_directories(dir);
    for (size_t k = 0; k < ts.images.size(); ++k) {
        datagen::write_raster_rgb8((dir / ("t" + std::to_string(k) + ".png")).string(),
                                   ts.images[k]);
        io::write_gray8((dir / ("mask_t" + std::to_string(k) + ".png")).string(),
                        ts.conditions[k].height(), ts.conditions[k].width(),
                        ts.conditions[k].data.data());
    }
    for (size_t k = 0; k < ts.change_masks.size(); ++k) {
        Grid<uint8_t> vis(ts.change_masks[k].height(), ts.change_masks[k].width(), 0);
        for (size_t i = 0; i < vis.size(); ++i) vis[i] = ts.change_masks[k].data[i] ? 255 : 0;
        io::write_gray8((dir / ("change_" + std::to_string(k) + ".png")).string(), vis.height(),
                        vis.width(), vis.data());
    }
    Grid<uint8_t> cum(ts.cumulative_change.height(), ts.cumulative_change.width(), 0);
    for (size_t i = 0; i < cum.size(); ++i) cum[i] = ts.cumulative_change.data[i] ? 255 : 0;
    io::write_gray8((dir / "change_cumulative.png").string(), cum.height(), cum.width(),
                    cum.data());

    json meta;
    meta["root_seed"] = ts.root_seed;
    meta["event_seeds"] = ts.event_seeds;
    meta["guidance_seeds"] = ts.guidance_seeds;
    meta["length"] = ts.change_masks.size();
    std::ofstream mf(dir / "meta.json", std::ios::trunc);
    mf << meta.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Changen2 desk-scale pipeline"};
    app.require_subcommand(1);

    // Shared scene knobs.
    datagen::SceneSpec scene;
    auto add_scene_flags = [&scene](CLI::App* cmd) {
        cmd->add_option("--size", scene.height, "canvas height = width")->default_val(64);
        cmd->add_option("--classes", scene.num_classes, "semantic classes incl. background")
            ->default_val(2);
        cmd->add_option("--min-objects", scene.min_objects)->default_val(3);
        cmd->add_option("--max-objects", scene.max_objects)->default_val(6);
    };

    // train
    auto* train_cmd = app.add_subcommand("train", "train the denoiser on procedural scenes");
    train::TrainConfig tc;
    add_scene_flags(train_cmd);
    train_cmd->add_option("--steps", tc.steps)->default_val(2000);
    train_cmd->add_option("--batch", tc.batch_size)->default_val(2);
    train_cmd->add_option("--lr", tc.lr)->default_val(1e-4);
    train_cmd->add_option("--vlb-weight", tc.vlb_weight)->default_val(1e-3);
    train_cmd->add_option("--seed", tc.seed)->default_val(0);
    train_cmd->add_option("--hidden", tc.model.hidden_dim)->default_val(192);
    train_cmd->add_option("--depth", tc.model.depth)->default_val(8);
    train_cmd->add_option("--heads", tc.model.num_heads)->default_val(6);
    std::string ckpt_out = "denoiser.ckpt";
    train_cmd->add_option("-o,--out", ckpt_out, "checkpoint path");
    train_cmd->add_option("--checkpoint-every", tc.checkpoint_every)->default_val(0);

    // generate
    auto* gen_cmd = app.add_subcommand("generate", "generate a labeled change dataset");
    std::string ckpt_in, out_dir = "dataset", event_config;
    std::vector<std::string> event_kinds;
    int pairs = 16, series = 1, workers = 1;
    double lambda = 0.5;
    int ddim_T = 50;
    uint64_t root_seed = 0, seed_offset = 0;
    add_scene_flags(gen_cmd);
    gen_cmd->add_option("-c,--checkpoint", ckpt_in, "trained denoiser checkpoint")->required();
    gen_cmd->add_option("-o,--out", out_dir, "output directory");
    gen_cmd->add_option("-n,--pairs", pairs, "number of samples");
    gen_cmd->add_option("--series", series, "time-series length (images per sample = n+1)");
    gen_cmd->add_option("--lambda", lambda, "pre-event guidance ratio");
    gen_cmd->add_option("-T,--ddim-steps", ddim_T, "DDIM steps");
    gen_cmd->add_option("--seed", root_seed, "root seed");
    gen_cmd->add_option("--scene-seed-offset", seed_offset,
                        "offset into the scene seed stream (held-out split isolation)");
    gen_cmd->add_option("--workers", workers, "parallel sample workers");
    gen_cmd->add_option("--event-config", event_config, "JSON array of event specs");
    gen_cmd->add_option("--event", event_kinds, "event kind (repeatable)");

    // verify / stats
    auto* verify_cmd = app.add_subcommand("verify", "validate a generated dataset");
    std::string dataset_dir;
    verify_cmd->add_option("dir", dataset_dir, "dataset directory")->required();
    auto* stats_cmd = app.add_subcommand("stats", "dataset summary statistics");
    std::string stats_dir;
    stats_cmd->add_option("dir", stats_dir, "dataset directory")->required();

    // pretrain
    auto* pre_cmd = app.add_subcommand("pretrain", "pre-train the Siamese change detector");
    eval::DetectorConfig dc;
    std::string pre_dataset, det_out = "detector.ckpt", curve_out;
    pre_cmd->add_option("dir", pre_dataset, "training dataset directory")->required();
    pre_cmd->add_option("-o,--out", det_out, "detector checkpoint path");
    pre_cmd->add_option("--steps", dc.steps)->default_val(5000);
    pre_cmd->add_option("--batch", dc.batch_size)->default_val(4);
    pre_cmd->add_option("--lr", dc.lr)->default_val(1e-3);
    pre_cmd->add_option("--width", dc.width)->default_val(16);
    pre_cmd->add_option("--seed", dc.seed)->default_val(0);
    pre_cmd->add_flag("--no-d4", [&dc](int64_t) { dc.d4_augment = false; },
                      "disable D4 augmentation");
    pre_cmd->add_option("--curve", curve_out, "loss-curve CSV path");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "zero-shot evaluation of a detector");
    std::string det_in, eval_dir, train_dir_guard;
    eval_cmd->add_option("-c,--checkpoint", det_in, "detector checkpoint")->required();
    eval_cmd->add_option("dir", eval_dir, "held-out dataset directory")->required();
    eval_cmd->add_option("--train-dir", train_dir_guard,
                         "training dataset directory (scene-seed leak guard)");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "guidance-ratio sweep");
    std::string sweep_ckpt, sweep_out = "sweep";
    std::vector<double> lambdas{0.0, 0.5, 1.0};
    int sweep_pairs = 32, sweep_T = 20;
    long sweep_det_steps = 1000;
    uint64_t sweep_seed = 0;
    add_scene_flags(sweep_cmd);
    sweep_cmd->add_option("-c,--checkpoint", sweep_ckpt)->required();
    sweep_cmd->add_option("-o,--out", sweep_out, "output directory");
    sweep_cmd->add_option("--lambdas", lambdas, "guidance ratios");
    sweep_cmd->add_option("--pairs", sweep_pairs, "training pairs per sweep point");
    sweep_cmd->add_option("-T,--ddim-steps", sweep_T);
    sweep_cmd->add_option("--detector-steps", sweep_det_steps);
    sweep_cmd->add_option("--seed", sweep_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            tc.scene = scene;
            tc.scene.width = scene.height;
            tc.model.condition_channels = scene.num_classes;
            tc.checkpoint_path = ckpt_out;
            train::train_denoiser(tc, &std::cout);
            std::cout << "checkpoint written to " << ckpt_out << "\n";
        } else if (*gen_cmd) {
            rsdit::LoadedCheckpoint ckpt = rsdit::load_checkpoint(ckpt_in);
            diffusion::NoiseSchedule sched(ckpt.schedule);
            scene.width = scene.height;
            scene.num_classes = ckpt.model->config().condition_channels;
            std::vector<event::EventSpec> pool =
                event_pool_from(event_config, event_kinds, scene.num_classes);
            sampler::GuidanceConfig guidance{lambda, ddim_T, root_seed};
            guidance.validate();
            if (series <= 1) {
                datagen::DatasetConfig cfg;
                cfg.pair_count = pairs;
                cfg.scene = scene;
                cfg.event_pool = pool;
                cfg.guidance = guidance;
                cfg.workers = workers;
                cfg.scene_seed_offset = seed_offset;
                datagen::DatasetManifest m =
                    datagen::generate_dataset(cfg, *ckpt.model, sched, out_dir);
                std::cout << m.name << ": " << m.records.size() << " pairs in " << out_dir
                          << "\n";
            } else {
                sampler::IdentityCodec codec;
                for (int s = 0; s < pairs; ++s) {
                    uint64_t sseed = Rng::derive(root_seed, seed_offset + s);
                    datagen::Scene scn = datagen::gen_procedural_scene(scene, sseed);
                    std::vector<event::EventSpec> events;
                    Rng pick(Rng::derive(sseed, 3));
                    for (int k = 0; k < series; ++k)
                        events.push_back(pool[pick.uniform_int(0, int(pool.size()) - 1)]);
                    sampler::GuidanceConfig g = guidance;
                    g.seed = Rng::derive(sseed, 2);
                    sampler::TimeSeriesSample ts = sampler::synthesize_time_series(
                        scn.image, scn.mask, scn.instances, events, g, *ckpt.model, sched,
                        codec);
                    write_time_series(fs::path(out_dir) / ("series_" + std::to_string(s)), ts);
                }
                std::cout << pairs << " time series of length " << series << " in " << out_dir
                          << "\n";
            }
        } else if (*verify_cmd) {
            std::string report = datagen::verify_dataset(dataset_dir);
            if (report.empty()) {
                std::cout << "OK\n";
            } else {
                std::cout << report;
                return 1;
            }
        } else if (*stats_cmd) {
            datagen::DatasetManifest m = datagen::read_manifest(stats_dir);
            eval::Baselines b = eval::dataset_baselines(stats_dir);
            json out;
            out["name"] = m.name;
            out["pairs"] = m.pair_count;
            out["classes"] = m.class_count;
            out["lambda"] = m.lambda;
            out["change_prevalence"] = b.prevalence;
            out["all_ones_f1"] = b.all_ones;
            out["prevalence_matched_f1"] = b.prevalence_matched;
            out["coherence_mae"] = eval::dataset_coherence_mae(stats_dir);
            std::cout << out.dump(2) << "\n";
        } else if (*pre_cmd) {
            eval::PretrainResult r = eval::pretrain_detector(pre_dataset, dc);
            eval::save_detector(det_out, *r.detector, dc.steps);
            if (!curve_out.empty()) {
                std::ofstream f(curve_out, std::ios::trunc);
                f << "step,loss\n";
                for (const auto& p : r.curve) f << p.step << "," << p.loss << "\n";
            }
            std::cout << "detector written to " << det_out << "\n";
        } else if (*eval_cmd) {
            eval::LoadedDetector det = eval::load_detector(det_in);
            std::optional<datagen::DatasetManifest> guard;
            if (!train_dir_guard.empty()) guard = datagen::read_manifest(train_dir_guard);
            eval::BinaryChangeMetrics m =
                eval::zero_shot_eval(*det.detector, eval_dir, guard ? &*guard : nullptr);
            json out{{"f1", m.f1},      {"precision", m.precision}, {"recall", m.recall},
                     {"iou", m.iou},    {"tp", m.tp},               {"fp", m.fp},
                     {"fn", m.fn}};
            std::cout << out.dump(2) << "\n";
        } else if (*sweep_cmd) {
            rsdit::LoadedCheckpoint ckpt = rsdit::load_checkpoint(sweep_ckpt);
            diffusion::NoiseSchedule sched(ckpt.schedule);
            scene.width = scene.height;
            scene.num_classes = ckpt.model->config().condition_channels;
            eval::SweepConfig sc;
            sc.lambdas = lambdas;
            sc.base.pair_count = sweep_pairs;
            sc.base.scene = scene;
            sc.base.event_pool = event_pool_from("", {}, scene.num_classes);
            sc.base.guidance = sampler::GuidanceConfig{0.5, sweep_T, sweep_seed};
            sc.detector.steps = sweep_det_steps;
            sc.work_dir = sweep_out;
            fs::create_directories(sweep_out);
            std::vector<eval::SweepRow> rows = eval::lambda_sweep(*ckpt.model, sched, sc);
            std::string csv = (fs::path(sweep_out) / "sweep.csv").string();
            std::string svg = (fs::path(sweep_out) / "sweep.svg").string();
            eval::write_sweep_csv(csv, rows);
            eval::write_sweep_svg(svg, rows);
            for (const auto& r : rows)
                std::cout << "lambda " << r.lambda << "  coherence_mae " << r.coherence_mae
                          << "  f1 " << r.detector_f1 << "\n";
            std::cout << "wrote " << csv << " and " << svg << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
