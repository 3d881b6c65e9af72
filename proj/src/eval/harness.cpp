#include "changen/eval/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "changen/nn/optim.hpp"

namespace fs = std::filesystem;

namespace changen::eval {

namespace {

std::vector<datagen::PairSample> load_all(const std::string& dataset_dir,
                                          const datagen::DatasetManifest& manifest) {
    std::vector<datagen::PairSample> samples;
    samples.reserve(manifest.records.size());
    for (const auto& rec : manifest.records)
        samples.push_back(datagen::read_sample(dataset_dir, rec));
    return samples;
}

std::vector<double> label_of(const scene::ChangeMask& change) {
    std::vector<double> y(change.data.size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = change.data[i] ? 1.0 : 0.0;
    return y;
}

}  // namespace

PretrainResult pretrain_detector(const std::string& dataset_dir, const DetectorConfig& cfg) {
    cfg.validate();
    std::string report = datagen::verify_dataset(dataset_dir);
    if (!report.empty())
        throw ParameterError("pretrain: dataset failed verification:\n" + report);
    datagen::DatasetManifest manifest = datagen::read_manifest(dataset_dir);
    if (manifest.records.empty()) throw ParameterError("pretrain: empty dataset");
    std::vector<datagen::PairSample> samples = load_all(dataset_dir, manifest);

    PretrainResult result;
    result.detector = std::make_unique<SiameseDetector>(cfg, Rng::derive(cfg.seed, 0xd7));
    nn::Adam opt(result.detector->parameters(), cfg.lr);
    Rng rng(Rng::derive(cfg.seed, 0x7e));

    const int h = samples[0].t0.height, w = samples[0].t0.width;
    for (long step = 0; step < cfg.steps; ++step) {
        opt.zero_grad();
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const datagen::PairSample& s =
                samples[rng.uniform_int(0, static_cast<int>(samples.size()) - 1)];
            int k = cfg.d4_augment ? rng.uniform_int(0, 7) : 0;
            std::vector<double> a = d4_transform(s.t0.data, 3, h, w, k);
            std::vector<double> bimg = d4_transform(s.t1.data, 3, h, w, k);
            std::vector<double> y = label_of(d4_transform(s.change, k));

            nn::Var va = nn::constant({3, h, w}, std::move(a));
            nn::Var vb = nn::constant({3, h, w}, std::move(bimg));
            nn::Var loss = nn::scale(
                nn::bce_with_logits(result.detector->forward(va, vb), y),
                1.0 / cfg.batch_size);
            batch_loss += loss->v[0] * cfg.batch_size;
            nn::backward(loss);
        }
        if (step % 50 == 0)
            result.curve.push_back({step, batch_loss / cfg.batch_size});
        opt.step();
    }
    return result;
}

BinaryChangeMetrics zero_shot_eval(const SiameseDetector& detector,
                                   const std::string& heldout_dir,
                                   const datagen::DatasetManifest* train_manifest) {
    datagen::DatasetManifest heldout = datagen::read_manifest(heldout_dir);
    if (train_manifest) {
        std::set<uint64_t> train_seeds;
        for (const auto& r : train_manifest->records) train_seeds.insert(r.scene_seed);
        for (const auto& r : heldout.records)
            if (train_seeds.count(r.scene_seed))
                throw ParameterError("zero_shot_eval: scene seed " +
                                     std::to_string(r.scene_seed) +
                                     " leaks from the training set");
    }
    MetricAccumulator acc;
    for (const auto& rec : heldout.records) {
        datagen::PairSample s = datagen::read_sample(heldout_dir, rec);
        acc.add(detector.predict(s.t0, s.t1), s.change);
    }
    return acc.finalize();
}

Baselines dataset_baselines(const std::string& dataset_dir) {
    datagen::DatasetManifest manifest = datagen::read_manifest(dataset_dir);
    size_t positives = 0, total = 0;
    for (const auto& rec : manifest.records) {
        datagen::PairSample s = datagen::read_sample(dataset_dir, rec);
        positives += s.change.popcount();
        total += s.change.data.size();
    }
    Baselines b;
    b.prevalence = total > 0 ? static_cast<double>(positives) / total : 0.0;
    b.all_ones = all_ones_f1(b.prevalence);
    b.prevalence_matched = prevalence_matched_f1(b.prevalence);
    return b;
}

double unchanged_region_mae(const datagen::PairSample& sample) {
    size_t plane = static_cast<size_t>(sample.t0.height) * sample.t0.width;
    double sum = 0.0;
    size_t n = 0;
    for (size_t p = 0; p < plane; ++p) {
        if (sample.change.data[p]) continue;
        for (int c = 0; c < sample.t0.channels; ++c)
            sum += std::abs(sample.t1.data[c * plane + p] - sample.t0.data[c * plane + p]);
        n += sample.t0.channels;
    }
    return n > 0 ? sum / n : 0.0;
}

double dataset_coherence_mae(const std::string& dataset_dir) {
    datagen::DatasetManifest manifest = datagen::read_manifest(dataset_dir);
    double sum = 0.0;
    for (const auto& rec : manifest.records)
        sum += unchanged_region_mae(datagen::read_sample(dataset_dir, rec));
    return manifest.records.empty() ? 0.0 : sum / manifest.records.size();
}

std::vector<SweepRow> lambda_sweep(const rsdit::RsDit& model,
                                   const diffusion::NoiseSchedule& sched,
                                   const SweepConfig& cfg) {
    std::vector<SweepRow> rows;
    for (size_t i = 0; i < cfg.lambdas.size(); ++i) {
        double lambda = cfg.lambdas[i];
        datagen::DatasetConfig train_cfg = cfg.base;
        train_cfg.guidance.lambda = lambda;
        datagen::DatasetConfig held_cfg = train_cfg;
        held_cfg.pair_count = cfg.heldout_pairs;
        held_cfg.scene_seed_offset = cfg.base.scene_seed_offset + cfg.heldout_seed_offset;

        std::ostringstream tag;
        tag << "lambda_" << i;
        fs::path train_dir = fs::path(cfg.work_dir) / (tag.str() + "_train");
        fs::path held_dir = fs::path(cfg.work_dir) / (tag.str() + "_heldout");
        datagen::DatasetManifest train_manifest =
            datagen::generate_dataset(train_cfg, model, sched, train_dir.string());
        datagen::generate_dataset(held_cfg, model, sched, held_dir.string());

        SweepRow row;
        row.lambda = lambda;
        row.coherence_mae = dataset_coherence_mae(train_dir.string());
        PretrainResult pre = pretrain_detector(train_dir.string(), cfg.detector);
        row.detector_f1 =
            zero_shot_eval(*pre.detector, held_dir.string(), &train_manifest).f1;
        rows.push_back(row);
    }
    return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("sweep: cannot write " + path);
    f << "lambda,coherence_mae,detector_f1\n";
    for (const auto& r : rows)
        f << r.lambda << "," << r.coherence_mae << "," << r.detector_f1 << "\n";
}

void write_sweep_svg(const std::string& path, const std::vector<SweepRow>& rows) {
    const int w = 480, h = 320, m = 48;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("sweep: cannot write " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    auto sx = [&](double lambda) { return m + lambda * (w - 2 * m); };
    auto draw = [&](auto value_of, const char* color, double vmax, const char* label, int ly) {
        f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& r : rows) {
            double v = vmax > 0 ? value_of(r) / vmax : 0.0;
            f << sx(r.lambda) << "," << (h - m - v * (h - 2 * m)) << " ";
        }
        f << "\"/>\n<text x=\"" << m << "\" y=\"" << ly << "\" fill=\"" << color << "\">"
          << label << "</text>\n";
        for (const auto& r : rows) {
            double v = vmax > 0 ? value_of(r) / vmax : 0.0;
            f << "<circle cx=\"" << sx(r.lambda) << "\" cy=\"" << (h - m - v * (h - 2 * m))
              << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
    };
    double mae_max = 0.0;
    for (const auto& r : rows) mae_max = std::max(mae_max, r.coherence_mae);
    draw([](const SweepRow& r) { return r.coherence_mae; }, "#c0392b",
         mae_max > 0 ? mae_max : 1.0, "unchanged-region MAE (scaled)", 20);
    draw([](const SweepRow& r) { return r.detector_f1; }, "#2980b9", 1.0, "zero-shot F1", 36);
    f << "<text x=\"" << w / 2 - 12 << "\" y=\"" << h - 12 << "\">lambda</text>\n</svg>\n";
}

}  // namespace changen::eval
