#pragma once

#include "changen/datagen/dataset.hpp"
#include "changen/eval/detector.hpp"
#include "changen/eval/metrics.hpp"

namespace changen::eval {

struct LossPoint {
    long step;
    double loss;
};

struct PretrainResult {
    std::unique_ptr<SiameseDetector> detector;
    std::vector<LossPoint> curve;  // recorded every 50 steps
};

// Standard bitemporal supervised pre-training: pixel-wise BCE on (t0, t1,
// change) triplets, joint D4 augmentation of images and label. The dataset
// must pass verification first.
PretrainResult pretrain_detector(const std::string& dataset_dir, const DetectorConfig& cfg);

// No fine-tuning. When a training manifest is supplied, shared scene seeds
// between the two datasets are a hard error (leak guard).
BinaryChangeMetrics zero_shot_eval(const SiameseDetector& detector,
                                   const std::string& heldout_dir,
                                   const datagen::DatasetManifest* train_manifest = nullptr);

struct Baselines {
    double prevalence = 0.0;
    double all_ones = 0.0;
    double prevalence_matched = 0.0;
};
Baselines dataset_baselines(const std::string& dataset_dir);

// Mean |t1 - t0| over unchanged pixels, averaged over channels; the
// temporal-coherence proxy.
double unchanged_region_mae(const datagen::PairSample& sample);
double dataset_coherence_mae(const std::string& dataset_dir);

struct SweepRow {
    double lambda = 0.0;
    double coherence_mae = 0.0;
    double detector_f1 = 0.0;
};

struct SweepConfig {
    std::vector<double> lambdas;
    datagen::DatasetConfig base;      // lambda field overwritten per sweep point
    uint64_t heldout_seed_offset = 1u << 20;  // disjoint from training scenes
    int heldout_pairs = 32;
    DetectorConfig detector;
    std::string work_dir;
};

std::vector<SweepRow> lambda_sweep(const rsdit::RsDit& model,
                                   const diffusion::NoiseSchedule& sched,
                                   const SweepConfig& cfg);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);
void write_sweep_svg(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace changen::eval
