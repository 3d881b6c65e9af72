#pragma once

#include <memory>

#include "changen/eval/metrics.hpp"
#include "changen/nn/ops.hpp"
#include "changen/sampler/sampler.hpp"

namespace changen::eval {

struct DetectorConfig {
    int width = 16;           // base encoder channels
    long steps = 5000;
    int batch_size = 4;
    double lr = 1e-3;
    bool d4_augment = true;
    uint64_t seed = 0;

    void validate() const;
};

// Minimal Siamese change detector: one weight-shared conv encoder applied to
// both times, temporal-difference fusion (diff and |diff|), per-pixel logit
// head at half resolution, nearest-upsampled back to the input grid.
class SiameseDetector {
public:
    SiameseDetector(const DetectorConfig& cfg, uint64_t init_seed);

    nn::Var forward(const nn::Var& t0, const nn::Var& t1) const;  // [1,H,W] logits

    // Graph-free: probability map and thresholded mask.
    std::vector<double> predict_probs(const sampler::Raster& t0,
                                      const sampler::Raster& t1) const;
    scene::ChangeMask predict(const sampler::Raster& t0, const sampler::Raster& t1,
                              double threshold = 0.5) const;

    const DetectorConfig& config() const { return cfg_; }
    const std::vector<std::pair<std::string, nn::Var>>& named_parameters() const {
        return params_;
    }
    std::vector<nn::Var> parameters() const;

private:
    nn::Var encode(const nn::Var& x) const;

    DetectorConfig cfg_;
    std::vector<std::pair<std::string, nn::Var>> params_;
    nn::Var enc_w1_, enc_b1_, enc_w2_, enc_b2_, enc_w3_, enc_b3_;
    nn::Var fuse_w_, fuse_b_, head_w_, head_b_;
};

// D4 dihedral transform (k in [0,8)) of a [C,H,W] buffer; square rasters
// only for the rotating elements. k=0 is the identity.
std::vector<double> d4_transform(const std::vector<double>& data, int channels, int height,
                                 int width, int k);
scene::ChangeMask d4_transform(const scene::ChangeMask& mask, int k);

void save_detector(const std::string& path, const SiameseDetector& detector, long train_step);
struct LoadedDetector {
    std::unique_ptr<SiameseDetector> detector;
    long train_step = 0;
};
LoadedDetector load_detector(const std::string& path);

}  // namespace changen::eval
