#pragma once

#include <memory>
#include <vector>

#include "changen/diffusion/schedule.hpp"
#include "changen/event/events.hpp"
#include "changen/rsdit/model.hpp"

namespace changen::sampler {

using diffusion::Tensor;

// Multi-channel raster in [0,1] (image space) or [-1,1] (latent space).
struct Raster {
    int channels = 0, height = 0, width = 0;
    Tensor data;  // [channels, H, W]

    size_t size() const { return static_cast<size_t>(channels) * height * width; }
    bool shape_matches(const Raster& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

// Image <-> latent transform. Identity codec maps [0,1] <-> [-1,1] with a
// clamp on decode; spatial_factor 1 means the change mask applies in pixel
// space untouched.
class Codec {
public:
    virtual ~Codec() = default;
    virtual int spatial_factor() const = 0;
    virtual Raster encode(const Raster& image) const = 0;
    virtual Raster decode(const Raster& latent) const = 0;
};

class IdentityCodec : public Codec {
public:
    int spatial_factor() const override { return 1; }
    Raster encode(const Raster& image) const override;
    Raster decode(const Raster& latent) const override;
};

struct GuidanceConfig {
    double lambda = 0.5;  // pre-event guidance ratio
    int T = 50;           // DDIM steps
    uint64_t seed = 0;

    void validate() const;
    int guided_steps() const { return static_cast<int>(lambda * T); }
};

struct SynthesisRequest {
    Raster pre_image;  // [0,1]
    rsdit::DenseCondition pre_condition;
    rsdit::DenseCondition post_condition;
    scene::ChangeMask change;
    GuidanceConfig guidance;

    void validate() const;
};

struct SamplerStats {
    int guided_steps_executed = 0;
    int total_steps_executed = 0;
};

// One reverse step from `step_from` to `step_to`. When guided, unchanged
// cells of the latent are first replaced with the forward-perturbed
// pre-event latent (fresh noise from `rng`), then one DDIM update runs
// conditioned on the post-event condition.
Tensor masked_change_step(const Tensor& x_post, const Tensor& x_pre0,
                          const scene::ChangeMask& change, int step_from, int step_to,
                          bool guided, const rsdit::RsDit& model,
                          const diffusion::NoiseSchedule& sched,
                          const rsdit::DenseCondition& post_condition, int channels, int height,
                          int width, Rng& rng);

Raster synthesize_post_event(const SynthesisRequest& req, const rsdit::RsDit& model,
                             const diffusion::NoiseSchedule& sched, const Codec& codec,
                             SamplerStats* stats = nullptr);

struct TimeSeriesSample {
    std::vector<Raster> images;                      // n + 1
    std::vector<scene::SemanticMask> conditions;     // n + 1
    std::vector<scene::ChangeMask> change_masks;     // n, step k -> k+1
    scene::ChangeMask cumulative_change;             // vs. time 0
    uint64_t root_seed = 0;
    std::vector<uint64_t> event_seeds;               // n
    std::vector<uint64_t> guidance_seeds;            // n
    std::vector<std::vector<event::LogEntry>> event_logs;  // n
};

// Chains event simulation and masked change diffusion: each generated image
// becomes the next pre-event image. Per-step seeds derive from the guidance
// seed, so replay is exact.
TimeSeriesSample synthesize_time_series(const Raster& image0, const scene::SemanticMask& mask0,
                                        const scene::InstanceMap& instances0,
                                        const std::vector<event::EventSpec>& events,
                                        const GuidanceConfig& guidance,
                                        const rsdit::RsDit& model,
                                        const diffusion::NoiseSchedule& sched,
                                        const Codec& codec);

}  // namespace changen::sampler
