#include "changen/sampler/sampler.hpp"

#include <algorithm>
#include <cmath>

namespace changen::sampler {

Raster IdentityCodec::encode(const Raster& image) const {
    Raster out = image;
    for (double& v : out.data) v = 2.0 * v - 1.0;
    return out;
}

Raster IdentityCodec::decode(const Raster& latent) const {
    Raster out = latent;
    for (double& v : out.data) v = std::clamp((v + 1.0) / 2.0, 0.0, 1.0);
    return out;
}

void GuidanceConfig::validate() const {
    if (lambda < 0.0 || lambda > 1.0)
        throw ParameterError("guidance: lambda must be in [0,1]");
    if (T < 1) throw ParameterError("guidance: T must be >= 1");
}

void SynthesisRequest::validate() const {
    guidance.validate();
    if (pre_image.data.size() != pre_image.size())
        throw DimensionError("synthesis request: pre_image buffer size mismatch");
    if (pre_condition.height != pre_image.height || pre_condition.width != pre_image.width ||
        post_condition.height != pre_image.height || post_condition.width != pre_image.width)
        throw DimensionError("synthesis request: condition raster shape mismatch");
    if (change.height() != pre_image.height || change.width() != pre_image.width)
        throw DimensionError("synthesis request: change mask shape mismatch");
    if (pre_condition.channels != post_condition.channels)
        throw DimensionError("synthesis request: condition channel mismatch");
}

namespace {

// Change mask resampled to the latent grid (nearest) and kept as bytes; the
// identity codec has factor 1 so this is a pass-through.
scene::ChangeMask mask_at_factor(const scene::ChangeMask& change, int factor) {
    if (factor == 1) return change;
    scene::ChangeMask out(change.height() / factor, change.width() / factor);
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            out.data.at(y, x) = change.data.at(y * factor, x * factor);
    return out;
}

}  // namespace

Tensor masked_change_step(const Tensor& x_post, const Tensor& x_pre0,
                          const scene::ChangeMask& change, int step_from, int step_to,
                          bool guided, const rsdit::RsDit& model,
                          const diffusion::NoiseSchedule& sched,
                          const rsdit::DenseCondition& post_condition, int channels, int height,
                          int width, Rng& rng) {
    size_t plane = static_cast<size_t>(height) * width;
    size_t total = plane * channels;
    if (x_post.size() != total || x_pre0.size() != total)
        throw DimensionError("masked_change_step: latent size mismatch");
    if (change.height() != height || change.width() != width)
        throw DimensionError("masked_change_step: change mask shape mismatch");

    Tensor x = x_post;
    if (guided) {
        Tensor noise(total);
        for (double& v : noise) v = rng.normal();
        Tensor x_pre_i = diffusion::perturb(x_pre0, step_from, noise, sched);
        for (int c = 0; c < channels; ++c)
            for (size_t p = 0; p < plane; ++p)
                if (!change.data[p]) x[c * plane + p] = x_pre_i[c * plane + p];
    }
    rsdit::RsDit::Prediction pred =
        model.predict(x, channels, height, width, step_from, post_condition);
    return diffusion::ddim_step(x, pred.eps, step_from, step_to, sched);
}

Raster synthesize_post_event(const SynthesisRequest& req, const rsdit::RsDit& model,
                             const diffusion::NoiseSchedule& sched, const Codec& codec,
                             SamplerStats* stats) {
    req.validate();
    if (req.post_condition.channels != model.config().condition_channels)
        throw ParameterError("synthesize_post_event: condition channels do not match denoiser");
    if (req.pre_image.channels != model.config().in_channels)
        throw ParameterError("synthesize_post_event: image channels do not match denoiser");

    Raster pre_latent = codec.encode(req.pre_image);
    scene::ChangeMask change = mask_at_factor(req.change, codec.spatial_factor());
    const int c = pre_latent.channels, h = pre_latent.height, w = pre_latent.width;

    Rng rng(req.guidance.seed);
    Tensor x(pre_latent.size());
    for (double& v : x) v = rng.normal();

    std::vector<int> steps = diffusion::make_sampling_steps(req.guidance.T, sched.num_steps());
    int guided_count = req.guidance.guided_steps();
    for (int k = 0; k < req.guidance.T; ++k) {
        int i = steps[k];
        int j = k + 1 < req.guidance.T ? steps[k + 1] : 0;
        bool guided = k < guided_count;
        x = masked_change_step(x, pre_latent.data, change, i, j, guided, model, sched,
                               req.post_condition, c, h, w, rng);
        if (stats) {
            ++stats->total_steps_executed;
            if (guided) ++stats->guided_steps_executed;
        }
    }

    Raster out_latent{c, h, w, std::move(x)};
    return codec.decode(out_latent);
}

TimeSeriesSample synthesize_time_series(const Raster& image0, const scene::SemanticMask& mask0,
                                        const scene::InstanceMap& instances0,
                                        const std::vector<event::EventSpec>& events,
                                        const GuidanceConfig& guidance,
                                        const rsdit::RsDit& model,
                                        const diffusion::NoiseSchedule& sched,
                                        const Codec& codec) {
    if (events.empty()) throw ParameterError("time series: need at least one event");
    guidance.validate();
    if (mask0.num_classes != model.config().condition_channels)
        throw ParameterError("time series: mask classes do not match denoiser condition");

    TimeSeriesSample sample;
    sample.root_seed = guidance.seed;
    sample.images.push_back(image0);
    sample.conditions.push_back(mask0);

    scene::SemanticMask mask = mask0;
    scene::InstanceMap instances = instances0;
    for (size_t k = 0; k < events.size(); ++k) {
        event::EventSpec spec = events[k];
        spec.rng_seed = Rng::derive(guidance.seed, 2 * k);
        uint64_t gseed = Rng::derive(guidance.seed, 2 * k + 1);

        event::EventOutcome outcome = event::simulate_event(mask, instances, spec);

        SynthesisRequest req;
        req.pre_image = sample.images.back();
        req.pre_condition = rsdit::DenseCondition::from_semantic(mask);
        req.post_condition = rsdit::DenseCondition::from_semantic(outcome.next_mask);
        req.change = outcome.change;
        req.guidance = guidance;
        req.guidance.seed = gseed;
        sample.images.push_back(synthesize_post_event(req, model, sched, codec));

        sample.conditions.push_back(outcome.next_mask);
        sample.change_masks.push_back(outcome.change);
        sample.event_seeds.push_back(spec.rng_seed);
        sample.guidance_seeds.push_back(gseed);
        sample.event_logs.push_back(outcome.log);
        mask = outcome.next_mask;
        instances = outcome.next_instances;
    }
    sample.cumulative_change = scene::change_mask_of(sample.conditions.front(),
                                                     sample.conditions.back());
    return sample;
}

}  // namespace changen::sampler
