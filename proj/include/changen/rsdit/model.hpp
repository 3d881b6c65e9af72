#pragma once

#include <string>
#include <utility>
#include <vector>

#include "changen/diffusion/schedule.hpp"
#include "changen/nn/ops.hpp"
#include "changen/scene/masks.hpp"

namespace changen::rsdit {

struct DenoiserConfig {
    int patch_size = 2;
    int hidden_dim = 192;
    int depth = 8;
    int num_heads = 6;
    int window_size = 4;
    int global_attention_period = 4;  // 1-indexed: blocks g, 2g, ... use global attention
    int condition_channels = 2;
    int in_channels = 3;
    bool learn_covariance = true;
    int mlp_ratio = 2;
    int time_embed_dim = 256;
    // Ablation only: reintroduces the fixed-size absolute positional table
    // that pins the model to its build resolution.
    bool use_absolute_pos_embed = false;
    int abs_pos_tokens = 0;

    void validate() const;
    int out_channels() const { return learn_covariance ? 2 * in_channels : in_channels; }
    // Ratio between the dense-embed grid (H/8) and the token grid (H/p).
    int cond_align_factor() const { return 8 / patch_size; }
};

// Dense condition raster: one-hot semantic mask or 1-channel contour map.
struct DenseCondition {
    int channels = 0, height = 0, width = 0;
    std::vector<double> data;  // [channels, H, W]

    static DenseCondition from_semantic(const scene::SemanticMask& mask);
    static DenseCondition from_contour(const scene::ContourMap& contour);
};

// Token helpers (lossless rearrangements).
nn::Var patchify(const nn::Var& x, int patch);  // [C,H,W] -> [HW/p^2, C*p*p]
nn::Var unpatchify(const nn::Var& tokens, int channels, int height, int width, int patch);

// Non-overlapping window partition over an h x w token grid, with padding
// rows (-1) when the grid does not divide evenly.
struct WindowPlan {
    std::vector<int> perm;  // window-ordered row -> source token (or -1 pad)
    std::vector<int> inv;   // token -> window-ordered row
    int num_windows = 0;
    int window_tokens = 0;
    bool padded = false;
};
WindowPlan make_window_plan(int grid_h, int grid_w, int window);

// Token-pair count of one attention layer; the linear-vs-quadratic scaling
// check asserts on this, not on wall time.
size_t attention_pair_count(int grid_h, int grid_w, int window, bool global_attention);

// Standalone dense embedding network: 8 conv-layernorm-SiLU blocks with
// stride-2 3x3 convolutions giving a total 8x downsampling.
class DenseEmbed {
public:
    DenseEmbed(int in_channels, int hidden_dim, uint64_t seed,
               std::vector<std::pair<std::string, nn::Var>>* registry = nullptr,
               const std::string& prefix = "cond.");
    nn::Var forward(const nn::Var& cond) const;  // [Cc,H,W] -> [d, H/8, W/8]

private:
    struct Layer {
        nn::Var w, b;
        int stride;
    };
    std::vector<Layer> layers_;
    int in_channels_, hidden_dim_;
};

class RsDit {
public:
    RsDit(const DenoiserConfig& cfg, uint64_t init_seed);

    struct Output {
        nn::Var eps;          // [C,H,W]
        nn::Var logvar_coef;  // raw covariance head output [C,H,W]; empty if disabled
    };

    Output forward(const nn::Var& x, int step, const nn::Var& cond) const;

    struct Prediction {
        std::vector<double> eps;
        std::vector<double> logvar_coef;
    };
    // Graph-free inference path.
    Prediction predict(const std::vector<double>& x, int channels, int height, int width,
                       int step, const DenseCondition& cond) const;

    const DenoiserConfig& config() const { return cfg_; }
    const std::vector<std::pair<std::string, nn::Var>>& named_parameters() const { return params_; }
    std::vector<nn::Var> parameters() const;
    size_t parameter_count() const;

private:
    struct Block {
        nn::Var w_qkv, b_qkv, w_proj, b_proj;
        nn::Var w_fc1, b_fc1, w_dw, b_dw, w_fc2, b_fc2;
        nn::Var w_mod, b_mod;  // AdaLN-zero: d -> 6d
    };

    nn::Var time_embedding(int step) const;
    nn::Var attention(const nn::Var& tokens, const Block& blk, bool global_attn, int grid_h,
                      int grid_w) const;
    nn::Var feed_forward(const nn::Var& tokens, const Block& blk, int grid_h, int grid_w) const;

    DenoiserConfig cfg_;
    std::vector<std::pair<std::string, nn::Var>> params_;
    nn::Var patch_w_, patch_b_;
    nn::Var time_w1_, time_b1_, time_w2_, time_b2_;
    std::unique_ptr<DenseEmbed> cond_embed_;
    std::vector<Block> blocks_;
    nn::Var final_mod_w_, final_mod_b_, final_w_, final_b_;
    nn::Var pos_embed_;  // ablation only
};

// Checkpoint: "rsdit-v1" header, JSON metadata, raw little-endian doubles.
void save_checkpoint(const std::string& path, const RsDit& model,
                     const diffusion::ScheduleConfig& schedule, long train_step);

struct LoadedCheckpoint {
    std::unique_ptr<RsDit> model;
    diffusion::ScheduleConfig schedule;
    long train_step = 0;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace changen::rsdit
