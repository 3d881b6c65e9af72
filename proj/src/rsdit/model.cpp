#include "changen/rsdit/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace changen::rsdit {

using nn::Var;
using nn::real;
using nlohmann::json;

void DenoiserConfig::validate() const {
    if (depth < 1) throw ParameterError("DenoiserConfig: depth must be >= 1");
    if (hidden_dim < 1 || hidden_dim % num_heads != 0)
        throw ParameterError("DenoiserConfig: hidden_dim must be divisible by num_heads");
    if (patch_size < 1 || 8 % patch_size != 0)
        throw ParameterError("DenoiserConfig: patch_size must divide 8");
    if (window_size < 1) throw ParameterError("DenoiserConfig: window_size must be >= 1");
    if (global_attention_period < 1)
        throw ParameterError("DenoiserConfig: global_attention_period must be >= 1");
    if (condition_channels < 1 || in_channels < 1)
        throw ParameterError("DenoiserConfig: channel counts must be >= 1");
    if (mlp_ratio < 1) throw ParameterError("DenoiserConfig: mlp_ratio must be >= 1");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
        throw ParameterError("DenoiserConfig: time_embed_dim must be even");
    if (use_absolute_pos_embed && abs_pos_tokens < 1)
        throw ParameterError("DenoiserConfig: abs_pos_tokens required with positional table");
}

DenseCondition DenseCondition::from_semantic(const scene::SemanticMask& mask) {
    DenseCondition c;
    c.channels = mask.num_classes;
    c.height = mask.height();
    c.width = mask.width();
    c.data.assign(static_cast<size_t>(c.channels) * c.height * c.width, 0.0);
    size_t plane = static_cast<size_t>(c.height) * c.width;
    for (size_t i = 0; i < plane; ++i) c.data[mask.data[i] * plane + i] = 1.0;
    return c;
}

DenseCondition DenseCondition::from_contour(const scene::ContourMap& contour) {
    DenseCondition c;
    c.channels = 1;
    c.height = contour.height();
    c.width = contour.width();
    c.data.resize(contour.data.size());
    for (size_t i = 0; i < c.data.size(); ++i) c.data[i] = contour.data[i] ? 1.0 : 0.0;
    return c;
}

Var patchify(const Var& x, int patch) {
    if (x->shape.size() != 3) throw DimensionError("patchify: expects [C,H,W]");
    int c = x->shape[0], h = x->shape[1], w = x->shape[2];
    if (h % patch != 0 || w % patch != 0)
        throw DimensionError("patchify: H and W must be divisible by patch size");
    int gh = h / patch, gw = w / patch;
    int feat = c * patch * patch;
    std::vector<int64_t> idx(static_cast<size_t>(gh) * gw * feat);
    size_t o = 0;
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx)
            for (int ci = 0; ci < c; ++ci)
                for (int py = 0; py < patch; ++py)
                    for (int px = 0; px < patch; ++px)
                        idx[o++] = (static_cast<int64_t>(ci) * h + gy * patch + py) * w +
                                   gx * patch + px;
    return nn::permute_elems(x, std::move(idx), {gh * gw, feat});
}

Var unpatchify(const Var& tokens, int channels, int height, int width, int patch) {
    if (tokens->shape.size() != 2) throw DimensionError("unpatchify: expects token matrix");
    int gh = height / patch, gw = width / patch;
    int feat = channels * patch * patch;
    if (tokens->shape[0] != gh * gw || tokens->shape[1] != feat)
        throw DimensionError("unpatchify: token grid mismatch");
    std::vector<int64_t> idx(static_cast<size_t>(channels) * height * width);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx)
            for (int ci = 0; ci < channels; ++ci)
                for (int py = 0; py < patch; ++py)
                    for (int px = 0; px < patch; ++px)
                        idx[(static_cast<size_t>(ci) * height + gy * patch + py) * width +
                            gx * patch + px] =
                            static_cast<int64_t>(gy * gw + gx) * feat + ci * patch * patch +
                            py * patch + px;
    return nn::permute_elems(tokens, std::move(idx), {channels, height, width});
}

WindowPlan make_window_plan(int grid_h, int grid_w, int window) {
    if (window < 1) throw ParameterError("make_window_plan: window must be >= 1");
    WindowPlan plan;
    int wy = (grid_h + window - 1) / window;
    int wx = (grid_w + window - 1) / window;
    plan.num_windows = wy * wx;
    plan.window_tokens = window * window;
    plan.padded = (grid_h % window != 0) || (grid_w % window != 0);
    plan.perm.resize(static_cast<size_t>(plan.num_windows) * plan.window_tokens, -1);
    plan.inv.resize(static_cast<size_t>(grid_h) * grid_w, -1);
    size_t o = 0;
    for (int by = 0; by < wy; ++by)
        for (int bx = 0; bx < wx; ++bx)
            for (int iy = 0; iy < window; ++iy)
                for (int ix = 0; ix < window; ++ix, ++o) {
                    int y = by * window + iy, x = bx * window + ix;
                    if (y < grid_h && x < grid_w) {
                        plan.perm[o] = y * grid_w + x;
                        plan.inv[y * grid_w + x] = static_cast<int>(o);
                    }
                }
    return plan;
}

size_t attention_pair_count(int grid_h, int grid_w, int window, bool global_attention) {
    size_t n = static_cast<size_t>(grid_h) * grid_w;
    if (global_attention) return n * n;
    WindowPlan plan = make_window_plan(grid_h, grid_w, window);
    size_t pairs = 0;
    for (int wdx = 0; wdx < plan.num_windows; ++wdx) {
        size_t valid = 0;
        for (int t = 0; t < plan.window_tokens; ++t)
            if (plan.perm[static_cast<size_t>(wdx) * plan.window_tokens + t] >= 0) ++valid;
        pairs += valid * valid;
    }
    return pairs;
}

namespace {

Var register_param(std::vector<std::pair<std::string, Var>>* registry, const std::string& name,
                   std::vector<int> shape, std::vector<real> data) {
    Var p = nn::leaf(std::move(shape), std::move(data));
    if (registry) registry->emplace_back(name, p);
    return p;
}

std::vector<real> sinusoidal_embedding(int step, int dim) {
    std::vector<real> emb(dim);
    int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        real freq = std::exp(-std::log(real{10000}) * k / half);
        real angle = static_cast<real>(step) * freq;
        emb[k] = std::cos(angle);
        emb[half + k] = std::sin(angle);
    }
    return emb;
}

// LayerNorm across channels at every spatial position of a [C,H,W] tensor.
Var channel_layer_norm(const Var& x) {
    int c = x->shape[0], h = x->shape[1], w = x->shape[2];
    int hw = h * w;
    std::vector<int64_t> to_rows(static_cast<size_t>(hw) * c);
    std::vector<int64_t> to_chw(static_cast<size_t>(c) * hw);
    for (int p = 0; p < hw; ++p)
        for (int ci = 0; ci < c; ++ci) {
            to_rows[static_cast<size_t>(p) * c + ci] = static_cast<int64_t>(ci) * hw + p;
            to_chw[static_cast<size_t>(ci) * hw + p] = static_cast<int64_t>(p) * c + ci;
        }
    Var rows = nn::permute_elems(x, std::move(to_rows), {hw, c});
    Var normed = nn::layer_norm(rows);
    return nn::permute_elems(normed, std::move(to_chw), {c, h, w});
}

}  // namespace

DenseEmbed::DenseEmbed(int in_channels, int hidden_dim, uint64_t seed,
                       std::vector<std::pair<std::string, Var>>* registry,
                       const std::string& prefix)
    : in_channels_(in_channels), hidden_dim_(hidden_dim) {
    Rng rng(seed);
    int q = std::max(8, hidden_dim / 4);
    int channels[8] = {q, q, 2 * q, 2 * q, 2 * q, 2 * q, hidden_dim, hidden_dim};
    int strides[8] = {1, 2, 1, 2, 1, 2, 1, 1};
    int prev = in_channels;
    for (int i = 0; i < 8; ++i) {
        int cout = channels[i];
        size_t wsize = static_cast<size_t>(cout) * prev * 9;
        Layer layer;
        layer.w = register_param(registry, prefix + "conv" + std::to_string(i) + ".w",
                                 {cout, prev, 3, 3},
                                 nn::xavier_uniform(prev * 9, cout * 9, wsize, rng));
        layer.b = register_param(registry, prefix + "conv" + std::to_string(i) + ".b", {cout},
                                 nn::zeros(cout));
        layer.stride = strides[i];
        layers_.push_back(std::move(layer));
        prev = cout;
    }
}

Var DenseEmbed::forward(const Var& cond) const {
    if (cond->shape.size() != 3 || cond->shape[0] != in_channels_)
        throw DimensionError("dense_embed: condition channel mismatch");
    if (cond->shape[1] % 8 != 0 || cond->shape[2] % 8 != 0)
        throw DimensionError("dense_embed: H and W must be divisible by 8");
    Var h = cond;
    for (const Layer& layer : layers_) {
        h = nn::conv2d(h, layer.w, layer.b, layer.stride, 1);
        h = channel_layer_norm(h);
        h = nn::silu(h);
    }
    return h;
}

RsDit::RsDit(const DenoiserConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    const int d = cfg_.hidden_dim;
    const int p = cfg_.patch_size;
    const int in_feat = cfg_.in_channels * p * p;
    const int out_feat = cfg_.out_channels() * p * p;
    const int m = d * cfg_.mlp_ratio;
    const int te = cfg_.time_embed_dim;

    auto reg = [&](const std::string& name, std::vector<int> shape, std::vector<real> data) {
        return register_param(&params_, name, std::move(shape), std::move(data));
    };

    patch_w_ = reg("patch.w", {in_feat, d}, nn::xavier_uniform(in_feat, d, static_cast<size_t>(in_feat) * d, rng));
    patch_b_ = reg("patch.b", {d}, nn::zeros(d));

    time_w1_ = reg("time.w1", {te, d}, nn::xavier_uniform(te, d, static_cast<size_t>(te) * d, rng));
    time_b1_ = reg("time.b1", {d}, nn::zeros(d));
    time_w2_ = reg("time.w2", {d, d}, nn::xavier_uniform(d, d, static_cast<size_t>(d) * d, rng));
    time_b2_ = reg("time.b2", {d}, nn::zeros(d));

    cond_embed_ = std::make_unique<DenseEmbed>(cfg_.condition_channels, d, rng.next_u64(),
                                               &params_, "cond.");

    for (int b = 0; b < cfg_.depth; ++b) {
        std::string pre = "block" + std::to_string(b) + ".";
        Block blk;
        blk.w_qkv = reg(pre + "qkv.w", {d, 3 * d}, nn::xavier_uniform(d, 3 * d, static_cast<size_t>(d) * 3 * d, rng));
        blk.b_qkv = reg(pre + "qkv.b", {3 * d}, nn::zeros(3 * d));
        blk.w_proj = reg(pre + "proj.w", {d, d}, nn::xavier_uniform(d, d, static_cast<size_t>(d) * d, rng));
        blk.b_proj = reg(pre + "proj.b", {d}, nn::zeros(d));
        blk.w_fc1 = reg(pre + "fc1.w", {d, m}, nn::xavier_uniform(d, m, static_cast<size_t>(d) * m, rng));
        blk.b_fc1 = reg(pre + "fc1.b", {m}, nn::zeros(m));
        blk.w_dw = reg(pre + "dw.w", {m, 3, 3}, nn::normal_init(static_cast<size_t>(m) * 9, 0.02, rng));
        blk.b_dw = reg(pre + "dw.b", {m}, nn::zeros(m));
        blk.w_fc2 = reg(pre + "fc2.w", {m, d}, nn::xavier_uniform(m, d, static_cast<size_t>(m) * d, rng));
        blk.b_fc2 = reg(pre + "fc2.b", {d}, nn::zeros(d));
        // AdaLN-zero: modulation starts at zero so every residual branch is off.
        blk.w_mod = reg(pre + "mod.w", {d, 6 * d}, nn::zeros(static_cast<size_t>(d) * 6 * d));
        blk.b_mod = reg(pre + "mod.b", {6 * d}, nn::zeros(6 * d));
        blocks_.push_back(std::move(blk));
    }

    final_mod_w_ = reg("final.mod.w", {d, 2 * d}, nn::zeros(static_cast<size_t>(d) * 2 * d));
    final_mod_b_ = reg("final.mod.b", {2 * d}, nn::zeros(2 * d));
    final_w_ = reg("final.w", {d, out_feat}, nn::zeros(static_cast<size_t>(d) * out_feat));
    final_b_ = reg("final.b", {out_feat}, nn::zeros(out_feat));

    if (cfg_.use_absolute_pos_embed)
        pos_embed_ = reg("pos_embed", {cfg_.abs_pos_tokens, d},
                         nn::normal_init(static_cast<size_t>(cfg_.abs_pos_tokens) * d, 0.02, rng));
}

Var RsDit::time_embedding(int step) const {
    Var emb = nn::constant({1, cfg_.time_embed_dim}, sinusoidal_embedding(step, cfg_.time_embed_dim));
    Var h = nn::silu(nn::linear(emb, time_w1_, time_b1_));
    return nn::linear(h, time_w2_, time_b2_);
}

Var RsDit::attention(const Var& tokens, const Block& blk, bool global_attn, int grid_h,
                     int grid_w) const {
    const int d = cfg_.hidden_dim;
    const int heads = cfg_.num_heads;
    const int dh = d / heads;
    const real att_scale = real{1} / std::sqrt(static_cast<real>(dh));

    Var qkv = nn::linear(tokens, blk.w_qkv, blk.b_qkv);  // [n, 3d]

    auto mha = [&](const Var& qkv_rows, const std::vector<int>* pad_rows) {
        int n = qkv_rows->shape[0];
        std::vector<Var> head_outs;
        head_outs.reserve(heads);
        // -inf additive mask for padded keys, shared by all heads
        Var mask;
        if (pad_rows) {
            std::vector<real> mvals(static_cast<size_t>(n) * n, real{0});
            for (int kcol : *pad_rows)
                for (int r = 0; r < n; ++r) mvals[static_cast<size_t>(r) * n + kcol] = real{-1e30};
            mask = nn::constant({n, n}, std::move(mvals));
        }
        for (int hd = 0; hd < heads; ++hd) {
            Var q = nn::slice_cols(qkv_rows, hd * dh, dh);
            Var k = nn::slice_cols(qkv_rows, d + hd * dh, dh);
            Var v = nn::slice_cols(qkv_rows, 2 * d + hd * dh, dh);
            Var scores = nn::scale(nn::matmul(q, nn::transpose(k)), att_scale);
            if (mask) scores = nn::add(scores, mask);
            head_outs.push_back(nn::matmul(nn::softmax_rows(scores), v));
        }
        return nn::concat_cols(head_outs);
    };

    Var out;
    if (global_attn) {
        out = mha(qkv, nullptr);
    } else {
        WindowPlan plan = make_window_plan(grid_h, grid_w, cfg_.window_size);
        Var qkv_windows = nn::permute_rows(qkv, plan.perm);
        std::vector<Var> window_outs;
        window_outs.reserve(plan.num_windows);
        for (int wdx = 0; wdx < plan.num_windows; ++wdx) {
            Var rows = nn::slice_rows(qkv_windows, wdx * plan.window_tokens, plan.window_tokens);
            std::vector<int> pad_rows;
            if (plan.padded)
                for (int t = 0; t < plan.window_tokens; ++t)
                    if (plan.perm[static_cast<size_t>(wdx) * plan.window_tokens + t] < 0)
                        pad_rows.push_back(t);
            window_outs.push_back(mha(rows, pad_rows.empty() ? nullptr : &pad_rows));
        }
        out = nn::permute_rows(nn::concat_rows(window_outs), plan.inv);
    }
    return nn::linear(out, blk.w_proj, blk.b_proj);
}

Var RsDit::feed_forward(const Var& tokens, const Block& blk, int grid_h, int grid_w) const {
    const int m = cfg_.hidden_dim * cfg_.mlp_ratio;
    const int n = grid_h * grid_w;
    Var h = nn::linear(tokens, blk.w_fc1, blk.b_fc1);  // [n, m]

    // Token grid round trip so the depthwise conv sees 2-D structure; the
    // zero padding at the grid edge is the only source of position info.
    std::vector<int64_t> to_chw(static_cast<size_t>(m) * n);
    std::vector<int64_t> to_rows(static_cast<size_t>(n) * m);
    for (int t = 0; t < n; ++t)
        for (int c = 0; c < m; ++c) {
            to_chw[static_cast<size_t>(c) * n + t] = static_cast<int64_t>(t) * m + c;
            to_rows[static_cast<size_t>(t) * m + c] = static_cast<int64_t>(c) * n + t;
        }
    Var grid = nn::permute_elems(h, std::move(to_chw), {m, grid_h, grid_w});
    grid = nn::depthwise_conv3x3(grid, blk.w_dw, blk.b_dw);
    grid = nn::gelu(grid);
    Var rows = nn::permute_elems(grid, std::move(to_rows), {n, m});
    return nn::linear(rows, blk.w_fc2, blk.b_fc2);
}

RsDit::Output RsDit::forward(const Var& x, int step, const Var& cond) const {
    if (x->shape.size() != 3 || x->shape[0] != cfg_.in_channels)
        throw DimensionError("rsdit: input must be [in_channels, H, W]");
    const int h = x->shape[1], w = x->shape[2];
    const int p = cfg_.patch_size;
    if (h % p != 0 || w % p != 0) throw DimensionError("rsdit: H, W must divide by patch size");
    if (h % 8 != 0 || w % 8 != 0) throw DimensionError("rsdit: H, W must divide by 8");
    if (cond->shape.size() != 3 || cond->shape[0] != cfg_.condition_channels ||
        cond->shape[1] != h || cond->shape[2] != w)
        throw DimensionError("rsdit: condition raster shape mismatch");
    if (step < 0) throw ParameterError("rsdit: negative timestep");

    const int gh = h / p, gw = w / p;
    const int n = gh * gw;
    const int d = cfg_.hidden_dim;

    Var tokens = nn::linear(patchify(x, p), patch_w_, patch_b_);

    if (cfg_.use_absolute_pos_embed) {
        if (n != cfg_.abs_pos_tokens)
            throw DimensionError("rsdit: absolute positional table built for a different grid");
        tokens = nn::add(tokens, pos_embed_);
    }

    // Dense condition, aligned from the H/8 embed grid to the H/p token grid.
    Var cemb = cond_embed_->forward(cond);
    cemb = nn::upsample_nearest(cemb, cfg_.cond_align_factor());
    std::vector<int64_t> to_tokens(static_cast<size_t>(n) * d);
    for (int t = 0; t < n; ++t)
        for (int c = 0; c < d; ++c)
            to_tokens[static_cast<size_t>(t) * d + c] = static_cast<int64_t>(c) * n + t;
    Var cond_tokens = nn::permute_elems(cemb, std::move(to_tokens), {n, d});
    tokens = nn::add(tokens, cond_tokens);

    Var t_emb = nn::silu(time_embedding(step));  // [1, d]

    for (int b = 0; b < cfg_.depth; ++b) {
        const Block& blk = blocks_[b];
        bool global_attn = ((b + 1) % cfg_.global_attention_period) == 0;
        Var mod = nn::linear(t_emb, blk.w_mod, blk.b_mod);  // [1, 6d]
        Var shift1 = nn::slice_cols(mod, 0, d);
        Var scale1 = nn::slice_cols(mod, d, d);
        Var gate1 = nn::slice_cols(mod, 2 * d, d);
        Var shift2 = nn::slice_cols(mod, 3 * d, d);
        Var scale2 = nn::slice_cols(mod, 4 * d, d);
        Var gate2 = nn::slice_cols(mod, 5 * d, d);

        Var a = attention(nn::modulate(nn::layer_norm(tokens), shift1, scale1), blk, global_attn,
                          gh, gw);
        tokens = nn::add(tokens, nn::mul_rowvec(a, gate1));
        Var f = feed_forward(nn::modulate(nn::layer_norm(tokens), shift2, scale2), blk, gh, gw);
        tokens = nn::add(tokens, nn::mul_rowvec(f, gate2));
    }

    Var fmod = nn::linear(t_emb, final_mod_w_, final_mod_b_);
    Var fshift = nn::slice_cols(fmod, 0, d);
    Var fscale = nn::slice_cols(fmod, d, d);
    Var out_tokens = nn::linear(nn::modulate(nn::layer_norm(tokens), fshift, fscale), final_w_,
                                final_b_);
    Var y = unpatchify(out_tokens, cfg_.out_channels(), h, w, p);

    Output out;
    if (cfg_.learn_covariance) {
        out.eps = nn::slice_rows(y, 0, cfg_.in_channels);
        out.logvar_coef = nn::slice_rows(y, cfg_.in_channels, cfg_.in_channels);
    } else {
        out.eps = y;
    }
    return out;
}

RsDit::Prediction RsDit::predict(const std::vector<double>& x, int channels, int height,
                                 int width, int step, const DenseCondition& cond) const {
    nn::NoGradGuard no_grad;
    Var xv = nn::constant({channels, height, width}, x);
    Var cv = nn::constant({cond.channels, cond.height, cond.width}, cond.data);
    Output out = forward(xv, step, cv);
    Prediction pred;
    pred.eps = out.eps->v;
    if (out.logvar_coef) pred.logvar_coef = out.logvar_coef->v;
    return pred;
}

std::vector<Var> RsDit::parameters() const {
    std::vector<Var> out;
    out.reserve(params_.size());
    for (const auto& [name, p] : params_) {
        (void)name;
        out.push_back(p);
    }
    return out;
}

size_t RsDit::parameter_count() const {
    size_t n = 0;
    for (const auto& [name, p] : params_) {
        (void)name;
        n += p->size();
    }
    return n;
}

namespace {

json config_to_json(const DenoiserConfig& c) {
    return json{{"patch_size", c.patch_size},
                {"hidden_dim", c.hidden_dim},
                {"depth", c.depth},
                {"num_heads", c.num_heads},
                {"window_size", c.window_size},
                {"global_attention_period", c.global_attention_period},
                {"condition_channels", c.condition_channels},
                {"in_channels", c.in_channels},
                {"learn_covariance", c.learn_covariance},
                {"mlp_ratio", c.mlp_ratio},
                {"time_embed_dim", c.time_embed_dim},
                {"use_absolute_pos_embed", c.use_absolute_pos_embed},
                {"abs_pos_tokens", c.abs_pos_tokens}};
}

DenoiserConfig config_from_json(const json& j) {
    DenoiserConfig c;
    c.patch_size = j.at("patch_size");
    c.hidden_dim = j.at("hidden_dim");
    c.depth = j.at("depth");
    c.num_heads = j.at("num_heads");
    c.window_size = j.at("window_size");
    c.global_attention_period = j.at("global_attention_period");
    c.condition_channels = j.at("condition_channels");
    c.in_channels = j.at("in_channels");
    c.learn_covariance = j.at("learn_covariance");
    c.mlp_ratio = j.at("mlp_ratio");
    c.time_embed_dim = j.at("time_embed_dim");
    c.use_absolute_pos_embed = j.at("use_absolute_pos_embed");
    c.abs_pos_tokens = j.at("abs_pos_tokens");
    return c;
}

constexpr char kMagic[] = "rsdit-v1\n";

}  // namespace

void save_checkpoint(const std::string& path, const RsDit& model,
                     const diffusion::ScheduleConfig& schedule, long train_step) {
    json meta;
    meta["config"] = config_to_json(model.config());
    meta["schedule"] = {{"kind", schedule.kind},
                        {"num_steps", schedule.num_steps},
                        {"beta_start", schedule.beta_start},
                        {"beta_end", schedule.beta_end}};
    meta["train_step"] = train_step;
    json plist = json::array();
    for (const auto& [name, p] : model.named_parameters())
        plist.push_back({{"name", name}, {"size", p->size()}});
    meta["params"] = plist;
    std::string header = meta.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot open for writing: " + path);
    f.write(kMagic, sizeof(kMagic) - 1);
    uint64_t hlen = header.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, p] : model.named_parameters()) {
        (void)name;
        f.write(reinterpret_cast<const char*>(p->v.data()),
                static_cast<std::streamsize>(p->v.size() * sizeof(double)));
    }
    if (!f) throw IoError("checkpoint: write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open: " + path);
    char magic[sizeof(kMagic) - 1];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw IoError("checkpoint: bad header: " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string header(hlen, '\0');
    f.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw IoError("checkpoint: truncated metadata: " + path);
    json meta = json::parse(header);

    LoadedCheckpoint out;
    out.schedule.kind = meta.at("schedule").at("kind");
    out.schedule.num_steps = meta.at("schedule").at("num_steps");
    out.schedule.beta_start = meta.at("schedule").at("beta_start");
    out.schedule.beta_end = meta.at("schedule").at("beta_end");
    out.train_step = meta.at("train_step");
    out.model = std::make_unique<RsDit>(config_from_json(meta.at("config")), 0);

    for (const auto& [name, p] : out.model->named_parameters()) {
        size_t expect = 0;
        bool found = false;
        for (const auto& rec : meta.at("params"))
            if (rec.at("name") == name) {
                expect = rec.at("size");
                found = true;
                break;
            }
        if (!found || expect != p->size())
            throw IoError("checkpoint: parameter table mismatch for " + name);
        f.read(reinterpret_cast<char*>(p->v.data()),
               static_cast<std::streamsize>(p->size() * sizeof(double)));
        if (!f) throw IoError("checkpoint: truncated parameter blob: " + path);
    }
    return out;
}

}  // namespace changen::rsdit
