#include "changen/eval/detector.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace changen::eval {

using nn::Var;
using nn::real;
using nlohmann::json;

void DetectorConfig::validate() const {
    if (width < 1) throw ParameterError("detector: width must be >= 1");
    if (steps < 1) throw ParameterError("detector: steps must be >= 1");
    if (batch_size < 1) throw ParameterError("detector: batch_size must be >= 1");
    if (lr <= 0.0) throw ParameterError("detector: lr must be positive");
}

namespace {

Var conv_param(std::vector<std::pair<std::string, Var>>& registry, const std::string& name,
               int cout, int cin, int k, Rng& rng) {
    Var w = nn::leaf({cout, cin, k, k},
                     nn::xavier_uniform(cin * k * k, cout * k * k,
                                        static_cast<size_t>(cout) * cin * k * k, rng));
    registry.emplace_back(name, w);
    return w;
}

Var bias_param(std::vector<std::pair<std::string, Var>>& registry, const std::string& name,
               int cout) {
    Var b = nn::leaf({cout}, nn::zeros(cout));
    registry.emplace_back(name, b);
    return b;
}

}  // namespace

SiameseDetector::SiameseDetector(const DetectorConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    const int w = cfg_.width;
    enc_w1_ = conv_param(params_, "enc1.w", w, 3, 3, rng);
    enc_b1_ = bias_param(params_, "enc1.b", w);
    enc_w2_ = conv_param(params_, "enc2.w", 2 * w, w, 3, rng);
    enc_b2_ = bias_param(params_, "enc2.b", 2 * w);
    enc_w3_ = conv_param(params_, "enc3.w", 2 * w, 2 * w, 3, rng);
    enc_b3_ = bias_param(params_, "enc3.b", 2 * w);
    fuse_w_ = conv_param(params_, "fuse.w", w, 4 * w, 3, rng);
    fuse_b_ = bias_param(params_, "fuse.b", w);
    head_w_ = conv_param(params_, "head.w", 1, w, 1, rng);
    head_b_ = bias_param(params_, "head.b", 1);
}

Var SiameseDetector::encode(const Var& x) const {
    Var h = nn::silu(nn::conv2d(x, enc_w1_, enc_b1_, 1, 1));
    h = nn::silu(nn::conv2d(h, enc_w2_, enc_b2_, 2, 1));
    return nn::silu(nn::conv2d(h, enc_w3_, enc_b3_, 1, 1));
}

Var SiameseDetector::forward(const Var& t0, const Var& t1) const {
    if (t0->shape != t1->shape || t0->shape.size() != 3 || t0->shape[0] != 3)
        throw DimensionError("detector: inputs must be matching [3,H,W] rasters");
    if (t0->shape[1] % 2 != 0 || t0->shape[2] % 2 != 0)
        throw DimensionError("detector: H and W must be even");
    Var f0 = encode(t0);
    Var f1 = encode(t1);
    Var diff = nn::sub(f1, f0);
    Var fused = nn::concat_rows({diff, nn::abs_val(diff)});
    Var h = nn::silu(nn::conv2d(fused, fuse_w_, fuse_b_, 1, 1));
    Var logits = nn::conv2d(h, head_w_, head_b_, 1, 0);
    return nn::upsample_nearest(logits, 2);
}

std::vector<double> SiameseDetector::predict_probs(const sampler::Raster& t0,
                                                   const sampler::Raster& t1) const {
    nn::NoGradGuard no_grad;
    Var a = nn::constant({t0.channels, t0.height, t0.width}, t0.data);
    Var b = nn::constant({t1.channels, t1.height, t1.width}, t1.data);
    Var logits = forward(a, b);
    std::vector<double> probs(logits->v.size());
    for (size_t i = 0; i < probs.size(); ++i) probs[i] = 1.0 / (1.0 + std::exp(-logits->v[i]));
    return probs;
}

scene::ChangeMask SiameseDetector::predict(const sampler::Raster& t0, const sampler::Raster& t1,
                                           double threshold) const {
    std::vector<double> probs = predict_probs(t0, t1);
    scene::ChangeMask out(t0.height, t0.width);
    for (size_t i = 0; i < probs.size(); ++i) out.data[i] = probs[i] > threshold ? 1 : 0;
    return out;
}

std::vector<Var> SiameseDetector::parameters() const {
    std::vector<Var> out;
    for (const auto& [name, p] : params_) {
        (void)name;
        out.push_back(p);
    }
    return out;
}

std::vector<double> d4_transform(const std::vector<double>& data, int channels, int height,
                                 int width, int k) {
    if (k < 0 || k > 7) throw ParameterError("d4_transform: k must be in [0,8)");
    int r = k % 4;
    bool flip = k >= 4;
    if (r % 2 == 1 && height != width)
        throw DimensionError("d4_transform: 90-degree rotations need square rasters");
    std::vector<double> out(data.size());
    size_t plane = static_cast<size_t>(height) * width;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            // invert the clockwise rotations, then the horizontal flip
            int sy = y, sx = x;
            for (int t = 0; t < r; ++t) {
                int ny = height - 1 - sx, nx = sy;
                sy = ny;
                sx = nx;
            }
            if (flip) sx = width - 1 - sx;
            for (int c = 0; c < channels; ++c)
                out[c * plane + static_cast<size_t>(y) * width + x] =
                    data[c * plane + static_cast<size_t>(sy) * width + sx];
        }
    return out;
}

scene::ChangeMask d4_transform(const scene::ChangeMask& mask, int k) {
    std::vector<double> buf(mask.data.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = mask.data[i];
    std::vector<double> moved = d4_transform(buf, 1, mask.height(), mask.width(), k);
    scene::ChangeMask out(mask.height(), mask.width());
    for (size_t i = 0; i < moved.size(); ++i) out.data[i] = moved[i] != 0.0 ? 1 : 0;
    return out;
}

namespace {
constexpr char kMagic[] = "siam-v1\n";
}

void save_detector(const std::string& path, const SiameseDetector& detector, long train_step) {
    json meta;
    meta["config"] = {{"width", detector.config().width},
                      {"steps", detector.config().steps},
                      {"batch_size", detector.config().batch_size},
                      {"lr", detector.config().lr},
                      {"d4_augment", detector.config().d4_augment},
                      {"seed", detector.config().seed}};
    meta["train_step"] = train_step;
    json plist = json::array();
    for (const auto& [name, p] : detector.named_parameters())
        plist.push_back({{"name", name}, {"size", p->size()}});
    meta["params"] = plist;
    std::string header = meta.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("detector checkpoint: cannot open for writing: " + path);
    f.write(kMagic, sizeof(kMagic) - 1);
    uint64_t hlen = header.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, p] : detector.named_parameters()) {
        (void)name;
        f.write(reinterpret_cast<const char*>(p->v.data()),
                static_cast<std::streamsize>(p->v.size() * sizeof(double)));
    }
    if (!f) throw IoError("detector checkpoint: write failed: " + path);
}

LoadedDetector load_detector(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("detector checkpoint: cannot open: " + path);
    char magic[sizeof(kMagic) - 1];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw IoError("detector checkpoint: bad header: " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string header(hlen, '\0');
    f.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw IoError("detector checkpoint: truncated metadata: " + path);
    json meta = json::parse(header);

    DetectorConfig cfg;
    cfg.width = meta.at("config").at("width");
    cfg.steps = meta.at("config").at("steps");
    cfg.batch_size = meta.at("config").at("batch_size");
    cfg.lr = meta.at("config").at("lr");
    cfg.d4_augment = meta.at("config").at("d4_augment");
    cfg.seed = meta.at("config").at("seed");

    LoadedDetector out;
    out.train_step = meta.at("train_step");
    out.detector = std::make_unique<SiameseDetector>(cfg, 0);
    for (const auto& [name, p] : out.detector->named_parameters()) {
        size_t expect = 0;
        bool found = false;
        for (const auto& rec : meta.at("params"))
            if (rec.at("name") == name) {
                expect = rec.at("size");
                found = true;
                break;
            }
        if (!found || expect != p->size())
            throw IoError("detector checkpoint: parameter table mismatch for " + name);
        f.read(reinterpret_cast<char*>(p->v.data()),
               static_cast<std::streamsize>(p->size() * sizeof(double)));
        if (!f) throw IoError("detector checkpoint: truncated parameter blob: " + path);
    }
    return out;
}

}  // namespace changen::eval
