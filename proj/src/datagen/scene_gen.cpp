#include "changen/datagen/scene_gen.hpp"

#include <algorithm>
#include <cmath>

namespace changen::datagen {

std::string to_string(ShapeFamily f) {
    return f == ShapeFamily::Rectangles ? "rectangles" : "blobs";
}

ShapeFamily shape_family_from_string(const std::string& s) {
    if (s == "rectangles") return ShapeFamily::Rectangles;
    if (s == "blobs") return ShapeFamily::Blobs;
    throw ParameterError("unknown shape family: " + s);
}

void SceneSpec::validate() const {
    if (height < 8 || width < 8) throw ParameterError("scene spec: canvas too small");
    if (num_classes < 2 || num_classes > 256)
        throw ParameterError("scene spec: num_classes must be in [2,256]");
    if (min_objects < 0 || max_objects < min_objects)
        throw ParameterError("scene spec: bad object count range");
    if (min_size < 2 || max_size < min_size)
        throw ParameterError("scene spec: bad object size range");
    if (max_size > height || max_size > width)
        throw ParameterError("scene spec: objects must fit within the canvas");
}

namespace {

// Smooth value noise: bilinear interpolation of a coarse random lattice.
std::vector<double> value_noise(int h, int w, int cell, Rng& rng) {
    int gh = h / cell + 2, gw = w / cell + 2;
    std::vector<double> lattice(static_cast<size_t>(gh) * gw);
    for (double& v : lattice) v = rng.uniform();
    std::vector<double> out(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double fy = static_cast<double>(y) / cell, fx = static_cast<double>(x) / cell;
            int iy = static_cast<int>(fy), ix = static_cast<int>(fx);
            double ty = fy - iy, tx = fx - ix;
            double a = lattice[static_cast<size_t>(iy) * gw + ix];
            double b = lattice[static_cast<size_t>(iy) * gw + ix + 1];
            double c = lattice[static_cast<size_t>(iy + 1) * gw + ix];
            double d = lattice[static_cast<size_t>(iy + 1) * gw + ix + 1];
            out[static_cast<size_t>(y) * w + x] =
                (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
        }
    return out;
}

// Blob support inside a size x size box: radius field with a few random
// harmonics around an ellipse. Always contains the center pixel.
std::vector<uint8_t> blob_stamp(int size, Rng& rng) {
    double cx = (size - 1) / 2.0, cy = (size - 1) / 2.0;
    double rx = size / 2.0 * rng.uniform(0.7, 1.0);
    double ry = size / 2.0 * rng.uniform(0.7, 1.0);
    double a1 = rng.uniform(0.0, 0.25), p1 = rng.uniform(0.0, 6.283);
    double a2 = rng.uniform(0.0, 0.15), p2 = rng.uniform(0.0, 6.283);
    std::vector<uint8_t> stamp(static_cast<size_t>(size) * size, 0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double dx = (x - cx) / rx, dy = (y - cy) / ry;
            double r = std::sqrt(dx * dx + dy * dy);
            double th = std::atan2(dy, dx);
            double limit = 1.0 + a1 * std::sin(2 * th + p1) + a2 * std::sin(3 * th + p2);
            if (r <= limit) stamp[static_cast<size_t>(y) * size + x] = 1;
        }
    stamp[static_cast<size_t>(static_cast<int>(cy)) * size + static_cast<int>(cx)] = 1;
    return stamp;
}

std::vector<uint8_t> rect_stamp(int sh, int sw) {
    return std::vector<uint8_t>(static_cast<size_t>(sh) * sw, 1);
}

}  // namespace

Scene gen_procedural_scene(const SceneSpec& spec, uint64_t seed) {
    spec.validate();
    const int h = spec.height, w = spec.width;
    Rng rng(Rng::derive(seed, spec.texture_seed));

    Scene scene;
    scene.mask = scene::SemanticMask(h, w, spec.num_classes, 0);
    scene.instances.data = Grid<int32_t>(h, w, 0);
    scene.image.channels = 3;
    scene.image.height = h;
    scene.image.width = w;
    scene.image.data.resize(static_cast<size_t>(3) * h * w);

    // Background: a muted base color modulated by smooth noise.
    double base[3] = {rng.uniform(0.25, 0.5), rng.uniform(0.3, 0.55), rng.uniform(0.2, 0.45)};
    std::vector<double> tex = value_noise(h, w, 8, rng);
    std::vector<double> grain = value_noise(h, w, 2, rng);
    size_t plane = static_cast<size_t>(h) * w;
    for (int c = 0; c < 3; ++c)
        for (size_t p = 0; p < plane; ++p)
            scene.image.data[c * plane + p] =
                std::clamp(base[c] + 0.25 * (tex[p] - 0.5) + 0.08 * (grain[p] - 0.5), 0.0, 1.0);

    int count = rng.uniform_int(spec.min_objects, spec.max_objects);
    int32_t next_id = 1;
    for (int obj = 0; obj < count; ++obj) {
        int cls = spec.num_classes == 2 ? 1 : rng.uniform_int(1, spec.num_classes - 1);
        int sh = rng.uniform_int(spec.min_size, spec.max_size);
        int sw = rng.uniform_int(spec.min_size, spec.max_size);
        std::vector<uint8_t> stamp = spec.shapes == ShapeFamily::Rectangles
                                         ? rect_stamp(sh, sw)
                                         : (sw = sh, blob_stamp(sh, rng));

        bool placed = false;
        int oy = 0, ox = 0;
        for (int attempt = 0; attempt < 32 && !placed; ++attempt) {
            oy = rng.uniform_int(0, h - sh);
            ox = rng.uniform_int(0, w - sw);
            placed = true;
            for (int y = 0; y < sh && placed; ++y)
                for (int x = 0; x < sw; ++x)
                    if (stamp[static_cast<size_t>(y) * sw + x] &&
                        scene.mask.data.at(oy + y, ox + x) != 0) {
                        placed = false;
                        break;
                    }
        }
        if (!placed) continue;  // crowded canvas: fewer objects, not an error

        double color[3] = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
        // push object colors away from the muted background band
        for (double& v : color) v = v < 0.5 ? v * 0.4 : 0.6 + (v - 0.5) * 0.8;
        double shade_phase = rng.uniform(0.0, 6.283);
        for (int y = 0; y < sh; ++y)
            for (int x = 0; x < sw; ++x) {
                if (!stamp[static_cast<size_t>(y) * sw + x]) continue;
                scene.mask.data.at(oy + y, ox + x) = static_cast<uint8_t>(cls);
                scene.instances.data.at(oy + y, ox + x) = next_id;
                double shade = 1.0 + 0.12 * std::sin(shade_phase + 0.7 * y + 0.4 * x);
                size_t p = static_cast<size_t>(oy + y) * w + (ox + x);
                for (int c = 0; c < 3; ++c)
                    scene.image.data[c * plane + p] = std::clamp(color[c] * shade, 0.0, 1.0);
            }
        scene.instances.classes[next_id] = cls;
        ++next_id;
    }
    return scene;
}

}  // namespace changen::datagen
