#pragma once

#include "changen/sampler/sampler.hpp"
#include "changen/scene/masks.hpp"

namespace changen::datagen {

enum class ShapeFamily { Rectangles, Blobs };

std::string to_string(ShapeFamily f);
ShapeFamily shape_family_from_string(const std::string& s);

// Procedural labeled scene: textured background plus non-overlapping
// objects, one instance per object, pixel-exact labels.
struct SceneSpec {
    int height = 64;
    int width = 64;
    int num_classes = 2;  // including background class 0
    int min_objects = 3;
    int max_objects = 6;
    int min_size = 6;
    int max_size = 16;
    ShapeFamily shapes = ShapeFamily::Rectangles;
    uint64_t texture_seed = 0;

    void validate() const;
};

struct Scene {
    sampler::Raster image;  // [3,H,W] in [0,1]
    scene::SemanticMask mask;
    scene::InstanceMap instances;
};

// Deterministic in (spec, seed). Placement uses bounded rejection sampling;
// a crowded canvas quietly yields fewer objects, never an error.
Scene gen_procedural_scene(const SceneSpec& spec, uint64_t seed);

}  // namespace changen::datagen
