#pragma once

#include <optional>

#include "changen/datagen/scene_gen.hpp"
#include "changen/event/events.hpp"
#include "changen/sampler/sampler.hpp"

namespace changen::datagen {

// "Changen2-S<classes>-<pairs>" with 15000 -> "15k", 1200000 -> "1.2M",
// exact integers below 1000.
std::string name_dataset(int classes, long pairs);
// Inverse of name_dataset; returns nullopt on anything malformed.
std::optional<std::pair<int, long>> parse_dataset_name(const std::string& name);

struct SampleRecord {
    long id = 0;
    uint64_t scene_seed = 0;
    std::string event_kind;
    std::string path;  // relative to the dataset root
};

struct DatasetManifest {
    std::string name;
    int schema_version = 1;
    int pair_count = 0;
    int class_count = 0;
    double lambda = 0.0;
    int ddim_steps = 0;
    uint64_t root_seed = 0;
    std::vector<SampleRecord> records;

    std::string to_json_text() const;
    static DatasetManifest from_json_text(const std::string& text);
};

struct DatasetConfig {
    int pair_count = 16;
    SceneSpec scene;
    std::vector<event::EventSpec> event_pool;  // per-sample kind drawn uniformly
    sampler::GuidanceConfig guidance;          // seed field is the root seed
    int workers = 1;
    // Scene seeds are derive(root_seed, scene_seed_offset + id); disjoint
    // offsets keep train and held-out scenes leak-free.
    uint64_t scene_seed_offset = 0;

    void validate() const;
};

// One bitemporal pair as stored on disk.
struct PairSample {
    sampler::Raster t0, t1;
    scene::SemanticMask mask_t0, mask_t1;
    scene::ChangeMask change;
    SampleRecord record;
};

// Writes <out_dir>/{manifest.json, samples/<id>/...}. Existing valid sample
// directories are skipped, so interrupted runs resume cleanly.
DatasetManifest generate_dataset(const DatasetConfig& cfg, const rsdit::RsDit& model,
                                 const diffusion::NoiseSchedule& sched,
                                 const std::string& out_dir);

DatasetManifest read_manifest(const std::string& dataset_dir);
PairSample read_sample(const std::string& dataset_dir, const SampleRecord& record);

// Full-dataset sweep: every record's files exist, PNGs decode, and the stored
// change mask equals change_mask_of of the stored semantic masks. Returns
// a human-readable report of failures (empty string = pass).
std::string verify_dataset(const std::string& dataset_dir);

// Raster <-> 8-bit PNG quantization helpers shared by datagen and eval.
void write_raster_rgb8(const std::string& path, const sampler::Raster& r);
sampler::Raster read_raster_rgb8(const std::string& path);

}  // namespace changen::datagen
