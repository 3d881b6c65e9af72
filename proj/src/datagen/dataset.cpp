#include "changen/datagen/dataset.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "changen/io/png.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace changen::datagen {

namespace {

std::string format_count(long n) {
    auto trim = [](double v) {
        std::ostringstream os;
        os << v;  // default precision drops trailing zeros: 1.2, 15, 27
        return os.str();
    };
    if (n >= 1000000) return trim(n / 1e6) + "M";
    if (n >= 1000) return trim(n / 1e3) + "k";
    return std::to_string(n);
}

}  // namespace

std::string name_dataset(int classes, long pairs) {
    if (classes < 0) throw ParameterError("name_dataset: classes must be >= 0");
    if (pairs < 1) throw ParameterError("name_dataset: pairs must be >= 1");
    return "Changen2-S" + std::to_string(classes) + "-" + format_count(pairs);
}

std::optional<std::pair<int, long>> parse_dataset_name(const std::string& name) {
    const std::string prefix = "Changen2-S";
    if (name.rfind(prefix, 0) != 0) return std::nullopt;
    size_t dash = name.find('-', prefix.size());
    if (dash == std::string::npos) return std::nullopt;
    std::string cls = name.substr(prefix.size(), dash - prefix.size());
    std::string cnt = name.substr(dash + 1);
    if (cls.empty() || cnt.empty()) return std::nullopt;

    int classes = 0;
    for (char c : cls) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
        classes = classes * 10 + (c - '0');
    }
    double scale = 1;
    char suffix = cnt.back();
    if (suffix == 'k') scale = 1e3;
    else if (suffix == 'M') scale = 1e6;
    if (scale != 1) cnt.pop_back();
    if (cnt.empty()) return std::nullopt;
    double value = 0;
    try {
        size_t pos = 0;
        value = std::stod(cnt, &pos);
        if (pos != cnt.size()) return std::nullopt;
    } catch (const std::exception&) {
        return std::nullopt;
    }
    double pairs = value * scale;
    if (pairs < 1 || pairs != std::floor(pairs)) return std::nullopt;
    return std::make_pair(classes, static_cast<long>(pairs));
}

void DatasetConfig::validate() const {
    if (pair_count < 1) throw ParameterError("dataset config: pair_count must be >= 1");
    if (event_pool.empty()) throw ParameterError("dataset config: empty event pool");
    if (workers < 1) throw ParameterError("dataset config: workers must be >= 1");
    scene.validate();
    guidance.validate();
    for (const auto& e : event_pool) e.validate();
}

std::string DatasetManifest::to_json_text() const {
    json j;
    j["name"] = name;
    j["schema_version"] = schema_version;
    j["pair_count"] = pair_count;
    j["class_count"] = class_count;
    j["lambda"] = lambda;
    j["ddim_steps"] = ddim_steps;
    j["root_seed"] = root_seed;
    json recs = json::array();
    for (const auto& r : records)
        recs.push_back({{"id", r.id},
                        {"scene_seed", r.scene_seed},
                        {"event_kind", r.event_kind},
                        {"path", r.path}});
    j["records"] = recs;
    return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json_text(const std::string& text) {
    json j = json::parse(text);
    DatasetManifest m;
    m.name = j.at("name");
    m.schema_version = j.at("schema_version");
    if (m.schema_version != 1)
        throw IoError("manifest: unsupported schema version " +
                      std::to_string(m.schema_version));
    m.pair_count = j.at("pair_count");
    m.class_count = j.at("class_count");
    m.lambda = j.at("lambda");
    m.ddim_steps = j.at("ddim_steps");
    m.root_seed = j.at("root_seed");
    for (const auto& r : j.at("records")) {
        SampleRecord rec;
        rec.id = r.at("id");
        rec.scene_seed = r.at("scene_seed");
        rec.event_kind = r.at("event_kind");
        rec.path = r.at("path");
        m.records.push_back(std::move(rec));
    }
    return m;
}

void write_raster_rgb8(const std::string& path, const sampler::Raster& r) {
    if (r.channels != 3) throw DimensionError("write_raster_rgb8: expects 3 channels");
    size_t plane = static_cast<size_t>(r.height) * r.width;
    std::vector<uint8_t> bytes(plane * 3);
    for (size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c)
            bytes[p * 3 + c] = static_cast<uint8_t>(
                std::lround(std::clamp(r.data[c * plane + p], 0.0, 1.0) * 255.0));
    io::write_rgb8(path, r.height, r.width, bytes);
}

sampler::Raster read_raster_rgb8(const std::string& path) {
    io::PngImage img = io::read_png(path);
    if (img.channels != 3 || img.bit_depth != 8)
        throw IoError("read_raster_rgb8: not an 8-bit RGB PNG: " + path);
    sampler::Raster r;
    r.channels = 3;
    r.height = img.height;
    r.width = img.width;
    size_t plane = static_cast<size_t>(r.height) * r.width;
    r.data.resize(plane * 3);
    for (size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c) r.data[c * plane + p] = img.samples[p * 3 + c] / 255.0;
    return r;
}

namespace {

void write_mask_gray8(const std::string& path, const Grid<uint8_t>& g) {
    io::write_gray8(path, g.height(), g.width(), g.data());
}

Grid<uint8_t> read_mask_gray8(const std::string& path) {
    io::PngImage img = io::read_png(path);
    if (img.channels != 1 || img.bit_depth != 8)
        throw IoError("mask read: not an 8-bit grayscale PNG: " + path);
    Grid<uint8_t> g(img.height, img.width, 0);
    for (size_t i = 0; i < img.samples.size(); ++i)
        g[i] = static_cast<uint8_t>(img.samples[i]);
    return g;
}

struct SampleSeeds {
    uint64_t scene, event, guide;
    int pool_index;
};

SampleSeeds seeds_for(const DatasetConfig& cfg, long id) {
    SampleSeeds s;
    s.scene = Rng::derive(cfg.guidance.seed, cfg.scene_seed_offset + static_cast<uint64_t>(id));
    s.event = Rng::derive(s.scene, 1);
    s.guide = Rng::derive(s.scene, 2);
    Rng pick(Rng::derive(s.scene, 3));
    s.pool_index = pick.uniform_int(0, static_cast<int>(cfg.event_pool.size()) - 1);
    return s;
}

SampleRecord record_for(const DatasetConfig& cfg, long id) {
    SampleSeeds s = seeds_for(cfg, id);
    SampleRecord rec;
    rec.id = id;
    rec.scene_seed = s.scene;
    rec.event_kind = event::to_string(cfg.event_pool[s.pool_index].kind);
    rec.path = "samples/" + std::to_string(id);
    return rec;
}

bool sample_is_valid(const fs::path& dir) {
    try {
        for (const char* f : {"t0.png", "t1.png", "mask_t0.png", "mask_t1.png", "change.png"})
            if (!fs::exists(dir / f)) return false;
        if (!fs::exists(dir / "meta.json")) return false;
        scene::SemanticMask m0, m1;
        m0.data = read_mask_gray8((dir / "mask_t0.png").string());
        m1.data = read_mask_gray8((dir / "mask_t1.png").string());
        m0.num_classes = m1.num_classes = 256;
        Grid<uint8_t> ch = read_mask_gray8((dir / "change.png").string());
        scene::ChangeMask recomputed = scene::change_mask_of(m0, m1);
        for (size_t i = 0; i < ch.size(); ++i)
            if ((ch[i] != 0) != (recomputed.data[i] != 0)) return false;
        io::read_png((dir / "t0.png").string());
        io::read_png((dir / "t1.png").string());
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

void generate_one(const DatasetConfig& cfg, const rsdit::RsDit& model,
                  const diffusion::NoiseSchedule& sched, const fs::path& root, long id) {
    fs::path dir = root / "samples" / std::to_string(id);
    if (sample_is_valid(dir)) return;  // resume path
    fs::create_directories(dir);

    SampleSeeds s = seeds_for(cfg, id);
    Scene scn = gen_procedural_scene(cfg.scene, s.scene);

    event::EventSpec spec = cfg.event_pool[s.pool_index];
    spec.rng_seed = s.event;
    event::EventOutcome outcome = event::simulate_event(scn.mask, scn.instances, spec);

    sampler::SynthesisRequest req;
    req.pre_image = scn.image;
    req.pre_condition = rsdit::DenseCondition::from_semantic(scn.mask);
    req.post_condition = rsdit::DenseCondition::from_semantic(outcome.next_mask);
    req.change = outcome.change;
    req.guidance = cfg.guidance;
    req.guidance.seed = s.guide;
    sampler::IdentityCodec codec;
    sampler::Raster post = sampler::synthesize_post_event(req, model, sched, codec);

    write_raster_rgb8((dir / "t0.png").string(), scn.image);
    write_raster_rgb8((dir / "t1.png").string(), post);
    write_mask_gray8((dir / "mask_t0.png").string(), scn.mask.data);
    write_mask_gray8((dir / "mask_t1.png").string(), outcome.next_mask.data);
    Grid<uint8_t> change_vis(outcome.change.height(), outcome.change.width(), 0);
    for (size_t i = 0; i < change_vis.size(); ++i)
        change_vis[i] = outcome.change.data[i] ? 255 : 0;
    write_mask_gray8((dir / "change.png").string(), change_vis);

    json meta;
    meta["id"] = id;
    meta["schema_version"] = 1;
    meta["scene_seed"] = s.scene;
    meta["event_seed"] = s.event;
    meta["guidance_seed"] = s.guide;
    meta["event_kind"] = event::to_string(spec.kind);
    meta["lambda"] = cfg.guidance.lambda;
    meta["ddim_steps"] = cfg.guidance.T;
    json log = json::array();
    for (const auto& e : outcome.log)
        log.push_back({{"instance", e.instance_id},
                       {"action", e.action},
                       {"old_class", e.old_class},
                       {"new_class", e.new_class}});
    meta["event_log"] = log;
    std::ofstream mf(dir / "meta.json", std::ios::trunc);
    mf << meta.dump(2) << "\n";
    if (!mf) throw IoError("dataset: cannot write " + (dir / "meta.json").string());
}

}  // namespace

DatasetManifest generate_dataset(const DatasetConfig& cfg, const rsdit::RsDit& model,
                                 const diffusion::NoiseSchedule& sched,
                                 const std::string& out_dir) {
    cfg.validate();
    fs::path root(out_dir);
    fs::create_directories(root / "samples");

    std::atomic<long> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (;;) {
            long id = next.fetch_add(1);
            if (id >= cfg.pair_count) return;
            try {
                generate_one(cfg, model, sched, root, id);
            } catch (...) {
                std::lock_guard<std::mutex> lk(failure_mu);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    if (cfg.workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < cfg.workers; ++t) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    DatasetManifest manifest;
    manifest.name = name_dataset(cfg.scene.num_classes - 1, cfg.pair_count);
    manifest.pair_count = cfg.pair_count;
    manifest.class_count = cfg.scene.num_classes;
    manifest.lambda = cfg.guidance.lambda;
    manifest.ddim_steps = cfg.guidance.T;
    manifest.root_seed = cfg.guidance.seed;
    for (long id = 0; id < cfg.pair_count; ++id)
        manifest.records.push_back(record_for(cfg, id));

    std::ofstream mf(root / "manifest.json", std::ios::trunc);
    mf << manifest.to_json_text();
    if (!mf) throw IoError("dataset: cannot write manifest in " + out_dir);
    return manifest;
}

DatasetManifest read_manifest(const std::string& dataset_dir) {
    std::ifstream f(fs::path(dataset_dir) / "manifest.json");
    if (!f) throw IoError("dataset: missing manifest in " + dataset_dir);
    std::ostringstream buf;
    buf << f.rdbuf();
    return DatasetManifest::from_json_text(buf.str());
}

PairSample read_sample(const std::string& dataset_dir, const SampleRecord& record) {
    fs::path dir = fs::path(dataset_dir) / record.path;
    PairSample s;
    s.record = record;
    s.t0 = read_raster_rgb8((dir / "t0.png").string());
    s.t1 = read_raster_rgb8((dir / "t1.png").string());
    s.mask_t0.data = read_mask_gray8((dir / "mask_t0.png").string());
    s.mask_t1.data = read_mask_gray8((dir / "mask_t1.png").string());
    s.mask_t0.num_classes = s.mask_t1.num_classes = 256;
    Grid<uint8_t> ch = read_mask_gray8((dir / "change.png").string());
    s.change = scene::ChangeMask(ch.height(), ch.width());
    for (size_t i = 0; i < ch.size(); ++i) s.change.data[i] = ch[i] ? 1 : 0;
    return s;
}

std::string verify_dataset(const std::string& dataset_dir) {
    std::ostringstream report;
    DatasetManifest manifest;
    try {
        manifest = read_manifest(dataset_dir);
    } catch (const std::exception& e) {
        return std::string("manifest: ") + e.what() + "\n";
    }
    if (static_cast<int>(manifest.records.size()) != manifest.pair_count)
        report << "manifest: record count " << manifest.records.size()
               << " != pair_count " << manifest.pair_count << "\n";

    size_t dirs = 0;
    fs::path samples = fs::path(dataset_dir) / "samples";
    if (fs::exists(samples))
        for (const auto& e : fs::directory_iterator(samples))
            if (e.is_directory()) ++dirs;
    if (dirs != manifest.records.size())
        report << "samples: directory count " << dirs << " != record count "
               << manifest.records.size() << "\n";

    for (const auto& rec : manifest.records) {
        try {
            PairSample s = read_sample(dataset_dir, rec);
            scene::ChangeMask recomputed = scene::change_mask_of(s.mask_t0, s.mask_t1);
            if (!(recomputed.data == s.change.data))
                report << "sample " << rec.id << ": stored change mask drifts from masks\n";
            if (!s.t0.shape_matches(s.t1))
                report << "sample " << rec.id << ": image shape mismatch\n";
        } catch (const std::exception& e) {
            report << "sample " << rec.id << ": " << e.what() << "\n";
        }
    }
    return report.str();
}

}  // namespace changen::datagen
