#include "changen/scene/masks.hpp"

#include <algorithm>
#include <set>
#include <vector>

namespace changen::scene {

SemanticMask::SemanticMask(int h, int w, int k, int background)
    : data(h, w, static_cast<uint8_t>(background)), num_classes(k), background_class(background) {
    validate();
}

void SemanticMask::validate() const {
    if (num_classes < 2) throw ParameterError("SemanticMask: num_classes must be >= 2");
    if (num_classes > 256) throw ParameterError("SemanticMask: num_classes must be <= 256");
    if (background_class < 0 || background_class >= num_classes)
        throw ParameterError("SemanticMask: background_class out of range");
    for (uint8_t v : data.data())
        if (v >= num_classes) throw ParameterError("SemanticMask: class id out of range");
}

void InstanceMap::validate() const {
    std::set<int32_t> seen;
    for (int32_t v : data.data()) {
        if (v < 0) throw ParameterError("InstanceMap: negative id");
        if (v != 0) seen.insert(v);
    }
    for (int32_t id : seen)
        if (!classes.count(id)) throw ParameterError("InstanceMap: id without class entry");
    for (const auto& [id, cls] : classes) {
        (void)cls;
        if (!seen.count(id)) throw ParameterError("InstanceMap: class entry with empty support");
    }
}

size_t ChangeMask::popcount() const {
    size_t n = 0;
    for (uint8_t v : data.data()) n += (v != 0);
    return n;
}

ChangeMask change_mask_of(const SemanticMask& before, const SemanticMask& after) {
    if (!before.data.same_shape(after.data))
        throw DimensionError("change_mask_of: shape mismatch");
    ChangeMask out(before.height(), before.width());
    const auto& a = before.data.data();
    const auto& b = after.data.data();
    for (size_t i = 0; i < a.size(); ++i)
        out.data[i] = a[i] != b[i] ? 1 : 0;
    return out;
}

namespace {

// Deterministic flood fill used by both labeling entry points. Labels are
// assigned in row-major order of each region's first pixel.
template <typename SameRegion>
InstanceMap label_regions(int h, int w, const SameRegion& same, int connectivity,
                          const std::vector<uint8_t>& foreground,
                          const std::vector<int>& pixel_class) {
    if (connectivity != 4 && connectivity != 8)
        throw ParameterError("connected_components: connectivity must be 4 or 8");
    static const int dx8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
    static const int dy8[] = {-1, -1, -1, 0, 0, 1, 1, 1};
    static const int dx4[] = {0, -1, 1, 0};
    static const int dy4[] = {-1, 0, 0, 1};
    const int* dx = connectivity == 8 ? dx8 : dx4;
    const int* dy = connectivity == 8 ? dy8 : dy4;
    int nn = connectivity;

    InstanceMap out;
    out.data = Grid<int32_t>(h, w, 0);
    int32_t next_id = 1;
    std::vector<size_t> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            size_t i = static_cast<size_t>(y) * w + x;
            if (!foreground[i] || out.data[i] != 0) continue;
            int32_t id = next_id++;
            out.classes[id] = pixel_class[i];
            out.data[i] = id;
            stack.clear();
            stack.push_back(i);
            while (!stack.empty()) {
                size_t cur = stack.back();
                stack.pop_back();
                int cy = static_cast<int>(cur / w), cx = static_cast<int>(cur % w);
                for (int k = 0; k < nn; ++k) {
                    int ny = cy + dy[k], nx = cx + dx[k];
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    size_t ni = static_cast<size_t>(ny) * w + nx;
                    if (!foreground[ni] || out.data[ni] != 0) continue;
                    if (!same(cur, ni)) continue;
                    out.data[ni] = id;
                    stack.push_back(ni);
                }
            }
        }
    }
    return out;
}

}  // namespace

InstanceMap connected_components(const BinaryGrid& mask, int connectivity, int component_class) {
    for (uint8_t v : mask.data())
        if (v > 1) throw ParameterError("connected_components: mask must be binary");
    std::vector<uint8_t> fg(mask.data().begin(), mask.data().end());
    std::vector<int> cls(mask.size(), component_class);
    return label_regions(mask.height(), mask.width(),
                         [](size_t, size_t) { return true; }, connectivity, fg, cls);
}

InstanceMap instances_of(const SemanticMask& mask, int connectivity) {
    const auto& m = mask.data.data();
    std::vector<uint8_t> fg(m.size());
    std::vector<int> cls(m.size());
    for (size_t i = 0; i < m.size(); ++i) {
        fg[i] = m[i] != mask.background_class;
        cls[i] = m[i];
    }
    return label_regions(mask.height(), mask.width(),
                         [&m](size_t a, size_t b) { return m[a] == m[b]; }, connectivity, fg, cls);
}

BinaryGrid dilate(const BinaryGrid& mask, int radius) {
    if (radius < 0) throw ParameterError("dilate: radius must be >= 0");
    int h = mask.height(), w = mask.width();
    if (radius == 0) return mask;
    // Separable max filter: horizontal then vertical window of 2r+1.
    BinaryGrid tmp(h, w, 0), out(h, w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            uint8_t v = 0;
            for (int k = std::max(0, x - radius); k <= std::min(w - 1, x + radius); ++k)
                v |= mask.at(y, k);
            tmp.at(y, x) = v;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            uint8_t v = 0;
            for (int k = std::max(0, y - radius); k <= std::min(h - 1, y + radius); ++k)
                v |= tmp.at(k, x);
            out.at(y, x) = v;
        }
    return out;
}

ChangeMask dilate(const ChangeMask& mask, int radius) {
    ChangeMask out;
    out.data = dilate(mask.data, radius);
    return out;
}

ContourMap extract_contours(const InstanceMap& instances) {
    int h = instances.height(), w = instances.width();
    ContourMap out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int32_t id = instances.data.at(y, x);
            if (id == 0) continue;
            bool boundary = false;
            for (int dy = -1; dy <= 1 && !boundary; ++dy)
                for (int dx = -1; dx <= 1 && !boundary; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    int ny = y + dy, nx = x + dx;
                    if (!instances.data.in_bounds(ny, nx) || instances.data.at(ny, nx) != id)
                        boundary = true;
                }
            out.data.at(y, x) = boundary ? 1 : 0;
        }
    }
    return out;
}

BinaryGrid instance_support(const InstanceMap& instances, int32_t id) {
    if (!instances.classes.count(id))
        throw LookupError("instance_support: unknown instance id");
    BinaryGrid out(instances.height(), instances.width(), 0);
    for (size_t i = 0; i < instances.data.size(); ++i)
        out[i] = instances.data[i] == id ? 1 : 0;
    return out;
}

}  // namespace changen::scene
