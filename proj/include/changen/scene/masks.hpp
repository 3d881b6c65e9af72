#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "changen/core/grid.hpp"

namespace changen::scene {

using BinaryGrid = Grid<uint8_t>;

// Per-pixel class ids in [0, num_classes). Class `background_class`
// (0 by default) is the "nothing here" value used by object removal
// and creation placement.
struct SemanticMask {
    Grid<uint8_t> data;
    int num_classes = 2;
    int background_class = 0;

    SemanticMask() = default;
    SemanticMask(int h, int w, int k, int background = 0);

    int height() const { return data.height(); }
    int width() const { return data.width(); }
    void validate() const;
};

// Labeled object supports. 0 means "no instance"; every nonzero id present
// in the raster has a class entry.
struct InstanceMap {
    Grid<int32_t> data;
    std::map<int32_t, int> classes;  // instance id -> class id

    int height() const { return data.height(); }
    int width() const { return data.width(); }
    void validate() const;
};

struct ChangeMask {
    Grid<uint8_t> data;

    ChangeMask() = default;
    ChangeMask(int h, int w) : data(h, w, 0) {}
    int height() const { return data.height(); }
    int width() const { return data.width(); }
    size_t popcount() const;
};

// Object boundary pixels derived from an InstanceMap.
struct ContourMap {
    Grid<uint8_t> data;

    ContourMap() = default;
    ContourMap(int h, int w) : data(h, w, 0) {}
    int height() const { return data.height(); }
    int width() const { return data.width(); }
};

// C = 1 wherever the two masks disagree. Throws DimensionError on
// shape mismatch.
ChangeMask change_mask_of(const SemanticMask& before, const SemanticMask& after);

// Label maximal connected regions of the binary mask 1..n, in row-major
// order of each region's first pixel. connectivity is 4 or 8. The class of
// every component is recorded as `component_class`.
InstanceMap connected_components(const BinaryGrid& mask, int connectivity = 8,
                                 int component_class = 1);

// Split a semantic mask into per-object instances: connected same-class
// regions of every non-background class, labeled deterministically.
InstanceMap instances_of(const SemanticMask& mask, int connectivity = 8);

// Chebyshev (square structuring element) dilation. radius 0 is the identity.
ChangeMask dilate(const ChangeMask& mask, int radius);
BinaryGrid dilate(const BinaryGrid& mask, int radius);

// A pixel is a contour pixel iff it belongs to an instance and at least one
// 8-neighbor (or the image border) lies outside that same instance.
ContourMap extract_contours(const InstanceMap& instances);

// Indicator grid of one instance's support. Throws LookupError for ids
// without a class entry.
BinaryGrid instance_support(const InstanceMap& instances, int32_t id);

}  // namespace changen::scene
