#pragma once

#include <vector>

#include "changen/core/errors.hpp"

namespace changen {

// Dense row-major H x W raster. The basic container behind every mask type.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int height, int width, T fill = T{}) : height_(height), width_(width) {
        if (height < 1 || width < 1)
            throw DimensionError("Grid: height and width must be >= 1");
        data_.assign(static_cast<size_t>(height) * width, fill);
    }

    int height() const { return height_; }
    int width() const { return width_; }
    size_t size() const { return data_.size(); }

    T& at(int y, int x) { return data_[static_cast<size_t>(y) * width_ + x]; }
    const T& at(int y, int x) const { return data_[static_cast<size_t>(y) * width_ + x]; }

    T& operator[](size_t i) { return data_[i]; }
    const T& operator[](size_t i) const { return data_[i]; }

    bool in_bounds(int y, int x) const {
        return y >= 0 && y < height_ && x >= 0 && x < width_;
    }

    bool same_shape(const Grid& other) const {
        return height_ == other.height_ && width_ == other.width_;
    }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

}  // namespace changen
