#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace changen::io {

// Minimal lossless PNG codec (zlib-backed). Supports the three formats the
// dataset layout uses: 8-bit grayscale, 16-bit grayscale and 8-bit RGB.
// Writing is deterministic: fixed filter (none) and fixed compression level,
// so identical rasters always produce identical bytes.

struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 0;      // 1 or 3
    int bit_depth = 0;     // 8 or 16
    // Row-major, channel-interleaved. 16-bit samples stored natively
    // (host order) as uint16 packed into the low/high byte pair.
    std::vector<uint16_t> samples;

    size_t sample_count() const {
        return static_cast<size_t>(width) * height * channels;
    }
};

void write_png(const std::string& path, const PngImage& img);
PngImage read_png(const std::string& path);

// Convenience encoders for the raster types used throughout.
void write_gray8(const std::string& path, int h, int w, const std::vector<uint8_t>& v);
void write_gray16(const std::string& path, int h, int w, const std::vector<uint16_t>& v);
void write_rgb8(const std::string& path, int h, int w, const std::vector<uint8_t>& interleaved);

}  // namespace changen::io
