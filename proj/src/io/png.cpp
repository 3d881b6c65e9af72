#include "changen/io/png.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "changen/core/errors.hpp"

namespace changen::io {

namespace {

const uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void write_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
    put_u32(out, static_cast<uint32_t>(payload.size()));
    size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + crc_start, static_cast<uInt>(4 + payload.size()));
    put_u32(out, crc);
}

int color_type_for(int channels) {
    if (channels == 1) return 0;
    if (channels == 3) return 2;
    throw ParameterError("png: only 1- or 3-channel images supported");
}

}  // namespace

void write_png(const std::string& path, const PngImage& img) {
    if (img.width < 1 || img.height < 1)
        throw DimensionError("png: empty image");
    if (img.bit_depth != 8 && img.bit_depth != 16)
        throw ParameterError("png: bit depth must be 8 or 16");
    if (img.samples.size() != img.sample_count())
        throw DimensionError("png: sample buffer size mismatch");

    // Raw scanlines, filter byte 0 (none) per row.
    size_t bytes_per_sample = img.bit_depth / 8;
    size_t stride = static_cast<size_t>(img.width) * img.channels * bytes_per_sample;
    std::vector<uint8_t> raw((stride + 1) * img.height);
    size_t si = 0;
    for (int y = 0; y < img.height; ++y) {
        uint8_t* row = raw.data() + static_cast<size_t>(y) * (stride + 1);
        row[0] = 0;
        uint8_t* p = row + 1;
        for (int x = 0; x < img.width * img.channels; ++x) {
            uint16_t s = img.samples[si++];
            if (img.bit_depth == 16) {
                *p++ = static_cast<uint8_t>(s >> 8);
                *p++ = static_cast<uint8_t>(s & 0xFF);
            } else {
                *p++ = static_cast<uint8_t>(s & 0xFF);
            }
        }
    }

    uLongf comp_bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_bound);
    if (compress2(comp.data(), &comp_bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("png: deflate failed");
    comp.resize(comp_bound);

    std::vector<uint8_t> file;
    file.insert(file.end(), kSignature, kSignature + 8);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(img.width));
    put_u32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(static_cast<uint8_t>(img.bit_depth));
    ihdr.push_back(static_cast<uint8_t>(color_type_for(img.channels)));
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // interlace
    write_chunk(file, "IHDR", ihdr);
    write_chunk(file, "IDAT", comp);
    write_chunk(file, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("png: cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
    if (!f) throw IoError("png: write failed: " + path);
}

namespace {

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

PngImage read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("png: cannot open: " + path);
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (file.size() < 8 || std::memcmp(file.data(), kSignature, 8) != 0)
        throw IoError("png: bad signature: " + path);

    PngImage img;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    bool saw_iend = false;
    while (pos + 12 <= file.size()) {
        uint32_t len = get_u32(file.data() + pos);
        if (pos + 12 + len > file.size())
            throw IoError("png: truncated chunk: " + path);
        const uint8_t* type = file.data() + pos + 4;
        const uint8_t* payload = file.data() + pos + 8;
        uint32_t crc_stored = get_u32(payload + len);
        uint32_t crc = crc32(0L, Z_NULL, 0);
        crc = crc32(crc, type, 4 + len);
        if (crc != crc_stored)
            throw IoError("png: chunk checksum mismatch: " + path);

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError("png: bad IHDR");
            img.width = static_cast<int>(get_u32(payload));
            img.height = static_cast<int>(get_u32(payload + 4));
            img.bit_depth = payload[8];
            int color = payload[9];
            if (color == 0) img.channels = 1;
            else if (color == 2) img.channels = 3;
            else throw IoError("png: unsupported color type");
            if (img.bit_depth != 8 && img.bit_depth != 16)
                throw IoError("png: unsupported bit depth");
            if (payload[12] != 0) throw IoError("png: interlacing unsupported");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
            break;
        }
        pos += 12 + len;
    }
    if (img.width == 0 || !saw_iend || idat.empty())
        throw IoError("png: missing required chunks: " + path);

    size_t bps = img.bit_depth / 8;
    size_t stride = static_cast<size_t>(img.width) * img.channels * bps;
    std::vector<uint8_t> raw((stride + 1) * img.height);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    int zrc = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || raw_len != raw.size())
        throw IoError("png: inflate failed: " + path);

    // Undo per-row filters.
    size_t bpp = img.channels * bps;  // filter unit
    std::vector<uint8_t> prev(stride, 0);
    std::vector<uint8_t> cur(stride);
    img.samples.resize(img.sample_count());
    size_t si = 0;
    for (int y = 0; y < img.height; ++y) {
        const uint8_t* row = raw.data() + static_cast<size_t>(y) * (stride + 1);
        uint8_t filter = row[0];
        const uint8_t* src = row + 1;
        for (size_t x = 0; x < stride; ++x) {
            int a = x >= bpp ? cur[x - bpp] : 0;
            int b = prev[x];
            int c = x >= bpp ? prev[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw IoError("png: unknown filter type");
            }
            cur[x] = static_cast<uint8_t>(v & 0xFF);
        }
        if (img.bit_depth == 16) {
            for (size_t x = 0; x < stride; x += 2)
                img.samples[si++] = static_cast<uint16_t>((cur[x] << 8) | cur[x + 1]);
        } else {
            for (size_t x = 0; x < stride; ++x)
                img.samples[si++] = cur[x];
        }
        std::swap(prev, cur);
    }
    return img;
}

void write_gray8(const std::string& path, int h, int w, const std::vector<uint8_t>& v) {
    PngImage img;
    img.width = w;
    img.height = h;
    img.channels = 1;
    img.bit_depth = 8;
    img.samples.assign(v.begin(), v.end());
    write_png(path, img);
}

void write_gray16(const std::string& path, int h, int w, const std::vector<uint16_t>& v) {
    PngImage img;
    img.width = w;
    img.height = h;
    img.channels = 1;
    img.bit_depth = 16;
    img.samples = v;
    write_png(path, img);
}

void write_rgb8(const std::string& path, int h, int w, const std::vector<uint8_t>& interleaved) {
    PngImage img;
    img.width = w;
    img.height = h;
    img.channels = 3;
    img.bit_depth = 8;
    img.samples.assign(interleaved.begin(), interleaved.end());
    write_png(path, img);
}

}  // namespace changen::io
