// Minimal PNG codec (8-bit RGB only) on top of zlib. Writes filter mode 0;
// reads any of the five standard scanline filters.
#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "moto/frame.hpp"

namespace moto::png {

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void write_chunk(std::vector<std::uint8_t>& out, const char type[4],
                        const std::vector<std::uint8_t>& data) {
    put_u32(out, std::uint32_t(data.size()));
    std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    std::uint32_t crc =
        std::uint32_t(::crc32(0, out.data() + start, uInt(out.size() - start)));
    put_u32(out, crc);
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_rgb8(const std::vector<std::uint8_t>& rgb, int width,
                                             int height) {
    if (rgb.size() != std::size_t(width) * height * 3)
        throw DataError("png encode: buffer size mismatch");
    std::vector<std::uint8_t> raw;
    raw.reserve(std::size_t(height) * (1 + std::size_t(width) * 3));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);  // filter: none
        const std::uint8_t* row = rgb.data() + std::size_t(y) * width * 3;
        raw.insert(raw.end(), row, row + std::size_t(width) * 3);
    }
    uLongf bound = compressBound(uLong(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw DataError("png encode: zlib compress failed");
    compressed.resize(bound);

    std::vector<std::uint8_t> out;
    const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);
    std::vector<std::uint8_t> ihdr;
    detail::put_u32(ihdr, std::uint32_t(width));
    detail::put_u32(ihdr, std::uint32_t(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    detail::write_chunk(out, "IHDR", ihdr);
    detail::write_chunk(out, "IDAT", compressed);
    detail::write_chunk(out, "IEND", {});
    return out;
}

// Returns interleaved RGB8; sets width/height.
inline std::vector<std::uint8_t> decode_rgb8(const std::vector<std::uint8_t>& file, int& width,
                                             int& height) {
    const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
        throw DataError("png decode: bad signature");
    std::size_t pos = 8;
    width = height = 0;
    std::vector<std::uint8_t> idat;
    bool saw_end = false;
    while (pos + 12 <= file.size() && !saw_end) {
        std::uint32_t len = detail::get_u32(file.data() + pos);
        if (pos + 12 + len > file.size()) throw DataError("png decode: truncated chunk");
        std::string type(reinterpret_cast<const char*>(file.data() + pos + 4), 4);
        const std::uint8_t* data = file.data() + pos + 8;
        std::uint32_t want_crc = detail::get_u32(data + len);
        std::uint32_t got_crc =
            std::uint32_t(::crc32(0, file.data() + pos + 4, uInt(len + 4)));
        if (want_crc != got_crc) throw DataError("png decode: crc mismatch in " + type);
        if (type == "IHDR") {
            if (len != 13) throw DataError("png decode: bad IHDR");
            width = int(detail::get_u32(data));
            height = int(detail::get_u32(data + 4));
            if (data[8] != 8 || data[9] != 2 || data[10] != 0 || data[11] != 0 || data[12] != 0)
                throw DataError("png decode: only 8-bit non-interlaced RGB supported");
        } else if (type == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (type == "IEND") {
            saw_end = true;
        }
        pos += 12 + len;
    }
    if (width <= 0 || height <= 0) throw DataError("png decode: missing IHDR");
    if (idat.empty()) throw DataError("png decode: missing IDAT");

    std::size_t stride = std::size_t(width) * 3;
    std::vector<std::uint8_t> raw(std::size_t(height) * (1 + stride));
    uLongf raw_len = uLongf(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw DataError("png decode: zlib inflate failed");

    std::vector<std::uint8_t> rgb(std::size_t(height) * stride);
    for (int y = 0; y < height; ++y) {
        const std::uint8_t* src = raw.data() + std::size_t(y) * (1 + stride);
        std::uint8_t filter = src[0];
        ++src;
        std::uint8_t* dst = rgb.data() + std::size_t(y) * stride;
        const std::uint8_t* up = y > 0 ? rgb.data() + std::size_t(y - 1) * stride : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            int a = i >= 3 ? dst[i - 3] : 0;        // left
            int b = up ? up[i] : 0;                 // above
            int c = (up && i >= 3) ? up[i - 3] : 0; // upper-left
            int x = src[i];
            switch (filter) {
                case 0: dst[i] = std::uint8_t(x); break;
                case 1: dst[i] = std::uint8_t(x + a); break;
                case 2: dst[i] = std::uint8_t(x + b); break;
                case 3: dst[i] = std::uint8_t(x + (a + b) / 2); break;
                case 4: dst[i] = std::uint8_t(x + detail::paeth(a, b, c)); break;
                default: throw DataError("png decode: unknown filter type");
            }
        }
    }
    return rgb;
}

inline std::vector<std::uint8_t> frame_to_rgb8(const Frame& f) {
    if (f.channels != 3) throw DataError("png io expects 3-channel frames");
    std::vector<std::uint8_t> rgb(f.pixels.size());
    for (std::size_t i = 0; i < f.pixels.size(); ++i) {
        double v = std::max(0.0, std::min(1.0, f.pixels[i]));
        rgb[i] = std::uint8_t(std::lround(v * 255.0));
    }
    return rgb;
}

inline Frame frame_from_rgb8(const std::vector<std::uint8_t>& rgb, int w, int h) {
    Frame f = Frame::zeros(h, w, 3);
    for (std::size_t i = 0; i < f.pixels.size(); ++i) f.pixels[i] = rgb[i] / 255.0;
    return f;
}

inline void save_frame(const Frame& f, const std::filesystem::path& path) {
    auto bytes = encode_rgb8(frame_to_rgb8(f), f.width, f.height);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for write: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw DataError("short write: " + path.string());
}

inline Frame load_frame(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    int w = 0, h = 0;
    auto rgb = decode_rgb8(bytes, w, h);
    return frame_from_rgb8(rgb, w, h);
}

}  // namespace moto::png
