#pragma once

// Binary PNM reading and writing: P6 for RGB images, P5 for label maps.
// Only maxval 255 is accepted. Header comments are skipped on read and never
// written.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "plrefine/core.hpp"

namespace plrefine {

inline std::uint8_t to_byte(float v) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

inline float from_byte(std::uint8_t b) { return static_cast<float>(b) / 255.0f; }

/// Rounds every channel to the nearest representable 8-bit value.
inline ImageBuf quantize(const ImageBuf& img) {
    ImageBuf out = img;
    for (auto& v : out.data) v = from_byte(to_byte(v));
    return out;
}

namespace detail {

struct PnmHeader {
    char kind = 0;  // '5' or '6'
    int width = 0;
    int height = 0;
};

inline PnmHeader parse_pnm_header(const std::string& bytes, std::size_t& pos, const std::string& name) {
    auto fail = [&](const std::string& why) -> PnmHeader { throw IoError(name + ": " + why); };
    if (bytes.size() < 2 || bytes[0] != 'P') return fail("not a binary PNM file");
    PnmHeader h;
    h.kind = bytes[1];
    if (h.kind != '5' && h.kind != '6') return fail(std::string("unsupported PNM type P") + bytes[1]);
    pos = 2;
    auto next_int = [&]() -> long {
        for (;;) {
            while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n' && bytes[pos] != '\r') ++pos;
                continue;
            }
            break;
        }
        if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos])))
            throw IoError(name + ": malformed PNM header");
        long v = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1'000'000) throw IoError(name + ": PNM header value too large");
            ++pos;
        }
        return v;
    };
    const long w = next_int(), hh = next_int(), maxval = next_int();
    if (w <= 0 || hh <= 0) return fail("PNM dimensions must be positive");
    if (maxval != 255) return fail("PNM maxval " + std::to_string(maxval) + " is not 255");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        return fail("malformed PNM header");
    ++pos;  // single whitespace byte before the raster
    h.width = static_cast<int>(w);
    h.height = static_cast<int>(hh);
    return h;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed for '" + path + "'");
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace detail

inline std::string encode_ppm(const ImageBuf& img) {
    if (img.channels != 3) throw ValidationError("PPM output needs a 3-channel image");
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) out[header + i] = static_cast<char>(to_byte(img.data[i]));
    return out;
}

inline std::string encode_pgm(const LabelMap& map) {
    std::string out = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(map.labels.data()), map.labels.size());
    return out;
}

inline ImageBuf decode_ppm(const std::string& bytes, const std::string& name = "<memory>") {
    std::size_t pos = 0;
    const detail::PnmHeader h = detail::parse_pnm_header(bytes, pos, name);
    if (h.kind != '6') throw IoError(name + ": expected a P6 image");
    const std::size_t n = static_cast<std::size_t>(h.width) * h.height * 3;
    if (bytes.size() - pos < n) throw IoError(name + ": truncated raster");
    ImageBuf img(h.width, h.height, 3);
    for (std::size_t i = 0; i < n; ++i) img.data[i] = from_byte(static_cast<std::uint8_t>(bytes[pos + i]));
    return img;
}

inline LabelMap decode_pgm(const std::string& bytes, const std::string& name = "<memory>") {
    std::size_t pos = 0;
    const detail::PnmHeader h = detail::parse_pnm_header(bytes, pos, name);
    if (h.kind != '5') throw IoError(name + ": expected a P5 label map");
    const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
    if (bytes.size() - pos < n) throw IoError(name + ": truncated raster");
    LabelMap map(h.width, h.height);
    for (std::size_t i = 0; i < n; ++i) map.labels[i] = static_cast<ClassId>(static_cast<std::uint8_t>(bytes[pos + i]));
    return map;
}

inline void write_ppm(const std::string& path, const ImageBuf& img) { detail::write_file(path, encode_ppm(img)); }
inline void write_pgm(const std::string& path, const LabelMap& map) { detail::write_file(path, encode_pgm(map)); }
inline ImageBuf read_ppm(const std::string& path) { return decode_ppm(detail::read_file(path), path); }
inline LabelMap read_pgm(const std::string& path) { return decode_pgm(detail::read_file(path), path); }

}  // namespace plrefine
