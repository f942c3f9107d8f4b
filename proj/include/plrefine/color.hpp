#pragma once

#include <array>
#include <cmath>

#include "plrefine/core.hpp"

namespace plrefine {

using Mat3 = std::array<std::array<double, 3>, 3>;

/// Rotation about the gray axis by `turns` of a full revolution; grays are fixed points.
inline Mat3 hue_rotation(double turns) {
    const double a = turns * 2.0 * 3.14159265358979323846;
    const double c = std::cos(a), s = std::sin(a);
    const double t = (1.0 - c) / 3.0;
    const double r = std::sqrt(1.0 / 3.0) * s;
    return {{{c + t, t - r, t + r}, {t + r, c + t, t - r}, {t - r, t + r, c + t}}};
}

inline float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

/// Hue rotation, then gain, then contrast about 0.5; results clamped to [0,1].
inline void apply_color_transform(ImageBuf& img, double brightness, double contrast, double hue_turns) {
    const bool rotate = hue_turns != 0.0;
    const Mat3 m = hue_rotation(hue_turns);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        float* px = &img.data[p * img.channels];
        double rgb[3] = {px[0], px[1], px[2]};
        if (rotate) {
            double out[3];
            for (int i = 0; i < 3; ++i) out[i] = m[i][0] * rgb[0] + m[i][1] * rgb[1] + m[i][2] * rgb[2];
            for (int i = 0; i < 3; ++i) rgb[i] = out[i];
        }
        for (int i = 0; i < 3; ++i) px[i] = clamp01((rgb[i] * brightness - 0.5) * contrast + 0.5);
    }
}

inline float luminance(const float* px) { return 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2]; }

}  // namespace plrefine
