#pragma once

// Promptable segmentation stand-ins. They read the hidden ground-truth label
// map of an image and answer point prompts with class-agnostic masks.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "plrefine/core.hpp"
#include "plrefine/maskops.hpp"

namespace plrefine {

struct PointPrompt {
    int x = 0;
    int y = 0;
    ClassId claimed_class = 0;  // ignored by every segmenter kind
};

/// Returns the exact 4-connected ground-truth region under each point.
struct PerfectOracle {};

/// Perfect mask followed by boundary perturbation confined to the band of
/// pixels within chessboard distance `radius` of the region boundary.
struct NoisyOracle {
    int radius = 1;
    double flip_rate = 0.0;
};

/// Always answers with the same mask; `std::nullopt` means an empty mask of
/// the image's size.
struct ConstantMask {
    std::optional<BinaryMask> mask;
};

using SegmenterKind = std::variant<PerfectOracle, NoisyOracle, ConstantMask>;

inline void validate_segmenter(const SegmenterKind& kind) {
    if (const auto* n = std::get_if<NoisyOracle>(&kind)) {
        if (n->radius < 0) throw ValidationError("noisy oracle: radius must be >= 0");
        if (!(n->flip_rate >= 0.0 && n->flip_rate <= 1.0))
            throw ValidationError("noisy oracle: flip rate must lie in [0,1]");
    }
}

inline std::string segmenter_name(const SegmenterKind& kind) {
    if (std::holds_alternative<PerfectOracle>(kind)) return "perfect";
    if (const auto* n = std::get_if<NoisyOracle>(&kind))
        return "noisy(r=" + std::to_string(n->radius) + ",flip=" + std::to_string(n->flip_rate) + ")";
    return "constant";
}

namespace detail {

/// Flood-fills the 4-connected region of equal label containing (sx, sy) into `out`.
inline void fill_gt_region(const LabelMap& gt, int sx, int sy, BinaryMask& out, std::vector<int>& stack) {
    const int W = gt.width, H = gt.height;
    const ClassId label = gt.at(sx, sy);
    stack.clear();
    stack.push_back(sy * W + sx);
    out.bits[static_cast<std::size_t>(sy) * W + sx] = 1;
    while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int x = p % W, y = p / W;
        const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
        for (const auto& n : nb) {
            if (n[0] < 0 || n[1] < 0 || n[0] >= W || n[1] >= H) continue;
            const std::size_t q = static_cast<std::size_t>(n[1]) * W + n[0];
            if (out.bits[q] || gt.labels[q] != label) continue;
            out.bits[q] = 1;
            stack.push_back(static_cast<int>(q));
        }
    }
}

inline BinaryMask perturb_boundary(const BinaryMask& perfect, const NoisyOracle& noise, RngStream& rng) {
    if (noise.radius == 0) return perfect;
    const int W = perfect.width, H = perfect.height;
    BinaryMask out = perfect;
    auto idx = [W](int x, int y) { return static_cast<std::size_t>(y) * W + x; };

    // Every pixel with a 4-neighbour of opposite membership may pull a square
    // of radius s-1 around itself over to the other side. Such a square stays
    // within chessboard distance s of the original boundary.
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const std::uint8_t inside = perfect.bits[idx(x, y)];
            const bool on_boundary = (x > 0 && perfect.bits[idx(x - 1, y)] != inside) ||
                                     (x + 1 < W && perfect.bits[idx(x + 1, y)] != inside) ||
                                     (y > 0 && perfect.bits[idx(x, y - 1)] != inside) ||
                                     (y + 1 < H && perfect.bits[idx(x, y + 1)] != inside);
            if (!on_boundary) continue;
            const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(noise.radius) + 1));
            const bool act = rng.bernoulli(0.5);
            if (s == 0 || !act) continue;
            const int reach = s - 1;
            const std::uint8_t value = inside ? 0 : 1;
            for (int dy = -reach; dy <= reach; ++dy)
                for (int dx = -reach; dx <= reach; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
                    if (perfect.bits[idx(nx, ny)] == inside) out.bits[idx(nx, ny)] = value;
                }
        }

    if (noise.flip_rate > 0.0) {
        const std::vector<int> dist = opposite_distance(perfect);
        for (std::size_t i = 0; i < out.bits.size(); ++i)
            if (dist[i] <= noise.radius && rng.bernoulli(noise.flip_rate)) out.bits[i] ^= 1;
    }
    return out;
}

}  // namespace detail

/// Class-agnostic mask for a joint set of point prompts. Multiple points
/// return the union of the regions they hit.
inline BinaryMask segment_at_points(const ImageBuf& image, const LabelMap& hidden_gt,
                                    const std::vector<PointPrompt>& points, const SegmenterKind& kind,
                                    RngStream& rng) {
    if (!same_dims(image, hidden_gt))
        throw ValidationError("segment_at_points: image and ground truth dimensions differ");
    if (points.empty()) throw ValidationError("segment_at_points: empty point list");
    for (const auto& p : points)
        if (p.x < 0 || p.y < 0 || p.x >= image.width || p.y >= image.height)
            throw ValidationError("segment_at_points: point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                                  ") outside " + std::to_string(image.width) + "x" +
                                  std::to_string(image.height) + " image");

    if (const auto* c = std::get_if<ConstantMask>(&kind)) {
        if (!c->mask) return BinaryMask(image.width, image.height);
        if (c->mask->width != image.width || c->mask->height != image.height)
            throw ValidationError("segment_at_points: constant mask dimensions differ from image");
        return *c->mask;
    }

    BinaryMask perfect(image.width, image.height);
    std::vector<int> stack;
    for (const auto& p : points)
        if (!perfect.at(p.x, p.y)) detail::fill_gt_region(hidden_gt, p.x, p.y, perfect, stack);

    if (const auto* n = std::get_if<NoisyOracle>(&kind)) {
        validate_segmenter(kind);
        return detail::perturb_boundary(perfect, *n, rng);
    }
    return perfect;
}

}  // namespace plrefine
