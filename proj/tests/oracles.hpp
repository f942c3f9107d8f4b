#pragma once

// Independent reference implementations used as test oracles. They favour
// obviousness over speed.

#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <vector>

#include "plrefine/core.hpp"
#include "plrefine/maskops.hpp"

namespace oracle {

/// Breadth-first flood fill; component ids in raster order of first pixel.
inline std::vector<std::uint32_t> flood_fill_components(const plrefine::BinaryMask& m, std::uint32_t& count) {
    const int W = m.width, H = m.height;
    std::vector<std::uint32_t> ids(m.bits.size(), 0);
    count = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (!m.at(x, y) || ids[y * W + x]) continue;
            ++count;
            std::queue<std::pair<int, int>> q;
            q.push({x, y});
            ids[y * W + x] = count;
            while (!q.empty()) {
                auto [cx, cy] = q.front();
                q.pop();
                const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    const int nx = cx + dx[k], ny = cy + dy[k];
                    if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
                    if (!m.at(nx, ny) || ids[ny * W + nx]) continue;
                    ids[ny * W + nx] = count;
                    q.push({nx, ny});
                }
            }
        }
    return ids;
}

/// True when two labelings induce the same partition of the foreground.
inline bool same_partition(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
    if (a.size() != b.size()) return false;
    std::map<std::uint32_t, std::uint32_t> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] == 0) != (b[i] == 0)) return false;
        if (a[i] == 0) continue;
        auto [it1, new1] = ab.emplace(a[i], b[i]);
        auto [it2, new2] = ba.emplace(b[i], a[i]);
        if (it1->second != b[i] || it2->second != a[i]) return false;
    }
    return true;
}

/// Chessboard distance from each pixel to the nearest pixel of opposite
/// membership, by exhaustive search; `far` when none exists.
inline std::vector<int> brute_opposite_distance(const plrefine::BinaryMask& m, int far) {
    const int W = m.width, H = m.height;
    std::vector<int> d(m.bits.size(), far);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int v = 0; v < H; ++v)
                for (int u = 0; u < W; ++u)
                    if (m.at(u, v) != m.at(x, y)) {
                        const int dist = std::max(std::abs(u - x), std::abs(v - y));
                        d[y * W + x] = std::min(d[y * W + x], dist);
                    }
    return d;
}

/// Confusion counts by a plain double loop over classes and pixels.
inline std::vector<std::vector<std::uint64_t>> naive_confusion(const plrefine::LabelMap& gt,
                                                               const plrefine::LabelMap& pred, std::size_t C) {
    std::vector<std::vector<std::uint64_t>> cm(C, std::vector<std::uint64_t>(C, 0));
    for (std::size_t g = 0; g < C; ++g)
        for (std::size_t p = 0; p < C; ++p)
            for (std::size_t i = 0; i < gt.labels.size(); ++i)
                if (gt.labels[i] == g && pred.labels[i] == p) ++cm[g][p];
    return cm;
}

/// Subset noise: every class region is eroded `iterations` times (a pixel
/// survives when its in-image 4-neighbours share its label), then surviving
/// pixels are dropped with probability `drop_rate`. Removed pixels become
/// UNLABELED, so each remaining component lies inside a same-class GT region.
inline plrefine::LabelMap subset_noise(const plrefine::LabelMap& gt, int iterations, double drop_rate,
                                       plrefine::RngStream& rng) {
    const int W = gt.width, H = gt.height;
    plrefine::LabelMap pl = gt;
    for (int it = 0; it < iterations; ++it) {
        const plrefine::LabelMap prev = pl;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const auto v = prev.at(x, y);
                const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    const int nx = x + dx[k], ny = y + dy[k];
                    if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
                    if (prev.at(nx, ny) != v) pl.at(x, y) = plrefine::kUnlabeled;
                }
            }
    }
    for (auto& v : pl.labels)
        if (v != plrefine::kUnlabeled && rng.bernoulli(drop_rate)) v = plrefine::kUnlabeled;
    return pl;
}

/// Rectangles of random classes painted over background.
inline plrefine::LabelMap random_rect_scene(int w, int h, int rects, std::size_t classes, plrefine::RngStream& rng) {
    plrefine::LabelMap gt(w, h, 0);
    for (int r = 0; r < rects; ++r) {
        const int rw = 1 + static_cast<int>(rng.below(w / 2)), rh = 1 + static_cast<int>(rng.below(h / 2));
        const int x0 = static_cast<int>(rng.below(w - rw + 1)), y0 = static_cast<int>(rng.below(h - rh + 1));
        const auto c = static_cast<plrefine::ClassId>(rng.below(classes));
        for (int y = y0; y < y0 + rh; ++y)
            for (int x = x0; x < x0 + rw; ++x) gt.at(x, y) = c;
    }
    return gt;
}

inline plrefine::BinaryMask random_mask(int w, int h, double density, plrefine::RngStream& rng) {
    plrefine::BinaryMask m(w, h);
    for (auto& b : m.bits) b = rng.bernoulli(density) ? 1 : 0;
    return m;
}

}  // namespace oracle
