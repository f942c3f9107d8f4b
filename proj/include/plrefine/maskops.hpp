#pragma once

// Binary masks, mask algebra and 4-connected component labeling
// (union-find, two raster passes in the Hoshen-Kopelman style).

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "plrefine/core.hpp"

namespace plrefine {

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  // 0 or 1, row-major

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false)
        : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

    std::size_t pixel_count() const noexcept { return bits.size(); }
    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }

    bool operator==(const BinaryMask&) const = default;
};

struct ComponentLabeling {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> ids;    // 0 = background, components 1..count
    std::uint32_t count = 0;
    std::vector<std::size_t> areas;    // areas[id - 1]

    std::size_t total_area() const noexcept { return std::accumulate(areas.begin(), areas.end(), std::size_t{0}); }
    bool operator==(const ComponentLabeling&) const = default;
};

namespace detail {

inline void require_same_dims(const BinaryMask& a, const BinaryMask& b, const char* op) {
    if (a.width != b.width || a.height != b.height)
        throw ValidationError(std::string(op) + ": mask dimensions differ (" + std::to_string(a.width) + "x" +
                              std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                              std::to_string(b.height) + ")");
}

class UnionFind {
public:
    std::uint32_t make() {
        parent_.push_back(static_cast<std::uint32_t>(parent_.size()));
        size_.push_back(1);
        return parent_.back();
    }

    std::uint32_t find(std::uint32_t x) {
        std::uint32_t root = x;
        while (parent_[root] != root) root = parent_[root];
        while (parent_[x] != root) {
            const std::uint32_t next = parent_[x];
            parent_[x] = root;
            x = next;
        }
        return root;
    }

    void unite(std::uint32_t a, std::uint32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (size_[a] < size_[b]) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
    }

private:
    std::vector<std::uint32_t> parent_;
    std::vector<std::uint32_t> size_;
};

}  // namespace detail

inline BinaryMask extract_class_mask(const LabelMap& map, ClassId cls, std::size_t class_count) {
    if (cls >= class_count)
        throw ValidationError("extract_class_mask: class " + std::to_string(cls) + " outside [0," +
                              std::to_string(class_count) + ")");
    BinaryMask m(map.width, map.height);
    for (std::size_t i = 0; i < map.labels.size(); ++i) m.bits[i] = map.labels[i] == cls ? 1 : 0;
    return m;
}

inline std::size_t mask_area(const BinaryMask& a) noexcept {
    std::size_t n = 0;
    for (auto b : a.bits) n += b;
    return n;
}

inline BinaryMask mask_intersect(const BinaryMask& a, const BinaryMask& b) {
    detail::require_same_dims(a, b, "mask_intersect");
    BinaryMask out(a.width, a.height);
    for (std::size_t i = 0; i < a.bits.size(); ++i) out.bits[i] = a.bits[i] & b.bits[i];
    return out;
}

inline BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
    detail::require_same_dims(a, b, "mask_union");
    BinaryMask out(a.width, a.height);
    for (std::size_t i = 0; i < a.bits.size(); ++i) out.bits[i] = a.bits[i] | b.bits[i];
    return out;
}

inline BinaryMask mask_complement(const BinaryMask& a) {
    BinaryMask out(a.width, a.height);
    for (std::size_t i = 0; i < a.bits.size(); ++i) out.bits[i] = a.bits[i] ^ 1;
    return out;
}

/// 4-connected labeling. Ids follow raster order of each component's first pixel.
inline ComponentLabeling connected_components(const BinaryMask& mask) {
    const int W = mask.width, H = mask.height;
    ComponentLabeling out;
    out.width = W;
    out.height = H;
    out.ids.assign(mask.bits.size(), 0);

    // First pass: provisional labels, merging with left and upper neighbours.
    detail::UnionFind uf;
    std::vector<std::uint32_t> provisional(mask.bits.size(), 0);
    constexpr std::uint32_t kNone = 0xFFFFFFFFu;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * W + x;
            if (!mask.bits[i]) {
                provisional[i] = kNone;
                continue;
            }
            const std::uint32_t left = (x > 0 && mask.bits[i - 1]) ? provisional[i - 1] : kNone;
            const std::uint32_t up = (y > 0 && mask.bits[i - W]) ? provisional[i - W] : kNone;
            if (left == kNone && up == kNone) {
                provisional[i] = uf.make();
            } else if (left != kNone && up != kNone) {
                provisional[i] = left;
                uf.unite(left, up);
            } else {
                provisional[i] = left != kNone ? left : up;
            }
        }
    }

    // Second pass: compact ids in raster order of first appearance.
    std::vector<std::uint32_t> root_to_id;
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        if (!mask.bits[i]) continue;
        const std::uint32_t root = uf.find(provisional[i]);
        if (root >= root_to_id.size()) root_to_id.resize(root + 1, 0);
        std::uint32_t& id = root_to_id[root];
        if (id == 0) {
            id = ++out.count;
            out.areas.push_back(0);
        }
        out.ids[i] = id;
        ++out.areas[id - 1];
    }
    return out;
}

/// Removes components with area < tau and renumbers survivors 1..M' in order.
inline ComponentLabeling filter_components(const ComponentLabeling& labeling, std::uint64_t tau) {
    ComponentLabeling out;
    out.width = labeling.width;
    out.height = labeling.height;
    out.ids.assign(labeling.ids.size(), 0);
    std::vector<std::uint32_t> remap(labeling.count + 1, 0);
    for (std::uint32_t id = 1; id <= labeling.count; ++id) {
        if (labeling.areas[id - 1] >= tau) {
            remap[id] = ++out.count;
            out.areas.push_back(labeling.areas[id - 1]);
        }
    }
    for (std::size_t i = 0; i < labeling.ids.size(); ++i) out.ids[i] = remap[labeling.ids[i]];
    return out;
}

inline BinaryMask component_mask(const ComponentLabeling& labeling, std::uint32_t id) {
    BinaryMask m(labeling.width, labeling.height);
    for (std::size_t i = 0; i < labeling.ids.size(); ++i) m.bits[i] = labeling.ids[i] == id ? 1 : 0;
    return m;
}

/// Chessboard distance from each pixel to the nearest pixel of opposite
/// membership. Pixels outside the image do not count as opposite. When the
/// mask is uniform every entry is `kFar`.
inline std::vector<int> opposite_distance(const BinaryMask& mask) {
    constexpr int kFar = 1 << 29;
    const int W = mask.width, H = mask.height;
    std::vector<int> dist(mask.bits.size(), kFar);
    auto idx = [W](int x, int y) { return static_cast<std::size_t>(y) * W + x; };

    // Seed: pixels with an 8-neighbour of opposite membership are at distance 1.
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const auto v = mask.bits[idx(x, y)];
            for (int dy = -1; dy <= 1 && dist[idx(x, y)] == kFar; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
                    if (mask.bits[idx(nx, ny)] != v) {
                        dist[idx(x, y)] = 1;
                        break;
                    }
                }
        }

    // Chamfer propagation through same-membership neighbours, repeated until
    // no distance changes.
    bool changed = true;
    auto relax = [&](int x, int y, int nx, int ny) {
        if (nx < 0 || ny < 0 || nx >= W || ny >= H) return;
        if (mask.bits[idx(nx, ny)] != mask.bits[idx(x, y)]) return;
        const int cand = dist[idx(nx, ny)] + 1;
        if (cand < dist[idx(x, y)]) {
            dist[idx(x, y)] = cand;
            changed = true;
        }
    };
    while (changed) {
        changed = false;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                relax(x, y, x - 1, y);
                relax(x, y, x - 1, y - 1);
                relax(x, y, x, y - 1);
                relax(x, y, x + 1, y - 1);
            }
        for (int y = H - 1; y >= 0; --y)
            for (int x = W - 1; x >= 0; --x) {
                relax(x, y, x + 1, y);
                relax(x, y, x + 1, y + 1);
                relax(x, y, x, y + 1);
                relax(x, y, x - 1, y + 1);
            }
    }
    return dist;
}

}  // namespace plrefine
