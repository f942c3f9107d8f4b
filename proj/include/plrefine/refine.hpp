#pragma once

// Pseudo-label refinement: per-class connected components, size filtering,
// point prompting of a class-agnostic segmenter, and conflict-aware
// aggregation of the returned masks.

#include <cstdint>
#include <vector>

#include "plrefine/core.hpp"
#include "plrefine/maskops.hpp"
#include "plrefine/segmenter.hpp"

namespace plrefine {

struct RefinementReport {
    std::vector<std::uint64_t> components_found;     // per class
    std::vector<std::uint64_t> components_filtered;  // per class, area < tau
    std::vector<std::uint64_t> components_prompted;  // per class
    std::uint64_t overlap_pixels = 0;                // covered by >= 2 classes
    std::uint64_t unlabeled_pixels = 0;

    std::uint64_t total_found() const noexcept { return sum(components_found); }
    std::uint64_t total_filtered() const noexcept { return sum(components_filtered); }
    std::uint64_t total_prompted() const noexcept { return sum(components_prompted); }

    /// Element-wise sum, for aggregating reports over a batch of images.
    RefinementReport& operator+=(const RefinementReport& o) {
        auto add = [](std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
            if (a.size() < b.size()) a.resize(b.size(), 0);
            for (std::size_t i = 0; i < b.size(); ++i) a[i] += b[i];
        };
        add(components_found, o.components_found);
        add(components_filtered, o.components_filtered);
        add(components_prompted, o.components_prompted);
        overlap_pixels += o.overlap_pixels;
        unlabeled_pixels += o.unlabeled_pixels;
        return *this;
    }

private:
    static std::uint64_t sum(const std::vector<std::uint64_t>& v) noexcept {
        std::uint64_t s = 0;
        for (auto x : v) s += x;
        return s;
    }
};

struct RefinementResult {
    LabelMap refined;
    RefinementReport report;
    std::vector<BinaryMask> class_masks;  // union of returned masks per class
};

struct RefineParams {
    std::uint64_t tau = 4;
    std::uint64_t k = 1;
};

/// Distinct pixel indices drawn uniformly without replacement from `pixels`
/// (Floyd's algorithm; order of draws is the order returned).
inline std::vector<std::uint32_t> sample_without_replacement(const std::vector<std::uint32_t>& pixels,
                                                             std::uint64_t count, RngStream& rng) {
    const std::uint64_t n = pixels.size();
    count = std::min(count, n);
    std::vector<std::uint32_t> chosen_slots;
    chosen_slots.reserve(count);
    for (std::uint64_t j = n - count; j < n; ++j) {
        const auto t = static_cast<std::uint32_t>(rng.below(j + 1));
        const bool taken = std::find(chosen_slots.begin(), chosen_slots.end(), t) != chosen_slots.end();
        chosen_slots.push_back(taken ? static_cast<std::uint32_t>(j) : t);
    }
    std::vector<std::uint32_t> out;
    out.reserve(count);
    for (auto s : chosen_slots) out.push_back(pixels[s]);
    return out;
}

/// UNLABELED pixels in `pseudo_labels` belong to no class and are never
/// prompted.
inline RefinementResult refine_pseudo_labels(const ImageBuf& image, const LabelMap& pseudo_labels,
                                             const LabelMap& hidden_gt, const SegmenterKind& segmenter,
                                             const RefineParams& params, std::size_t class_count, RngStream& rng) {
    if (!same_dims(image, pseudo_labels) || !same_dims(pseudo_labels, hidden_gt))
        throw ValidationError("refine_pseudo_labels: image, pseudo labels and ground truth dimensions differ");
    if (params.k < 1) throw ValidationError("refine_pseudo_labels: k must be >= 1");
    for (std::size_t i = 0; i < pseudo_labels.labels.size(); ++i)
        if (pseudo_labels.labels[i] >= class_count && pseudo_labels.labels[i] != kUnlabeled)
            throw ValidationError("refine_pseudo_labels: pseudo label " + std::to_string(pseudo_labels.labels[i]) +
                                  " at pixel " + std::to_string(i) + " is not a class id");
    validate_segmenter(segmenter);

    const int W = pseudo_labels.width;
    const std::size_t N = pseudo_labels.pixel_count();
    RefinementResult result;
    result.report.components_found.assign(class_count, 0);
    result.report.components_filtered.assign(class_count, 0);
    result.report.components_prompted.assign(class_count, 0);
    result.class_masks.assign(class_count, BinaryMask(pseudo_labels.width, pseudo_labels.height));

    std::vector<std::uint32_t> start;
    std::vector<std::uint32_t> pixels;
    for (std::size_t c = 0; c < class_count; ++c) {
        const BinaryMask mask = extract_class_mask(pseudo_labels, static_cast<ClassId>(c), class_count);
        const ComponentLabeling all = connected_components(mask);
        const ComponentLabeling kept = filter_components(all, params.tau);
        result.report.components_found[c] = all.count;
        result.report.components_filtered[c] = all.count - kept.count;
        result.report.components_prompted[c] = kept.count;
        if (kept.count == 0) continue;

        // Bucket pixel indices by component (counting sort keeps raster order).
        start.assign(kept.count + 2, 0);
        for (auto id : kept.ids)
            if (id) ++start[id + 1];
        for (std::uint32_t id = 1; id <= kept.count + 1; ++id) start[id] += start[id - 1];
        pixels.assign(start[kept.count + 1], 0);
        {
            std::vector<std::uint32_t> cursor(start.begin(), start.end());
            for (std::size_t i = 0; i < N; ++i)
                if (kept.ids[i]) pixels[cursor[kept.ids[i]]++] = static_cast<std::uint32_t>(i);
        }

        BinaryMask& acc = result.class_masks[c];
        for (std::uint32_t id = 1; id <= kept.count; ++id) {
            const std::vector<std::uint32_t> members(pixels.begin() + start[id], pixels.begin() + start[id + 1]);
            const auto picks = sample_without_replacement(members, params.k, rng);
            std::vector<PointPrompt> points;
            points.reserve(picks.size());
            for (auto p : picks)
                points.push_back({static_cast<int>(p % W), static_cast<int>(p / W), static_cast<ClassId>(c)});
            const BinaryMask returned = segment_at_points(image, hidden_gt, points, segmenter, rng);
            for (std::size_t i = 0; i < N; ++i) acc.bits[i] |= returned.bits[i];
        }
    }

    result.refined = LabelMap(pseudo_labels.width, pseudo_labels.height, kUnlabeled);
    for (std::size_t i = 0; i < N; ++i) {
        int covering = 0;
        ClassId owner = kUnlabeled;
        for (std::size_t c = 0; c < class_count; ++c)
            if (result.class_masks[c].bits[i]) {
                ++covering;
                owner = static_cast<ClassId>(c);
            }
        if (covering == 1) result.refined.labels[i] = owner;
        else {
            if (covering >= 2) ++result.report.overlap_pixels;
            ++result.report.unlabeled_pixels;
        }
    }
    return result;
}

inline nlohmann::json report_json(const RefinementReport& r) {
    return {{"components_found", r.components_found},
            {"components_filtered", r.components_filtered},
            {"components_prompted", r.components_prompted},
            {"overlap_pixels", r.overlap_pixels},
            {"unlabeled_pixels", r.unlabeled_pixels}};
}

}  // namespace plrefine
