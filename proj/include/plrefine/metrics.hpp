#pragma once

// Confusion-matrix accumulation and the IoU family.

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "plrefine/core.hpp"

namespace plrefine {

enum class MiouMode {
    kOverAllClasses,  // classes seen in GT or prediction
    kOverPresent,     // classes with at least one GT pixel
};

class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t class_count) : C_(class_count), counts_(class_count * class_count, 0) {}

    std::size_t class_count() const noexcept { return C_; }

    /// Rows are ground truth, columns are prediction.
    std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_.at(gt * C_ + pred); }

    std::uint64_t total() const noexcept {
        std::uint64_t t = 0;
        for (auto v : counts_) t += v;
        return t;
    }

    void accumulate(const LabelMap& gt, const LabelMap& pred) {
        if (!same_dims(gt, pred)) throw ValidationError("confusion matrix: ground truth and prediction dimensions differ");
        for (std::size_t i = 0; i < gt.labels.size(); ++i) {
            const ClassId g = gt.labels[i];
            if (g == kUnlabeled) continue;
            const ClassId p = pred.labels[i];
            if (g >= C_ || p >= C_)
                throw ValidationError("confusion matrix: label out of range at pixel " + std::to_string(i));
            ++counts_[g * C_ + p];
        }
    }

    /// Direct increment; used by tests and by merging code.
    void add(std::size_t gt, std::size_t pred, std::uint64_t n = 1) { counts_.at(gt * C_ + pred) += n; }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        if (o.C_ != C_) throw ValidationError("confusion matrix: class counts differ");
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
        return *this;
    }

    std::uint64_t gt_pixels(std::size_t c) const {
        std::uint64_t s = 0;
        for (std::size_t p = 0; p < C_; ++p) s += at(c, p);
        return s;
    }

    std::uint64_t pred_pixels(std::size_t c) const {
        std::uint64_t s = 0;
        for (std::size_t g = 0; g < C_; ++g) s += at(g, c);
        return s;
    }

    /// TP / (TP + FP + FN); empty when the class is absent from both GT and prediction.
    std::optional<double> iou(std::size_t c) const {
        const std::uint64_t tp = at(c, c);
        const std::uint64_t denom = gt_pixels(c) + pred_pixels(c) - tp;
        if (denom == 0) return std::nullopt;
        return static_cast<double>(tp) / static_cast<double>(denom);
    }

    std::optional<double> miou(MiouMode mode = MiouMode::kOverAllClasses) const {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t c = 0; c < C_; ++c) {
            if (mode == MiouMode::kOverPresent && gt_pixels(c) == 0) continue;
            if (const auto v = iou(c)) {
                sum += *v;
                ++n;
            }
        }
        if (n == 0) return std::nullopt;
        return sum / static_cast<double>(n);
    }

    std::optional<double> pixel_accuracy() const {
        const std::uint64_t t = total();
        if (t == 0) return std::nullopt;
        std::uint64_t diag = 0;
        for (std::size_t c = 0; c < C_; ++c) diag += at(c, c);
        return static_cast<double>(diag) / static_cast<double>(t);
    }

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t C_;
    std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix accumulate(ConfusionMatrix cm, const LabelMap& gt, const LabelMap& pred) {
    cm.accumulate(gt, pred);
    return cm;
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

/// {miou, per_class: [{class, name, iou, pixels}], pixel_accuracy, evaluated_pixels};
/// undefined ratios serialize as null.
inline nlohmann::json metrics_json(const ConfusionMatrix& cm, const ClassCatalog& catalog) {
    nlohmann::json per_class = nlohmann::json::array();
    for (std::size_t c = 0; c < cm.class_count(); ++c)
        per_class.push_back({{"class", c},
                             {"name", c < catalog.size() ? catalog.name(c) : std::to_string(c)},
                             {"iou", optional_json(cm.iou(c))},
                             {"pixels", cm.gt_pixels(c)}});
    return {{"miou", optional_json(cm.miou())},
            {"per_class", per_class},
            {"pixel_accuracy", optional_json(cm.pixel_accuracy())},
            {"evaluated_pixels", cm.total()}};
}

}  // namespace plrefine
