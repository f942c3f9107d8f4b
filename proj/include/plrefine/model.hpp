#pragma once

// Segmentation model stand-in: a frozen hand-crafted per-pixel feature
// extractor followed by a trainable linear softmax head, with the
// cross-entropy + dice + class-presence loss stack and analytic gradients.

#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "plrefine/color.hpp"
#include "plrefine/core.hpp"

namespace plrefine {

inline constexpr int kFeatureDim = 8;

struct FeatureMap {
    int width = 0;
    int height = 0;
    int dim = kFeatureDim;
    std::vector<double> values;  // row-major, `dim` values per pixel

    const double* pixel(std::size_t i) const { return &values[i * dim]; }
};

/// Channels: r, g, b, x/(W-1), y/(H-1), 3x3 luminance mean, 3x3 luminance
/// standard deviation, constant 1. Borders clamp to the nearest edge pixel.
inline FeatureMap extract_features(const ImageBuf& image) {
    if (image.channels != 3) throw ValidationError("extract_features: expected a 3-channel image");
    const int W = image.width, H = image.height;
    FeatureMap f;
    f.width = W;
    f.height = H;
    f.values.assign(image.pixel_count() * kFeatureDim, 0.0);

    std::vector<double> lum(image.pixel_count());
    for (std::size_t p = 0; p < lum.size(); ++p) lum[p] = luminance(&image.data[p * 3]);

    const double sx = W > 1 ? 1.0 / (W - 1) : 0.0;
    const double sy = H > 1 ? 1.0 / (H - 1) : 0.0;
    double window[9];
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * W + x;
            double* out = &f.values[p * kFeatureDim];
            out[0] = image.data[p * 3 + 0];
            out[1] = image.data[p * 3 + 1];
            out[2] = image.data[p * 3 + 2];
            out[3] = x * sx;
            out[4] = y * sy;
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int cx = std::clamp(x + dx, 0, W - 1), cy = std::clamp(y + dy, 0, H - 1);
                    window[n++] = lum[static_cast<std::size_t>(cy) * W + cx];
                }
            double mean = 0.0;
            for (double v : window) mean += v;
            mean /= 9.0;
            double var = 0.0;
            for (double v : window) var += (v - mean) * (v - mean);
            out[5] = mean;
            out[6] = std::sqrt(var / 9.0);
            out[7] = 1.0;
        }
    return f;
}

// ---------------------------------------------------------------------------
// Parameters

struct ModelParams {
    std::size_t classes = 0;
    std::size_t dim = 0;
    std::vector<double> W;    // classes x dim, row-major
    std::vector<double> b;    // classes
    std::vector<double> mix;  // dim x dim backbone mix, identity unless finetuned

    static ModelParams zeros(std::size_t C, std::size_t D = kFeatureDim) {
        ModelParams p;
        p.classes = C;
        p.dim = D;
        p.W.assign(C * D, 0.0);
        p.b.assign(C, 0.0);
        p.mix.assign(D * D, 0.0);
        for (std::size_t i = 0; i < D; ++i) p.mix[i * D + i] = 1.0;
        return p;
    }

    /// Same shape, every entry zero (including the mix block).
    ModelParams zeros_like() const {
        ModelParams g = *this;
        std::fill(g.W.begin(), g.W.end(), 0.0);
        std::fill(g.b.begin(), g.b.end(), 0.0);
        std::fill(g.mix.begin(), g.mix.end(), 0.0);
        return g;
    }

    bool same_shape(const ModelParams& o) const noexcept {
        return classes == o.classes && dim == o.dim && W.size() == o.W.size() && b.size() == o.b.size() &&
               mix.size() == o.mix.size();
    }

    bool mix_is_identity() const noexcept {
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = 0; j < dim; ++j)
                if (mix[i * dim + j] != (i == j ? 1.0 : 0.0)) return false;
        return true;
    }

    template <class F>
    void for_each_block(F&& f) {
        f(W);
        f(b);
        f(mix);
    }

    bool operator==(const ModelParams&) const = default;
};

struct ProbMap {
    int width = 0;
    int height = 0;
    std::size_t classes = 0;
    std::vector<double> p;  // row-major, `classes` probabilities per pixel

    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
};

namespace detail {

inline void mixed_features(const ModelParams& params, const double* phi, double* out, bool identity) {
    const std::size_t D = params.dim;
    if (identity) {
        for (std::size_t d = 0; d < D; ++d) out[d] = phi[d];
        return;
    }
    for (std::size_t i = 0; i < D; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < D; ++j) s += params.mix[i * D + j] * phi[j];
        out[i] = s;
    }
}

}  // namespace detail

/// Raw logits W * (mix * phi) + b per pixel.
inline std::vector<double> compute_logits(const ModelParams& params, const FeatureMap& feats) {
    if (static_cast<std::size_t>(feats.dim) != params.dim)
        throw ValidationError("forward: feature dimension " + std::to_string(feats.dim) +
                              " does not match parameter dimension " + std::to_string(params.dim));
    const std::size_t C = params.classes, D = params.dim;
    const std::size_t N = static_cast<std::size_t>(feats.width) * feats.height;
    const bool identity = params.mix_is_identity();
    std::vector<double> logits(N * C);
    std::vector<double> phi(D);
    for (std::size_t i = 0; i < N; ++i) {
        detail::mixed_features(params, feats.pixel(i), phi.data(), identity);
        for (std::size_t c = 0; c < C; ++c) {
            double z = params.b[c];
            const double* w = &params.W[c * D];
            for (std::size_t d = 0; d < D; ++d) z += w[d] * phi[d];
            logits[i * C + c] = z;
        }
    }
    return logits;
}

/// Max-subtracted per-pixel softmax over `classes` logits per pixel.
inline ProbMap softmax(const std::vector<double>& logits, int width, int height, std::size_t classes) {
    ProbMap out;
    out.width = width;
    out.height = height;
    out.classes = classes;
    out.p.resize(logits.size());
    const std::size_t N = static_cast<std::size_t>(width) * height;
    for (std::size_t i = 0; i < N; ++i) {
        const double* z = &logits[i * classes];
        double* q = &out.p[i * classes];
        double m = z[0];
        for (std::size_t c = 1; c < classes; ++c) m = std::max(m, z[c]);
        double s = 0.0;
        for (std::size_t c = 0; c < classes; ++c) s += (q[c] = std::exp(z[c] - m));
        for (std::size_t c = 0; c < classes; ++c) q[c] /= s;
    }
    return out;
}

inline ProbMap forward(const ModelParams& params, const FeatureMap& feats) {
    return softmax(compute_logits(params, feats), feats.width, feats.height, params.classes);
}

/// Per-pixel argmax; ties resolve to the lowest class id.
inline LabelMap argmax_labels(const ProbMap& probs) {
    LabelMap out(probs.width, probs.height);
    for (std::size_t i = 0; i < probs.pixel_count(); ++i) {
        const double* q = &probs.p[i * probs.classes];
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.classes; ++c)
            if (q[c] > q[best]) best = c;
        out.labels[i] = static_cast<ClassId>(best);
    }
    return out;
}

inline LabelMap predict(const ModelParams& params, const ImageBuf& image) {
    return argmax_labels(forward(params, extract_features(image)));
}

// ---------------------------------------------------------------------------
// Losses

struct LossWeights {
    double ce = 1.0;
    double dice = 1.0;
    double cls = 1.0;
};

struct LossResult {
    double total = 0.0;
    double ce = 0.0;
    double dice = 0.0;
    double cls = 0.0;
    std::size_t labeled_pixels = 0;
    std::vector<double> grad_logits;  // dL/dz, same layout as ProbMap::p
};

inline constexpr double kDiceSmooth = 1.0;
inline constexpr double kPresenceClamp = 1e-7;

/// L = w.ce * CE + w.dice * Dice + w.cls * presence-BCE over labeled pixels,
/// with the gradient taken with respect to the logits that produced `probs`.
inline LossResult loss_and_grad(const ProbMap& probs, const LabelMap& target, const LossWeights& w) {
    if (probs.width != target.width || probs.height != target.height)
        throw ValidationError("loss: probability map and target dimensions differ");
    const std::size_t C = probs.classes, N = probs.pixel_count();
    LossResult r;
    r.grad_logits.assign(N * C, 0.0);

    std::size_t labeled = 0;
    std::vector<double> gt_count(C, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        const ClassId t = target.labels[i];
        if (t == kUnlabeled) continue;
        if (t >= C) throw ValidationError("loss: target label " + std::to_string(t) + " at pixel " + std::to_string(i));
        ++labeled;
        gt_count[t] += 1.0;
    }
    r.labeled_pixels = labeled;
    if (labeled == 0) return r;

    // dL/dp for the dice and presence terms; CE goes straight to logits.
    std::vector<double> grad_p(N * C, 0.0);

    // Cross-entropy.
    if (w.ce != 0.0) {
        const double inv = 1.0 / static_cast<double>(labeled);
        double sum = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const ClassId t = target.labels[i];
            if (t == kUnlabeled) continue;
            const double* q = &probs.p[i * C];
            sum -= std::log(std::max(q[t], 1e-300));
            double* g = &r.grad_logits[i * C];
            for (std::size_t c = 0; c < C; ++c) g[c] += w.ce * inv * (q[c] - (c == t ? 1.0 : 0.0));
        }
        r.ce = sum * inv;
    }

    // Soft dice averaged over classes present in the target.
    if (w.dice != 0.0) {
        std::vector<double> inter(C, 0.0), psum(C, 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            const ClassId t = target.labels[i];
            if (t == kUnlabeled) continue;
            const double* q = &probs.p[i * C];
            for (std::size_t c = 0; c < C; ++c) psum[c] += q[c];
            inter[t] += q[t];
        }
        std::size_t present = 0;
        double mean_coeff = 0.0;
        for (std::size_t c = 0; c < C; ++c)
            if (gt_count[c] > 0) {
                ++present;
                mean_coeff += (2.0 * inter[c] + kDiceSmooth) / (psum[c] + gt_count[c] + kDiceSmooth);
            }
        mean_coeff /= static_cast<double>(present);
        r.dice = 1.0 - mean_coeff;
        // d(coeff_c)/dp_ic = (2 y_ic (S_c + eps) - (2 I_c + eps)) / (S_c + eps)^2
        std::vector<double> a(C, 0.0), bterm(C, 0.0);
        for (std::size_t c = 0; c < C; ++c)
            if (gt_count[c] > 0) {
                const double S = psum[c] + gt_count[c] + kDiceSmooth;
                a[c] = 2.0 / S;
                bterm[c] = (2.0 * inter[c] + kDiceSmooth) / (S * S);
            }
        const double scale = -w.dice / static_cast<double>(present);
        for (std::size_t i = 0; i < N; ++i) {
            const ClassId t = target.labels[i];
            if (t == kUnlabeled) continue;
            double* g = &grad_p[i * C];
            for (std::size_t c = 0; c < C; ++c)
                if (gt_count[c] > 0) g[c] += scale * ((c == t ? a[c] : 0.0) - bterm[c]);
        }
    }

    // Class presence: BCE between the max-pooled probability and presence.
    if (w.cls != 0.0) {
        std::vector<double> best(C, -1.0);
        std::vector<std::size_t> where(C, 0);
        for (std::size_t i = 0; i < N; ++i) {
            if (target.labels[i] == kUnlabeled) continue;
            const double* q = &probs.p[i * C];
            for (std::size_t c = 0; c < C; ++c)
                if (q[c] > best[c]) {
                    best[c] = q[c];
                    where[c] = i;
                }
        }
        double sum = 0.0;
        const double invC = 1.0 / static_cast<double>(C);
        for (std::size_t c = 0; c < C; ++c) {
            const bool present = gt_count[c] > 0;
            const double raw = best[c];
            const double q = std::clamp(raw, kPresenceClamp, 1.0 - kPresenceClamp);
            sum -= present ? std::log(q) : std::log(1.0 - q);
            if (raw > kPresenceClamp && raw < 1.0 - kPresenceClamp) {
                const double dq = present ? -1.0 / q : 1.0 / (1.0 - q);
                grad_p[where[c] * C + c] += w.cls * invC * dq;
            }
        }
        r.cls = sum * invC;
    }

    // Chain dL/dp through the softmax Jacobian.
    if (w.dice != 0.0 || w.cls != 0.0) {
        for (std::size_t i = 0; i < N; ++i) {
            if (target.labels[i] == kUnlabeled) continue;
            const double* q = &probs.p[i * C];
            const double* gp = &grad_p[i * C];
            double dot = 0.0;
            for (std::size_t c = 0; c < C; ++c) dot += q[c] * gp[c];
            double* g = &r.grad_logits[i * C];
            for (std::size_t c = 0; c < C; ++c) g[c] += q[c] * (gp[c] - dot);
        }
    }

    r.total = w.ce * r.ce + w.dice * r.dice + w.cls * r.cls;
    return r;
}

/// Accumulates `scale` * dL/dparams into `grad` given dL/dlogits.
inline void accumulate_param_grad(const ModelParams& params, const FeatureMap& feats,
                                  const std::vector<double>& grad_logits, bool finetune_backbone, double scale,
                                  ModelParams& grad) {
    const std::size_t C = params.classes, D = params.dim;
    const std::size_t N = static_cast<std::size_t>(feats.width) * feats.height;
    const bool identity = params.mix_is_identity();
    std::vector<double> phi(D), dphi(D);
    for (std::size_t i = 0; i < N; ++i) {
        const double* g = &grad_logits[i * C];
        bool any = false;
        for (std::size_t c = 0; c < C; ++c) any |= g[c] != 0.0;
        if (!any) continue;
        detail::mixed_features(params, feats.pixel(i), phi.data(), identity);
        for (std::size_t c = 0; c < C; ++c) {
            const double gc = scale * g[c];
            grad.b[c] += gc;
            double* gw = &grad.W[c * D];
            for (std::size_t d = 0; d < D; ++d) gw[d] += gc * phi[d];
        }
        if (finetune_backbone) {
            for (std::size_t d = 0; d < D; ++d) {
                double s = 0.0;
                for (std::size_t c = 0; c < C; ++c) s += params.W[c * D + d] * g[c];
                dphi[d] = scale * s;
            }
            const double* x = feats.pixel(i);
            for (std::size_t d = 0; d < D; ++d)
                for (std::size_t e = 0; e < D; ++e) grad.mix[d * D + e] += dphi[d] * x[e];
        }
    }
}

inline ModelParams sgd_step(const ModelParams& params, const ModelParams& grad, double lr, bool finetune_backbone) {
    if (!(lr > 0.0)) throw ValidationError("sgd_step: learning rate must be > 0");
    if (!params.same_shape(grad)) throw ValidationError("sgd_step: gradient shape does not match parameters");
    auto check = [](const std::vector<double>& v, const char* name) {
        for (double x : v)
            if (!std::isfinite(x)) throw NumericalError(std::string("sgd_step: non-finite gradient in ") + name);
    };
    check(grad.W, "W");
    check(grad.b, "b");
    if (finetune_backbone) check(grad.mix, "backbone_mix");
    ModelParams out = params;
    for (std::size_t i = 0; i < out.W.size(); ++i) out.W[i] -= lr * grad.W[i];
    for (std::size_t i = 0; i < out.b.size(); ++i) out.b[i] -= lr * grad.b[i];
    if (finetune_backbone)
        for (std::size_t i = 0; i < out.mix.size(); ++i) out.mix[i] -= lr * grad.mix[i];
    return out;
}

// ---------------------------------------------------------------------------
// Student-branch augmentation

struct AugmentParams {
    double flip_prob = 0.5;
    double brightness = 0.2;  // gain drawn from [1 - a, 1 + a]
    double contrast = 0.2;
    double hue = 0.05;        // rotation drawn from [-a, a] turns
};

struct AugmentRecord {
    bool flipped = false;
    double brightness = 1.0;
    double contrast = 1.0;
    double hue = 0.0;
};

inline ImageBuf flip_horizontal(const ImageBuf& img) {
    ImageBuf out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(img.width - 1 - x, y, c) = img.at(x, y, c);
    return out;
}

inline LabelMap flip_horizontal(const LabelMap& map) {
    LabelMap out = map;
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x) out.at(map.width - 1 - x, y) = map.at(x, y);
    return out;
}

/// Applies the geometric part of a recorded augmentation to a label map.
inline LabelMap apply_geometry(const AugmentRecord& rec, const LabelMap& map) {
    return rec.flipped ? flip_horizontal(map) : map;
}

struct Augmented {
    ImageBuf image;
    LabelMap labels;
    AugmentRecord record;
};

inline Augmented augment(const ImageBuf& image, const LabelMap& labels, RngStream& rng,
                         const AugmentParams& params = {}) {
    if (!same_dims(image, labels)) throw ValidationError("augment: image and label dimensions differ");
    Augmented out;
    AugmentRecord& rec = out.record;
    rec.flipped = rng.bernoulli(params.flip_prob);
    rec.brightness = 1.0 + params.brightness * (2.0 * rng.uniform() - 1.0);
    rec.contrast = 1.0 + params.contrast * (2.0 * rng.uniform() - 1.0);
    rec.hue = params.hue * (2.0 * rng.uniform() - 1.0);
    out.image = rec.flipped ? flip_horizontal(image) : image;
    out.labels = apply_geometry(rec, labels);
    if (rec.brightness != 1.0 || rec.contrast != 1.0 || rec.hue != 0.0)
        apply_color_transform(out.image, rec.brightness, rec.contrast, rec.hue);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_json(const ModelParams& p) {
    return {{"format_version", kCheckpointVersion},
            {"classes", p.classes},
            {"dim", p.dim},
            {"W", p.W},
            {"b", p.b},
            {"backbone_mix", p.mix}};
}

inline ModelParams params_from_checkpoint(const nlohmann::json& j) {
    try {
        if (j.at("format_version").get<int>() != kCheckpointVersion)
            throw ValidationError("checkpoint: unsupported format_version");
        ModelParams p;
        p.classes = j.at("classes").get<std::size_t>();
        p.dim = j.at("dim").get<std::size_t>();
        p.W = j.at("W").get<std::vector<double>>();
        p.b = j.at("b").get<std::vector<double>>();
        p.mix = j.at("backbone_mix").get<std::vector<double>>();
        if (p.W.size() != p.classes * p.dim || p.b.size() != p.classes || p.mix.size() != p.dim * p.dim)
            throw ValidationError("checkpoint: array sizes do not match classes/dim");
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint: ") + e.what());
    }
}

}  // namespace plrefine
