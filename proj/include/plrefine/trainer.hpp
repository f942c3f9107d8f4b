#pragma once

// Two-phase training: supervised source training, then student-teacher
// self-training on generated images whose teacher pseudo labels are refined
// by prompting a class-agnostic segmenter. The teacher is an exponential
// moving average of the student and never receives gradients.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "plrefine/core.hpp"
#include "plrefine/metrics.hpp"
#include "plrefine/model.hpp"
#include "plrefine/refine.hpp"
#include "plrefine/segmenter.hpp"

namespace plrefine {

struct Sample {
    ImageBuf image;
    LabelMap labels;
};

/// Random-access sample source; backed by memory or by a procedural generator.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t size, std::function<Sample(std::size_t)> fetch) : size_(size), fetch_(std::move(fetch)) {}

    static Dataset from_samples(std::vector<Sample> samples) {
        auto shared = std::make_shared<const std::vector<Sample>>(std::move(samples));
        return Dataset(shared->size(), [shared](std::size_t i) { return (*shared)[i]; });
    }

    std::size_t size() const noexcept { return size_; }
    bool empty() const noexcept { return size_ == 0; }
    Sample get(std::size_t i) const {
        if (i >= size_) throw ValidationError("dataset index " + std::to_string(i) + " out of range");
        return fetch_(i);
    }

private:
    std::size_t size_ = 0;
    std::function<Sample(std::size_t)> fetch_;
};

enum class Phase : std::uint8_t { kSourceOnly, kJoint };

struct TrainState {
    ModelParams student;
    ModelParams teacher;
    std::int64_t iteration = 0;
    Phase phase = Phase::kSourceOnly;
};

/// theta_T' = alpha * theta_T + (1 - alpha) * theta over every parameter block.
inline ModelParams ema_update(const ModelParams& teacher, const ModelParams& student, double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("ema_update: alpha must lie in [0,1)");
    if (!teacher.same_shape(student)) throw ValidationError("ema_update: teacher and student shapes differ");
    ModelParams out = teacher;
    auto blend = [alpha](std::vector<double>& t, const std::vector<double>& s) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = s[i] + alpha * (t[i] - s[i]);
    };
    blend(out.W, student.W);
    blend(out.b, student.b);
    blend(out.mix, student.mix);
    return out;
}

enum class PseudoLabelMode : std::uint8_t {
    kRaw,      // teacher argmax used directly
    kRefined,  // teacher argmax refined through the segmenter
};

struct Phase2Options {
    PseudoLabelMode mode = PseudoLabelMode::kRefined;
    SegmenterKind segmenter = NoisyOracle{1, 0.0};
    /// Fraction of pseudo-label pixels replaced by a uniformly drawn class
    /// before refinement (salt-noise corruption experiments).
    double salt_rate = 0.0;
    /// Instrumentation: replaces the teacher pseudo labels before refinement.
    std::function<void(LabelMap& pseudo_labels, const LabelMap& hidden_gt, RngStream& rng)> pseudo_label_override;
};

struct LogRecord {
    Phase phase = Phase::kSourceOnly;
    std::int64_t iteration = 0;  // global, 1-based
    double source_total = 0.0, source_ce = 0.0, source_dice = 0.0, source_cls = 0.0;
    double selftrain_total = 0.0;
    double unlabeled_fraction = 0.0;  // of generated pixels in this batch
};

struct GeneratedTrace {
    std::int64_t iteration = 0;
    const ImageBuf* image = nullptr;
    const LabelMap* hidden_gt = nullptr;
    const LabelMap* pseudo_labels = nullptr;  // after override / salt
    const LabelMap* target = nullptr;         // refined or raw, before augmentation
    const Augmented* student_input = nullptr;
};

struct TrainHooks {
    std::int64_t log_every = 100;
    std::function<void(const LogRecord&)> on_log;
    std::function<void(const TrainState&)> on_step;  // after every optimizer step (and EMA in phase 2)
    std::function<void(const GeneratedTrace&)> on_generated;
};

struct TrainContext {
    TrainConfig config;
    AugmentParams augment;
    std::size_t class_count = 8;
};

namespace detail {

struct LossTotals {
    double total = 0.0, ce = 0.0, dice = 0.0, cls = 0.0;
    void add(const LossResult& r, double scale) {
        total += scale * r.total;
        ce += scale * r.ce;
        dice += scale * r.dice;
        cls += scale * r.cls;
    }
};

inline LossWeights weights_of(const TrainConfig& c) { return {c.lambda_ce, c.lambda_dice, c.lambda_cls}; }

/// Adds scale * dL/dtheta for one (image, target) pair.
inline LossResult sample_gradient(const ModelParams& student, const ImageBuf& image, const LabelMap& target,
                                  const TrainConfig& config, double scale, ModelParams& grad) {
    const FeatureMap feats = extract_features(image);
    const ProbMap probs = forward(student, feats);
    LossResult r = loss_and_grad(probs, target, weights_of(config));
    if (r.labeled_pixels > 0) accumulate_param_grad(student, feats, r.grad_logits, config.finetune_backbone, scale, grad);
    return r;
}

inline bool should_log(const TrainHooks& hooks, std::int64_t local_iter, std::int64_t total) {
    return hooks.on_log && hooks.log_every > 0 && (local_iter % hooks.log_every == 0 || local_iter == total);
}

}  // namespace detail

inline TrainState initial_state(std::size_t class_count) {
    TrainState s;
    s.student = ModelParams::zeros(class_count);
    s.teacher = s.student;
    return s;
}

/// Supervised training on augmented source batches; the teacher is cloned
/// from the student at the end.
inline TrainState train_phase1(const Dataset& source, const TrainContext& ctx, const RngStream& rng,
                               const TrainHooks& hooks = {}) {
    ctx.config.validate();
    if (source.empty()) throw ValidationError("train_phase1: empty source dataset");
    TrainState state = initial_state(ctx.class_count);
    const std::int64_t B = ctx.config.batch_size;
    for (std::int64_t t = 1; t <= ctx.config.iters_phase1; ++t) {
        RngStream it = rng.fork("phase1", static_cast<std::uint64_t>(t));
        ModelParams grad = state.student.zeros_like();
        detail::LossTotals totals;
        for (std::int64_t j = 0; j < B; ++j) {
            const Sample s = source.get(it.below(source.size()));
            const Augmented a = augment(s.image, s.labels, it, ctx.augment);
            const LossResult r = detail::sample_gradient(state.student, a.image, a.labels, ctx.config, 1.0 / B, grad);
            totals.add(r, 1.0 / B);
        }
        state.student = sgd_step(state.student, grad, ctx.config.lr, ctx.config.finetune_backbone);
        state.iteration = t;
        if (hooks.on_step) hooks.on_step(state);
        if (detail::should_log(hooks, t, ctx.config.iters_phase1))
            hooks.on_log({Phase::kSourceOnly, t, totals.total, totals.ce, totals.dice, totals.cls, 0.0, 0.0});
    }
    state.teacher = state.student;
    return state;
}

/// Student-teacher self-training. Each batch holds batch_size - batch_size/2
/// source images and batch_size/2 generated images (when `generated` is
/// non-empty). `generated` labels are the hidden ground truth: only the
/// segmenter sees them.
inline TrainState train_phase2(TrainState state, const Dataset& source, const Dataset& generated,
                               const Phase2Options& options, const TrainContext& ctx, const RngStream& rng,
                               const TrainHooks& hooks = {}) {
    ctx.config.validate();
    validate_segmenter(options.segmenter);
    if (source.empty()) throw ValidationError("train_phase2: empty source dataset");
    if (!(options.salt_rate >= 0.0 && options.salt_rate <= 1.0))
        throw ValidationError("train_phase2: salt rate must lie in [0,1]");
    state.phase = Phase::kJoint;
    const std::int64_t B = ctx.config.batch_size;
    const std::int64_t n_gen = generated.empty() ? 0 : B / 2;
    const std::int64_t n_src = B - B / 2;
    const RefineParams refine_params{static_cast<std::uint64_t>(ctx.config.tau),
                                     static_cast<std::uint64_t>(ctx.config.k)};
    const std::int64_t start = state.iteration;

    for (std::int64_t t = 1; t <= ctx.config.iters_phase2; ++t) {
        RngStream it = rng.fork("phase2", static_cast<std::uint64_t>(t));
        RngStream src_rng = it.fork("source");
        RngStream gen_rng = it.fork("generated");
        ModelParams grad = state.student.zeros_like();
        detail::LossTotals src_totals, gen_totals;

        for (std::int64_t j = 0; j < n_src; ++j) {
            const Sample s = source.get(src_rng.below(source.size()));
            const Augmented a = augment(s.image, s.labels, src_rng, ctx.augment);
            src_totals.add(detail::sample_gradient(state.student, a.image, a.labels, ctx.config, 1.0 / n_src, grad),
                           1.0 / n_src);
        }

        std::uint64_t gen_pixels = 0, gen_unlabeled = 0;
        for (std::int64_t j = 0; j < n_gen; ++j) {
            RngStream sample_rng = gen_rng.fork("sample", static_cast<std::uint64_t>(j));
            const Sample g = generated.get(sample_rng.below(generated.size()));
            // Teacher sees the original image.
            LabelMap pl = predict(state.teacher, g.image);
            if (options.pseudo_label_override) {
                RngStream o = sample_rng.fork("override");
                options.pseudo_label_override(pl, g.labels, o);
            }
            if (options.salt_rate > 0.0) {
                RngStream salt = sample_rng.fork("salt");
                for (auto& v : pl.labels)
                    if (salt.bernoulli(options.salt_rate)) v = static_cast<ClassId>(salt.below(ctx.class_count));
            }
            LabelMap target;
            if (options.mode == PseudoLabelMode::kRefined) {
                RngStream r = sample_rng.fork("refine");
                target = refine_pseudo_labels(g.image, pl, g.labels, options.segmenter, refine_params,
                                              ctx.class_count, r)
                             .refined;
            } else {
                target = pl;
            }
            RngStream aug_rng = sample_rng.fork("augment");
            const Augmented a = augment(g.image, target, aug_rng, ctx.augment);
            for (auto v : a.labels.labels) gen_unlabeled += v == kUnlabeled;
            gen_pixels += a.labels.pixel_count();
            if (hooks.on_generated) hooks.on_generated({start + t, &g.image, &g.labels, &pl, &target, &a});
            gen_totals.add(detail::sample_gradient(state.student, a.image, a.labels, ctx.config, 1.0 / n_gen, grad),
                           1.0 / n_gen);
        }

        state.student = sgd_step(state.student, grad, ctx.config.lr, ctx.config.finetune_backbone);
        state.teacher = ema_update(state.teacher, state.student, ctx.config.alpha);
        state.iteration = start + t;
        if (hooks.on_step) hooks.on_step(state);
        if (detail::should_log(hooks, t, ctx.config.iters_phase2))
            hooks.on_log({Phase::kJoint, start + t, src_totals.total, src_totals.ce, src_totals.dice, src_totals.cls,
                          gen_totals.total,
                          gen_pixels ? static_cast<double>(gen_unlabeled) / static_cast<double>(gen_pixels) : 0.0});
    }
    return state;
}

enum class EvalModel : std::uint8_t { kStudent, kTeacher };

struct EvalReport {
    ConfusionMatrix confusion;
    std::optional<double> miou() const { return confusion.miou(); }
};

inline EvalReport evaluate(const ModelParams& params, const Dataset& eval, std::size_t class_count) {
    EvalReport report{ConfusionMatrix(class_count)};
    for (std::size_t i = 0; i < eval.size(); ++i) {
        const Sample s = eval.get(i);
        report.confusion.accumulate(s.labels, predict(params, s.image));
    }
    return report;
}

inline EvalReport evaluate(const TrainState& state, const Dataset& eval, EvalModel use, std::size_t class_count) {
    return evaluate(use == EvalModel::kStudent ? state.student : state.teacher, eval, class_count);
}

inline nlohmann::json log_json(const LogRecord& r) {
    return {{"phase", r.phase == Phase::kSourceOnly ? 1 : 2},
            {"iteration", r.iteration},
            {"source_loss", {{"total", r.source_total}, {"ce", r.source_ce}, {"dice", r.source_dice}, {"cls", r.source_cls}}},
            {"selftrain_loss", r.selftrain_total},
            {"generated_unlabeled_fraction", r.unlabeled_fraction}};
}

}  // namespace plrefine
