#pragma once

// Experiment harness: one seeded train+eval cell, and sweeps over one axis
// with cells run in parallel. Every cell derives all randomness from its
// seed, so results do not depend on scheduling.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "plrefine/core.hpp"
#include "plrefine/scenegen.hpp"
#include "plrefine/trainer.hpp"

namespace plrefine {

enum class Method : std::uint8_t { kSourceOnly, kRawPseudoLabels, kRefinedPseudoLabels };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::kSourceOnly: return "source-only";
        case Method::kRawPseudoLabels: return "raw-pl";
        case Method::kRefinedPseudoLabels: return "refined-pl";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "source-only") return Method::kSourceOnly;
    if (s == "raw-pl") return Method::kRawPseudoLabels;
    if (s == "refined-pl") return Method::kRefinedPseudoLabels;
    throw ValidationError("unknown method '" + s + "' (expected source-only, raw-pl or refined-pl)");
}

struct ExperimentSetup {
    TrainConfig config;
    int image_size = 48;
    std::size_t source_count = 200;
    std::size_t eval_count = 100;
    DomainPreset eval_preset = DomainPreset::kTargetBoth;
    Method method = Method::kRefinedPseudoLabels;
    SegmenterKind segmenter = NoisyOracle{1, 0.0};
    double salt_rate = 0.0;
};

/// Desk-scale schedule used by the ablation reproductions.
inline ExperimentSetup ablation_setup() {
    ExperimentSetup s;
    s.config.iters_phase1 = 400;
    s.config.iters_phase2 = 400;
    s.config.alpha = 0.99;
    s.config.lr = 2.0;
    return s;
}

inline Dataset render_domain(DomainPreset preset, const RngStream& rng, std::size_t count, int size) {
    const DomainGenerator gen(preset, rng, size, size);
    std::vector<Sample> samples;
    samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        DomainSample d = gen.sample(i);
        samples.push_back({std::move(d.scene.image), std::move(d.scene.labels)});
    }
    return Dataset::from_samples(std::move(samples));
}

/// Generated images rendered on demand; labels are the hidden ground truth.
inline Dataset generated_dataset(const RngStream& rng, std::size_t count, int size) {
    const PromptGenerator gen(rng, size, size);
    return Dataset(count, [gen](std::size_t i) {
        DomainSample d = gen.sample(i);
        return Sample{std::move(d.scene.image), std::move(d.scene.labels)};
    });
}

struct ExperimentData {
    Dataset source;
    Dataset generated;
    Dataset eval;
};

inline ExperimentData experiment_data(const ExperimentSetup& setup, std::uint64_t seed) {
    const RngStream root(seed);
    ExperimentData d;
    d.source = render_domain(DomainPreset::kSource, root.fork("source"), setup.source_count, setup.image_size);
    if (setup.method != Method::kSourceOnly)
        d.generated = generated_dataset(root.fork("generated"), static_cast<std::size_t>(setup.config.gen_size),
                                        setup.image_size);
    d.eval = render_domain(setup.eval_preset, root.fork("eval"), setup.eval_count, setup.image_size);
    return d;
}

struct CellResult {
    std::uint64_t seed = 0;
    EvalReport report;
    double miou_or_zero() const { return report.miou().value_or(0.0); }
};

inline CellResult run_experiment(const ExperimentSetup& setup, std::uint64_t seed, const TrainHooks& hooks = {}) {
    setup.config.validate();
    const ExperimentData data = experiment_data(setup, seed);
    const RngStream root(seed);
    TrainContext ctx{setup.config, AugmentParams{}, default_catalog().size()};
    TrainState state = train_phase1(data.source, ctx, root.fork("train"), hooks);
    Phase2Options opts;
    opts.mode = setup.method == Method::kRawPseudoLabels ? PseudoLabelMode::kRaw : PseudoLabelMode::kRefined;
    opts.segmenter = setup.segmenter;
    opts.salt_rate = setup.salt_rate;
    state = train_phase2(std::move(state), data.source, data.generated, opts, ctx, root.fork("train"), hooks);
    return {seed, evaluate(state, data.eval, EvalModel::kStudent, ctx.class_count)};
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis : std::uint8_t { kGenSize, kPoints, kTau, kFinetune, kMethod };

inline SweepAxis parse_axis(const std::string& s) {
    if (s == "gen-size") return SweepAxis::kGenSize;
    if (s == "points") return SweepAxis::kPoints;
    if (s == "tau") return SweepAxis::kTau;
    if (s == "finetune") return SweepAxis::kFinetune;
    if (s == "method") return SweepAxis::kMethod;
    throw ValidationError("unknown sweep axis '" + s + "' (expected gen-size, points, tau, finetune or method)");
}

inline const char* to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::kGenSize: return "gen-size";
        case SweepAxis::kPoints: return "points";
        case SweepAxis::kTau: return "tau";
        case SweepAxis::kFinetune: return "finetune";
        case SweepAxis::kMethod: return "method";
    }
    return "?";
}

inline std::int64_t parse_count(const std::string& v, const char* what) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size() || !(d >= 0.0) || d != std::floor(d) || d > 9.2e18) throw std::invalid_argument(v);
        return static_cast<std::int64_t>(d);
    } catch (const std::exception&) {
        throw ValidationError(std::string("invalid ") + what + " value '" + v + "'");
    }
}

inline ExperimentSetup apply_axis(ExperimentSetup setup, SweepAxis axis, const std::string& value) {
    switch (axis) {
        case SweepAxis::kGenSize:
            setup.config.gen_size = parse_count(value, "gen-size");
            if (setup.config.gen_size == 0) setup.method = Method::kSourceOnly;
            break;
        case SweepAxis::kPoints: setup.config.k = parse_count(value, "points"); break;
        case SweepAxis::kTau: setup.config.tau = parse_count(value, "tau"); break;
        case SweepAxis::kFinetune:
            if (value == "1" || value == "true" || value == "on") setup.config.finetune_backbone = true;
            else if (value == "0" || value == "false" || value == "off") setup.config.finetune_backbone = false;
            else throw ValidationError("invalid finetune value '" + value + "'");
            break;
        case SweepAxis::kMethod: setup.method = parse_method(value); break;
    }
    setup.config.validate();
    return setup;
}

struct SweepRow {
    std::string value;
    std::uint64_t seed = 0;
    double miou = 0.0;
};

inline unsigned worker_count() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("PLREFINE_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return n;
}

/// Runs every (value, seed) cell; rows come back in value-major order.
inline std::vector<SweepRow> run_sweep(const ExperimentSetup& base, SweepAxis axis,
                                       const std::vector<std::string>& values,
                                       const std::vector<std::uint64_t>& seeds, unsigned threads = worker_count()) {
    if (values.empty()) throw ValidationError("sweep: at least one value is required");
    if (seeds.empty()) throw ValidationError("sweep: at least one seed is required");
    std::vector<ExperimentSetup> setups;
    for (const auto& v : values) setups.push_back(apply_axis(base, axis, v));

    const std::size_t cells = values.size() * seeds.size();
    std::vector<SweepRow> rows(cells);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < cells; i = next++) {
            try {
                const std::size_t vi = i / seeds.size(), si = i % seeds.size();
                rows[i] = {values[vi], seeds[si], run_experiment(setups[vi], seeds[si]).miou_or_zero()};
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(cells)));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    return rows;
}

struct ValueSummary {
    std::string value;
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t n = 0;
};

inline std::vector<ValueSummary> summarize(const std::vector<SweepRow>& rows, const std::vector<std::string>& values) {
    std::vector<ValueSummary> out;
    for (const auto& v : values) {
        ValueSummary s{v};
        for (const auto& r : rows)
            if (r.value == v) {
                s.mean += r.miou;
                ++s.n;
            }
        if (s.n) s.mean /= static_cast<double>(s.n);
        for (const auto& r : rows)
            if (r.value == v) s.stddev += (r.miou - s.mean) * (r.miou - s.mean);
        if (s.n > 1) s.stddev = std::sqrt(s.stddev / static_cast<double>(s.n - 1));
        out.push_back(s);
    }
    return out;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "value,seed,miou\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g", r.miou);
        out += r.value + "," + std::to_string(r.seed) + "," + buf + "\n";
    }
    return out;
}

inline nlohmann::json sweep_summary_json(SweepAxis axis, const std::vector<ValueSummary>& summary) {
    nlohmann::json values = nlohmann::json::array();
    for (const auto& s : summary)
        values.push_back({{"value", s.value}, {"mean_miou", s.mean}, {"std_miou", s.stddev}, {"seeds", s.n}});
    return {{"axis", to_string(axis)}, {"values", values}};
}

}  // namespace plrefine
