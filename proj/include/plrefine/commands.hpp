#pragma once

// The experiment workflow as callable commands. Each command validates its
// options, writes its declared outputs under `out` and returns a JSON summary.
// The command-line front end only parses arguments into these option structs.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "plrefine/datasets.hpp"
#include "plrefine/experiment.hpp"
#include "plrefine/refine.hpp"

namespace plrefine {

/// Segmenter selection shared by train, refine and sweep. `none` means the
/// raw teacher pseudo labels are used without refinement.
struct SegmenterChoice {
    std::string kind = "noisy";  // none | perfect | noisy | empty
    int radius = 1;
    double flip_rate = 0.0;

    bool refines() const { return kind != "none"; }

    SegmenterKind resolve() const {
        if (kind == "perfect") return PerfectOracle{};
        if (kind == "noisy") {
            const NoisyOracle n{radius, flip_rate};
            validate_segmenter(n);
            return n;
        }
        if (kind == "empty") return ConstantMask{};
        if (kind == "none") return PerfectOracle{};
        throw ValidationError("unknown segmenter '" + kind + "' (expected none, perfect, noisy or empty)");
    }
};

inline TrainConfig load_config(const std::optional<std::filesystem::path>& path, const TrainConfig& fallback) {
    if (!path) return fallback;
    const std::string text = detail::read_file(path->string());
    TrainConfig c = parse_train_config(text);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// gen

struct GenOptions {
    std::string preset = "source";  // a domain preset or "generated"
    std::size_t count = 100;
    std::uint64_t seed = 0;
    int size = 64;
    std::filesystem::path out;
};

inline nlohmann::json cmd_gen(const GenOptions& o) {
    if (o.out.empty()) throw ValidationError("gen: --out is required");
    const RngStream root(o.seed);
    const DatasetInfo info{o.preset, o.seed, o.count, o.size, o.size};
    if (o.preset == "generated") {
        const PromptGenerator gen(root.fork("generated"), o.size, o.size);
        write_dataset(o.out, info, [&](std::size_t i) { return gen.sample(i); });
    } else {
        const DomainGenerator gen(parse_domain_preset(o.preset), root.fork(o.preset), o.size, o.size);
        write_dataset(o.out, info, [&](std::size_t i) { return gen.sample(i); });
    }
    return {{"preset", o.preset}, {"count", o.count}, {"out", o.out.string()}};
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    TrainConfig config;
    std::filesystem::path source;
    std::optional<std::filesystem::path> generated;
    SegmenterChoice segmenter;
    double salt_rate = 0.0;
    std::uint64_t seed = 0;
    std::filesystem::path out;
    std::vector<std::filesystem::path> eval_dirs;
    std::size_t eval_count = 100;  // per built-in target preset; 0 disables them
    EvalModel eval_model = EvalModel::kStudent;
    std::int64_t log_every = 100;
    std::int64_t eval_every = 0;  // 0: no evaluation inside the log
};

inline const std::vector<DomainPreset>& target_presets() {
    static const std::vector<DomainPreset> p = {DomainPreset::kTargetStyle, DomainPreset::kTargetContent,
                                                DomainPreset::kTargetBoth};
    return p;
}

inline nlohmann::json cmd_train(const TrainOptions& o) {
    if (o.out.empty()) throw ValidationError("train: --out is required");
    if (o.source.empty()) throw ValidationError("train: --source is required");
    o.config.validate();
    if (o.log_every < 1) throw ValidationError("train: log interval must be >= 1");
    if (o.eval_every < 0) throw ValidationError("train: eval interval must be >= 0");
    const SegmenterKind segmenter = o.segmenter.resolve();

    const DatasetInfo source_info = read_manifest(o.source);
    const Dataset source = load_dataset(o.source);
    const Dataset generated = o.generated ? load_dataset(*o.generated) : Dataset();
    ensure_directory(o.out);

    const RngStream root(o.seed);
    std::vector<std::pair<std::string, Dataset>> evals;
    if (o.eval_count > 0)
        for (DomainPreset p : target_presets())
            evals.emplace_back(to_string(p), quantized(render_domain(p, root.fork("eval").fork(to_string(p)),
                                                                     o.eval_count, source_info.width)));
    for (const auto& dir : o.eval_dirs) evals.emplace_back(dir.filename().string(), load_dataset(dir));
    for (std::size_t i = 0; i < evals.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (evals[i].first == evals[j].first)
                throw ValidationError("train: two evaluation sets are both named '" + evals[i].first + "'");

    const std::filesystem::path log_path = o.out / "train_log.jsonl";
    std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot open '" + log_path.string() + "' for writing");

    const TrainContext ctx{o.config, AugmentParams{}, default_catalog().size()};
    const ModelParams* latest = nullptr;
    TrainHooks hooks;
    hooks.log_every = o.log_every;
    hooks.on_step = [&](const TrainState& s) { latest = o.eval_model == EvalModel::kStudent ? &s.student : &s.teacher; };
    hooks.on_log = [&](const LogRecord& r) {
        nlohmann::json line = log_json(r);
        if (o.eval_every > 0 && r.iteration % o.eval_every == 0 && latest && !evals.empty())
            line["eval_miou"] = optional_json(evaluate(*latest, evals.back().second, ctx.class_count).miou());
        log << line.dump() << "\n";
    };

    TrainState state = train_phase1(source, ctx, root.fork("train"), hooks);
    Phase2Options p2;
    p2.mode = o.segmenter.refines() ? PseudoLabelMode::kRefined : PseudoLabelMode::kRaw;
    p2.segmenter = segmenter;
    p2.salt_rate = o.salt_rate;
    state = train_phase2(std::move(state), source, generated, p2, ctx, root.fork("train"), hooks);
    log.flush();
    if (!log) throw IoError("write failed for '" + log_path.string() + "'");

    write_json_file(o.out / "checkpoint.json",
                    {{"student", checkpoint_json(state.student)}, {"teacher", checkpoint_json(state.teacher)},
                     {"iteration", state.iteration}, {"config", to_json(o.config)}, {"seed", o.seed}});
    nlohmann::json summary = {{"iterations", state.iteration}, {"metrics", nlohmann::json::object()}};
    for (const auto& [name, data] : evals) {
        const EvalReport rep = evaluate(state, data, o.eval_model, ctx.class_count);
        const nlohmann::json m = metrics_json(rep.confusion, default_catalog());
        write_json_file(o.out / ("metrics_" + name + ".json"), m);
        summary["metrics"][name] = m["miou"];
    }
    return summary;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    std::filesystem::path checkpoint;
    std::filesystem::path data;
    std::filesystem::path out;
    EvalModel model = EvalModel::kStudent;
    bool write_predictions = false;
};

inline ModelParams load_checkpoint(const std::filesystem::path& path, EvalModel model) {
    const nlohmann::json j = read_json_file(path);
    const char* key = model == EvalModel::kStudent ? "student" : "teacher";
    if (j.contains(key)) return params_from_checkpoint(j.at(key));
    return params_from_checkpoint(j);
}

inline nlohmann::json cmd_eval(const EvalOptions& o) {
    if (o.out.empty()) throw ValidationError("eval: --out is required");
    const ModelParams params = load_checkpoint(o.checkpoint, o.model);
    if (params.classes != default_catalog().size())
        throw ValidationError("eval: checkpoint has " + std::to_string(params.classes) + " classes, expected " +
                              std::to_string(default_catalog().size()));
    const std::vector<Sample> samples = load_samples(o.data);
    ensure_directory(o.out);
    if (o.write_predictions) ensure_directory(o.out / "predictions");
    ConfusionMatrix cm(params.classes);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const LabelMap pred = predict(params, samples[i].image);
        cm.accumulate(samples[i].labels, pred);
        if (o.write_predictions) write_pgm((o.out / "predictions" / (sample_stem(i) + ".pgm")).string(), pred);
    }
    const nlohmann::json m = metrics_json(cm, default_catalog());
    write_json_file(o.out / "metrics.json", m);
    return m;
}

// ---------------------------------------------------------------------------
// refine

struct RefineOptions {
    std::filesystem::path pl_dir, gt_dir, img_dir, out;
    SegmenterChoice segmenter;
    std::uint64_t tau = 4;
    std::uint64_t k = 1;
    std::uint64_t seed = 0;
};

inline std::vector<std::string> numbered_stems(const std::filesystem::path& dir, const std::string& ext) {
    if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
    std::vector<std::string> stems;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) stems.push_back(e.path().stem().string());
    std::sort(stems.begin(), stems.end());
    return stems;
}

inline nlohmann::json cmd_refine(const RefineOptions& o) {
    if (o.out.empty()) throw ValidationError("refine: --out is required");
    if (o.k < 1) throw ValidationError("refine: k must be >= 1");
    if (!o.segmenter.refines()) throw ValidationError("refine: segmenter 'none' does not refine");
    const SegmenterKind segmenter = o.segmenter.resolve();
    const std::vector<std::string> stems = numbered_stems(o.pl_dir, ".pgm");

    std::vector<std::string> offenders;
    for (const auto& s : stems) {
        if (!std::filesystem::exists(o.gt_dir / (s + ".pgm"))) offenders.push_back((o.gt_dir / (s + ".pgm")).string());
        if (!std::filesystem::exists(o.img_dir / (s + ".ppm"))) offenders.push_back((o.img_dir / (s + ".ppm")).string());
    }
    if (!offenders.empty()) {
        std::string msg = "refine: " + std::to_string(offenders.size()) + " file(s) missing:";
        for (const auto& f : offenders) msg += " " + f;
        throw IoError(msg);
    }

    const std::size_t C = default_catalog().size();
    const RngStream root(o.seed);
    ensure_directory(o.out);
    RefinementReport total;
    total.components_found.assign(C, 0);
    total.components_filtered.assign(C, 0);
    total.components_prompted.assign(C, 0);
    std::uint64_t labeled = 0, correct = 0;
    nlohmann::json images = nlohmann::json::array();
    for (std::size_t i = 0; i < stems.size(); ++i) {
        const std::string& s = stems[i];
        const LabelMap pl = read_pgm((o.pl_dir / (s + ".pgm")).string());
        const LabelMap gt = read_pgm((o.gt_dir / (s + ".pgm")).string());
        const ImageBuf img = read_ppm((o.img_dir / (s + ".ppm")).string());
        if (!same_dims(img, pl) || !same_dims(pl, gt))
            throw IoError("refine: '" + s + "' image, pseudo labels and ground truth differ in size");
        for (const auto& [dir, map] : {std::pair{o.pl_dir, &pl}, std::pair{o.gt_dir, &gt}}) {
            try {
                validate_label_map(*map, default_catalog());
            } catch (const ValidationError& e) {
                throw IoError("'" + (dir / (s + ".pgm")).string() + "': " + e.what());
            }
        }
        RngStream rng = root.fork("refine", i);
        const RefinementResult r = refine_pseudo_labels(img, pl, gt, segmenter, {o.tau, o.k}, C, rng);
        write_pgm((o.out / (s + ".pgm")).string(), r.refined);
        std::uint64_t img_labeled = 0, img_correct = 0;
        for (std::size_t p = 0; p < r.refined.labels.size(); ++p)
            if (r.refined.labels[p] != kUnlabeled && gt.labels[p] != kUnlabeled) {
                ++img_labeled;
                img_correct += r.refined.labels[p] == gt.labels[p];
            }
        labeled += img_labeled;
        correct += img_correct;
        total += r.report;
        nlohmann::json entry = report_json(r.report);
        entry["file"] = s;
        entry["labeled_accuracy"] =
            img_labeled ? nlohmann::json(static_cast<double>(img_correct) / static_cast<double>(img_labeled)) : nullptr;
        images.push_back(entry);
    }
    nlohmann::json aggregate = report_json(total);
    aggregate["labeled_accuracy"] =
        labeled ? nlohmann::json(static_cast<double>(correct) / static_cast<double>(labeled)) : nullptr;
    aggregate["labeled_pixels"] = labeled;
    aggregate["images"] = stems.size();
    const nlohmann::json report = {{"tau", o.tau}, {"k", o.k}, {"aggregate", aggregate}, {"per_image", images}};
    write_json_file(o.out / "report.json", report);
    return aggregate;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepOptions {
    ExperimentSetup base = ablation_setup();
    SweepAxis axis = SweepAxis::kPoints;
    std::vector<std::string> values;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path out;
    unsigned threads = worker_count();
};

inline nlohmann::json cmd_sweep(const SweepOptions& o) {
    if (o.out.empty()) throw ValidationError("sweep: --out is required");
    const std::vector<SweepRow> rows = run_sweep(o.base, o.axis, o.values, o.seeds, o.threads);
    ensure_directory(o.out);
    detail::write_file((o.out / "sweep.csv").string(), sweep_csv(rows));
    const nlohmann::json summary = sweep_summary_json(o.axis, summarize(rows, o.values));
    write_json_file(o.out / "summary.json", summary);
    return summary;
}

}  // namespace plrefine
