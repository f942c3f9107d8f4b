// plrefine: dataset generation, training, evaluation, refinement and sweeps.
//
// Exit codes: 0 success, 1 validation error, 2 IO error, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plrefine/commands.hpp"

namespace fs = std::filesystem;
using namespace plrefine;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> config;
    fs::path out;
    bool quiet = false;
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) items.push_back(item);
    return items;
}

std::uint64_t require_seed(const Globals& g, const char* command) {
    if (!g.seed) throw ValidationError(std::string(command) + ": --seed is required");
    return *g.seed;
}

EvalModel parse_eval_model(const std::string& s) {
    if (s == "student") return EvalModel::kStudent;
    if (s == "teacher") return EvalModel::kTeacher;
    throw ValidationError("unknown model '" + s + "' (expected student or teacher)");
}

void add_segmenter_options(CLI::App* cmd, SegmenterChoice& seg) {
    cmd->add_option("--segmenter", seg.kind, "none, perfect, noisy or empty")->capture_default_str();
    cmd->add_option("--radius", seg.radius, "Noisy oracle boundary radius")->capture_default_str();
    cmd->add_option("--flip-rate", seg.flip_rate, "Noisy oracle flip rate inside the boundary band")
        ->capture_default_str();
}

void print(const Globals& g, const nlohmann::json& j) {
    if (!g.quiet) std::cout << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pseudo-label refinement for self-training on generated scenes"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--config", g.config, "Training configuration JSON");
    app.add_option("--out", g.out, "Output directory");
    app.add_flag("--quiet", g.quiet, "Suppress the summary printed on success");

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Render a dataset to disk");
    gen_cmd->fallthrough();
    gen_cmd->add_option("--preset", gen.preset, "source, target-style, target-content, target-both or generated")
        ->capture_default_str();
    gen_cmd->add_option("--count", gen.count, "Number of samples")->capture_default_str();
    gen_cmd->add_option("--size", gen.size, "Image width and height in pixels")->capture_default_str();

    TrainOptions train;
    std::string train_model = "student";
    std::optional<fs::path> train_generated;
    auto* train_cmd = app.add_subcommand("train", "Source training followed by self-training");
    train_cmd->fallthrough();
    train_cmd->add_option("--source", train.source, "Labeled source dataset")->required();
    train_cmd->add_option("--generated", train_generated, "Generated dataset (labels visible to the segmenter only)");
    add_segmenter_options(train_cmd, train.segmenter);
    train_cmd->add_option("--salt-rate", train.salt_rate, "Fraction of pseudo-label pixels replaced at random")
        ->capture_default_str();
    train_cmd->add_option("--eval", train.eval_dirs, "Extra evaluation dataset (repeatable)");
    train_cmd->add_option("--eval-count", train.eval_count, "Images per built-in target preset")
        ->capture_default_str();
    train_cmd->add_option("--model", train_model, "Weights to evaluate: student or teacher")->capture_default_str();
    train_cmd->add_option("--log-every", train.log_every, "Iterations between log records")->capture_default_str();
    train_cmd->add_option("--eval-every", train.eval_every, "Iterations between in-log evaluations (0 = never)")
        ->capture_default_str();

    EvalOptions ev;
    std::string eval_model = "student";
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval_cmd->fallthrough();
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint.json from train")->required();
    eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
    eval_cmd->add_option("--model", eval_model, "student or teacher")->capture_default_str();
    eval_cmd->add_flag("--predictions", ev.write_predictions, "Also write predicted label maps");

    RefineOptions ref;
    std::string ref_tau = "4", ref_k = "1";
    auto* refine_cmd = app.add_subcommand("refine", "Refine pseudo-label maps with a segmenter");
    refine_cmd->fallthrough();
    refine_cmd->add_option("--pl-dir", ref.pl_dir, "Pseudo-label PGMs")->required();
    refine_cmd->add_option("--gt-dir", ref.gt_dir, "Hidden ground-truth PGMs")->required();
    refine_cmd->add_option("--img-dir", ref.img_dir, "Images (PPM)")->required();
    add_segmenter_options(refine_cmd, ref.segmenter);
    refine_cmd->add_option("--tau", ref_tau, "Minimum component area")->capture_default_str();
    refine_cmd->add_option("--k", ref_k, "Points per component")->capture_default_str();

    std::string axis = "points", values, seeds = "10", method = "refined-pl";
    SegmenterChoice sweep_seg;
    ExperimentSetup sweep_base = ablation_setup();
    unsigned threads = worker_count();
    auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over one parameter axis and several seeds");
    sweep_cmd->fallthrough();
    sweep_cmd->add_option("--axis", axis, "gen-size, points, tau, finetune or method")->capture_default_str();
    sweep_cmd->add_option("--values", values, "Comma-separated axis values")->required();
    sweep_cmd->add_option("--seeds", seeds, "Number of seeds, counting up from --seed")->capture_default_str();
    sweep_cmd->add_option("--method", method, "source-only, raw-pl or refined-pl")->capture_default_str();
    add_segmenter_options(sweep_cmd, sweep_seg);
    sweep_cmd->add_option("--salt-rate", sweep_base.salt_rate, "Pseudo-label salt noise")->capture_default_str();
    sweep_cmd->add_option("--size", sweep_base.image_size, "Image size")->capture_default_str();
    sweep_cmd->add_option("--source-count", sweep_base.source_count, "Source images")->capture_default_str();
    sweep_cmd->add_option("--eval-count", sweep_base.eval_count, "Target-both evaluation images")
        ->capture_default_str();
    sweep_cmd->add_option("--threads", threads, "Worker threads")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen_cmd) {
            gen.seed = g.seed.value_or(0);
            gen.out = g.out;
            print(g, cmd_gen(gen));
        } else if (*train_cmd) {
            train.seed = require_seed(g, "train");
            train.config = load_config(g.config, TrainConfig{});
            train.generated = train_generated;
            train.eval_model = parse_eval_model(train_model);
            train.out = g.out;
            print(g, cmd_train(train));
        } else if (*eval_cmd) {
            ev.model = parse_eval_model(eval_model);
            ev.out = g.out;
            print(g, cmd_eval(ev));
        } else if (*refine_cmd) {
            ref.seed = require_seed(g, "refine");
            ref.tau = static_cast<std::uint64_t>(parse_count(ref_tau, "tau"));
            ref.k = static_cast<std::uint64_t>(parse_count(ref_k, "k"));
            ref.out = g.out;
            print(g, cmd_refine(ref));
        } else if (*sweep_cmd) {
            const std::uint64_t first = require_seed(g, "sweep");
            SweepOptions sw;
            sw.base = sweep_base;
            sw.base.config = load_config(g.config, sweep_base.config);
            sw.base.method = parse_method(method);
            if (!sweep_seg.refines()) {
                if (sw.base.method == Method::kRefinedPseudoLabels) sw.base.method = Method::kRawPseudoLabels;
            } else {
                sw.base.segmenter = sweep_seg.resolve();
            }
            sw.axis = parse_axis(axis);
            sw.values = split_list(values);
            const auto n = parse_count(seeds, "seeds");
            if (n < 1) throw ValidationError("sweep: at least one seed is required");
            for (std::int64_t i = 0; i < n; ++i) sw.seeds.push_back(first + static_cast<std::uint64_t>(i));
            sw.threads = threads;
            sw.out = g.out;
            print(g, cmd_sweep(sw));
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
