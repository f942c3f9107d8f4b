#pragma once

// On-disk datasets: one `%06d.ppm` image, `%06d.pgm` label map and `%06d.json`
// caption sidecar per sample, plus a `manifest.json` describing the set.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "plrefine/pnm.hpp"
#include "plrefine/scenegen.hpp"
#include "plrefine/trainer.hpp"

namespace plrefine {

namespace fs = std::filesystem;

inline std::string sample_stem(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", index);
    return buf;
}

inline void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j) {
    detail::write_file(path.string(), j.dump(2) + "\n");
}

inline nlohmann::json read_json_file(const fs::path& path) {
    const std::string text = detail::read_file(path.string());
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

inline nlohmann::json scene_sidecar(const SceneSpec& spec) {
    nlohmann::json subjects = nlohmann::json::array();
    for (const auto& s : spec.subjects) subjects.push_back({{"class", s.cls}, {"name", s.name}});
    return {{"caption", spec.caption()},
            {"subjects", subjects},
            {"lighting", to_string(spec.lighting)},
            {"weather", to_string(spec.weather)},
            {"layout_seed", spec.layout_seed}};
}

struct DatasetInfo {
    std::string preset;
    std::uint64_t seed = 0;
    std::size_t count = 0;
    int width = 0;
    int height = 0;
};

/// Renders `info.count` samples from `sample_at` into `dir`. The manifest is
/// written last, so a directory with a manifest is complete.
template <class SampleAt>
void write_dataset(const fs::path& dir, const DatasetInfo& info, SampleAt&& sample_at) {
    ensure_directory(dir);
    for (std::size_t i = 0; i < info.count; ++i) {
        const DomainSample d = sample_at(i);
        const std::string stem = sample_stem(i);
        write_ppm((dir / (stem + ".ppm")).string(), d.scene.image);
        write_pgm((dir / (stem + ".pgm")).string(), d.scene.labels);
        write_json_file(dir / (stem + ".json"), scene_sidecar(d.spec));
    }
    write_json_file(dir / "manifest.json", {{"format_version", 1},
                                            {"preset", info.preset},
                                            {"seed", info.seed},
                                            {"count", info.count},
                                            {"width", info.width},
                                            {"height", info.height},
                                            {"classes", default_catalog().size()}});
}

inline DatasetInfo read_manifest(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    if (!fs::exists(path)) throw IoError("dataset '" + dir.string() + "' has no manifest.json");
    const nlohmann::json j = read_json_file(path);
    try {
        DatasetInfo info;
        info.preset = j.at("preset").get<std::string>();
        info.seed = j.at("seed").get<std::uint64_t>();
        info.count = j.at("count").get<std::size_t>();
        info.width = j.at("width").get<int>();
        info.height = j.at("height").get<int>();
        return info;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("'" + path.string() + "': " + e.what());
    }
}

/// Loads every sample listed by the manifest; labels are validated against
/// the catalog and must match their image's size.
inline std::vector<Sample> load_samples(const fs::path& dir, const ClassCatalog& catalog = default_catalog()) {
    const DatasetInfo info = read_manifest(dir);
    std::vector<Sample> samples;
    samples.reserve(info.count);
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < info.count; ++i) {
        const std::string stem = sample_stem(i);
        for (const char* ext : {".ppm", ".pgm"})
            if (!fs::exists(dir / (stem + ext))) missing.push_back((dir / (stem + ext)).string());
    }
    if (!missing.empty()) {
        std::string msg = "dataset '" + dir.string() + "' is missing " + std::to_string(missing.size()) + " file(s):";
        for (const auto& m : missing) msg += " " + m;
        throw IoError(msg);
    }
    for (std::size_t i = 0; i < info.count; ++i) {
        const std::string stem = sample_stem(i);
        const fs::path label_path = dir / (stem + ".pgm");
        Sample s{read_ppm((dir / (stem + ".ppm")).string()), read_pgm(label_path.string())};
        if (!same_dims(s.image, s.labels))
            throw IoError("'" + label_path.string() + "' does not match the size of its image");
        try {
            validate_label_map(s.labels, catalog);
        } catch (const ValidationError& e) {
            throw IoError("'" + label_path.string() + "': " + e.what());
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

/// Materializes `data` with images rounded to 8 bits, matching what a dump
/// and reload of the same samples would produce.
inline Dataset quantized(const Dataset& data) {
    std::vector<Sample> samples;
    samples.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        Sample s = data.get(i);
        s.image = quantize(s.image);
        samples.push_back(std::move(s));
    }
    return Dataset::from_samples(std::move(samples));
}

inline Dataset load_dataset(const fs::path& dir, const ClassCatalog& catalog = default_catalog()) {
    return Dataset::from_samples(load_samples(dir, catalog));
}

}  // namespace plrefine
