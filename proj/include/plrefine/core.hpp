#pragma once

// Shared value types, error hierarchy, deterministic RNG and training
// configuration used by every other header of the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace plrefine {

using ClassId = std::uint8_t;

/// Reserved label for pixels excluded from supervision and evaluation.
inline constexpr ClassId kUnlabeled = 255;

// ---------------------------------------------------------------------------
// Errors. Each carries the process exit code the CLI reports for it.

class Error : public std::runtime_error {
public:
    Error(const std::string& what, int exit_code) : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(what, 1) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what, 2) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(what, 3) {}
};

// ---------------------------------------------------------------------------
// Images and label maps

struct ImageBuf {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<float> data;  // row-major, interleaved channels, values in [0,1]

    ImageBuf() = default;
    ImageBuf(int w, int h, int c = 3, float fill = 0.0f)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
    float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

    bool operator==(const ImageBuf&) const = default;
};

struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<ClassId> labels;  // row-major

    LabelMap() = default;
    LabelMap(int w, int h, ClassId fill = 0)
        : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}

    std::size_t pixel_count() const noexcept { return labels.size(); }
    ClassId& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
    ClassId at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const LabelMap&) const = default;
};

inline bool same_dims(const ImageBuf& img, const LabelMap& map) noexcept {
    return img.width == map.width && img.height == map.height;
}

inline bool same_dims(const LabelMap& a, const LabelMap& b) noexcept {
    return a.width == b.width && a.height == b.height;
}

// ---------------------------------------------------------------------------
// Class catalog

class ClassCatalog {
public:
    ClassCatalog(std::vector<std::string> names, std::vector<std::vector<std::string>> synonyms)
        : names_(std::move(names)), synonyms_(std::move(synonyms)) {
        if (names_.size() < 2)
            throw ValidationError("class catalog needs at least 2 classes");
        if (names_.size() >= kUnlabeled)
            throw ValidationError("class catalog too large; id 255 is reserved for UNLABELED");
        if (synonyms_.size() != names_.size())
            throw ValidationError("class catalog: synonyms table must have one entry per class");
        std::set<std::string> seen(names_.begin(), names_.end());
        if (seen.size() != names_.size())
            throw ValidationError("class catalog: class names must be unique");
    }

    std::size_t size() const noexcept { return names_.size(); }
    const std::string& name(std::size_t c) const { return names_.at(c); }
    const std::vector<std::string>& synonyms(std::size_t c) const { return synonyms_.at(c); }
    const std::vector<std::string>& names() const noexcept { return names_; }

private:
    std::vector<std::string> names_;
    std::vector<std::vector<std::string>> synonyms_;
};

/// Class ids of the default 8-class urban catalog.
namespace cls {
inline constexpr ClassId kBackground = 0;
inline constexpr ClassId kRoad = 1;
inline constexpr ClassId kBuilding = 2;
inline constexpr ClassId kCar = 3;
inline constexpr ClassId kPerson = 4;
inline constexpr ClassId kPole = 5;
inline constexpr ClassId kVegetation = 6;
inline constexpr ClassId kSign = 7;
}  // namespace cls

inline const ClassCatalog& default_catalog() {
    static const ClassCatalog catalog(
        {"background", "road", "building", "car", "person", "pole", "vegetation", "sign"},
        {{"sky", "open space"},
         {"street", "avenue", "lane"},
         {"house", "skyscraper", "facade"},
         {"vehicle", "automobile", "sedan"},
         {"pedestrian", "man", "woman"},
         {"lamp post", "utility pole", "post"},
         {"tree", "bush", "hedge"},
         {"traffic sign", "road sign", "stop sign"}});
    return catalog;
}

/// Returns `map` iff every label is UNLABELED or a valid class id of `catalog`.
inline const LabelMap& validate_label_map(const LabelMap& map, const ClassCatalog& catalog) {
    if (map.width < 0 || map.height < 0 ||
        map.labels.size() != static_cast<std::size_t>(map.width) * static_cast<std::size_t>(map.height))
        throw ValidationError("label map: buffer size does not match " + std::to_string(map.width) + "x" +
                              std::to_string(map.height));
    const std::size_t C = catalog.size();
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
        const ClassId v = map.labels[i];
        if (v != kUnlabeled && v >= C)
            throw ValidationError("label map: pixel " + std::to_string(i) + " has label " + std::to_string(v) +
                                  " outside [0," + std::to_string(C) + ")");
    }
    return map;
}

// ---------------------------------------------------------------------------
// Deterministic random numbers.
//
// xoshiro256** seeded through splitmix64. All derived quantities (doubles,
// bounded integers, normals) are computed here rather than through <random>
// distributions so sequences are identical across standard libraries.

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept {
    std::uint64_t s = a ^ (b * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL);
    splitmix64(s);
    return splitmix64(s);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

}  // namespace detail

class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {
        std::uint64_t sm = detail::mix64(seed, stream);
        for (auto& s : state_) s = detail::splitmix64(sm);
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }

    /// Child stream determined by (seed, stream id, tag) only; the parent's
    /// consumption state does not matter.
    RngStream fork(std::string_view tag) const { return RngStream(seed_, detail::mix64(stream_, detail::fnv1a(tag))); }

    RngStream fork(std::string_view tag, std::uint64_t index) const {
        return RngStream(seed_, detail::mix64(detail::mix64(stream_, detail::fnv1a(tag)), index + 1));
    }

    std::uint64_t next_u64() noexcept {
        const std::uint64_t result = detail::rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept {
        // Lemire's multiply-shift with rejection.
        __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<__uint128_t>(next_u64()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Standard normal via Box-Muller (no cached second value).
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::array<std::uint64_t, 4> state_{};
};

inline RngStream rng_fork(const RngStream& parent, std::string_view tag) { return parent.fork(tag); }

// ---------------------------------------------------------------------------
// Training configuration

struct TrainConfig {
    double lr = 0.5;
    std::int64_t iters_phase1 = 2000;
    std::int64_t iters_phase2 = 2000;
    std::int64_t batch_size = 8;
    double lambda_ce = 1.0;
    double lambda_dice = 1.0;
    double lambda_cls = 1.0;
    double alpha = 0.999;
    std::int64_t tau = 4;   // component area threshold, pixels
    std::int64_t k = 1;     // prompt points per component
    std::int64_t gen_size = 5000;
    bool finetune_backbone = false;

    bool operator==(const TrainConfig&) const = default;

    void validate() const {
        auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
        if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be a finite positive number");
        if (iters_phase1 < 0 || iters_phase2 < 0) fail("iteration counts must be >= 0");
        if (batch_size < 1) fail("batch_size must be >= 1");
        for (double w : {lambda_ce, lambda_dice, lambda_cls})
            if (!(w >= 0.0) || !std::isfinite(w)) fail("loss weights must be finite and >= 0");
        if (!(alpha >= 0.0 && alpha < 1.0)) fail("alpha must lie in [0,1)");
        if (tau < 0) fail("tau must be >= 0");
        if (k < 1) fail("k must be >= 1");
        if (gen_size < 0) fail("gen_size must be >= 0");
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return nlohmann::json{{"lr", c.lr},
                          {"iters_phase1", c.iters_phase1},
                          {"iters_phase2", c.iters_phase2},
                          {"batch_size", c.batch_size},
                          {"lambda_ce", c.lambda_ce},
                          {"lambda_dice", c.lambda_dice},
                          {"lambda_cls", c.lambda_cls},
                          {"alpha", c.alpha},
                          {"tau", c.tau},
                          {"k", c.k},
                          {"gen_size", c.gen_size},
                          {"finetune_backbone", c.finetune_backbone}};
}

/// Strict parse: `j` must be a flat object; unknown keys and wrongly typed
/// values are errors. Missing keys keep their defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("config: expected a JSON object");
    TrainConfig c;
    auto number = [](const nlohmann::json& v, const std::string& key) {
        if (!v.is_number()) throw ValidationError("config: key '" + key + "' must be a number");
        return v.get<double>();
    };
    auto integer = [](const nlohmann::json& v, const std::string& key) {
        if (!v.is_number_integer()) throw ValidationError("config: key '" + key + "' must be an integer");
        return v.get<std::int64_t>();
    };
    for (const auto& [key, v] : j.items()) {
        if (key == "lr") c.lr = number(v, key);
        else if (key == "iters_phase1") c.iters_phase1 = integer(v, key);
        else if (key == "iters_phase2") c.iters_phase2 = integer(v, key);
        else if (key == "batch_size") c.batch_size = integer(v, key);
        else if (key == "lambda_ce") c.lambda_ce = number(v, key);
        else if (key == "lambda_dice") c.lambda_dice = number(v, key);
        else if (key == "lambda_cls") c.lambda_cls = number(v, key);
        else if (key == "alpha") c.alpha = number(v, key);
        else if (key == "tau") c.tau = integer(v, key);
        else if (key == "k") c.k = integer(v, key);
        else if (key == "gen_size") c.gen_size = integer(v, key);
        else if (key == "finetune_backbone") {
            if (!v.is_boolean()) throw ValidationError("config: key 'finetune_backbone' must be a boolean");
            c.finetune_backbone = v.get<bool>();
        } else
            throw ValidationError("config: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

inline TrainConfig parse_train_config(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("config: malformed JSON: ") + e.what());
    }
    return train_config_from_json(j);
}

}  // namespace plrefine
