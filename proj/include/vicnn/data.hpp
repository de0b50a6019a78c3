#pragma once

// Corpus ingestion, corruption operators and (input, target) pairs for the
// denoising, deblurring and color-constancy tasks.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vicnn/error.hpp"
#include "vicnn/hash.hpp"
#include "vicnn/image_io.hpp"
#include "vicnn/tensor.hpp"

namespace vicnn {

enum class Task { denoise, deblur, color_constancy };

inline std::string to_string(Task t) {
    switch (t) {
        case Task::denoise: return "denoise";
        case Task::deblur: return "deblur";
        case Task::color_constancy: return "cc";
    }
    return "?";
}

inline Task task_from_string(const std::string& s) {
    if (s == "denoise") return Task::denoise;
    if (s == "deblur") return Task::deblur;
    if (s == "cc" || s == "color-constancy") return Task::color_constancy;
    throw UsageError("unknown task '" + s + "' (expected denoise, deblur or cc)");
}

using Illuminant = std::array<float, 3>;

inline constexpr double default_noise_sigma = 25.0 / 255.0;
inline constexpr double default_blur_sigma = 2.0;

struct CorpusEntry {
    std::string key;  // file name, plus "#qN" for quadrants
    Tensor image;
    std::optional<Illuminant> illuminant;
};

inline void check_illuminant(const Illuminant& il) {
    for (const float g : il)
        if (!(g > 0.0f) || !std::isfinite(g))
            throw ValidationError("illuminant components must be positive and finite");
}

/// Reads `<stem>.illum` next to an image: one line "R G B".
inline std::optional<Illuminant> read_illuminant(const std::filesystem::path& image_path) {
    auto side = image_path;
    side.replace_extension(".illum");
    if (!std::filesystem::exists(side)) return std::nullopt;
    std::ifstream in(side);
    Illuminant il{};
    if (!(in >> il[0] >> il[1] >> il[2])) throw DataError(side.string() + ": expected three numbers");
    try {
        check_illuminant(il);
    } catch (const ValidationError& e) {
        throw DataError(side.string() + ": " + e.what());
    }
    return il;
}

inline void write_illuminant(const std::filesystem::path& image_path, const Illuminant& il) {
    auto side = image_path;
    side.replace_extension(".illum");
    std::ofstream out(side);
    out << il[0] << ' ' << il[1] << ' ' << il[2] << '\n';
    if (!out) throw DataError("cannot write " + side.string());
}

/// Splits into top-left, top-right, bottom-left, bottom-right quadrants,
/// each resized to canvas x canvas (0 keeps the native quadrant size).
inline std::array<Tensor, 4> quad_split(const Tensor& image, std::size_t canvas = 0) {
    if (image.height() % 2 != 0 || image.width() % 2 != 0)
        throw ValidationError("quad_split needs even dimensions, got " + image.shape().str());
    const std::size_t h = image.height() / 2, w = image.width() / 2;
    std::array<Tensor, 4> q;
    for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t oy = (k / 2) * h, ox = (k % 2) * w;
        Tensor t(image.channels(), h, w);
        for (std::size_t c = 0; c < image.channels(); ++c)
            for (std::size_t y = 0; y < h; ++y) std::copy_n(image.row(c, oy + y) + ox, w, t.row(c, y));
        q[k] = canvas == 0 ? std::move(t) : resize_bilinear(t, canvas, canvas);
    }
    return q;
}

struct LoadOptions {
    std::size_t canvas = 128;
    bool quad = false;  // split each image into four quadrants before resizing
};

/// Loads every PNG/PNM file in `dir` (sorted by name). Undecodable files are
/// skipped with a warning on `warn`; an empty result is a DataError.
inline std::vector<CorpusEntry> load_corpus(const std::filesystem::path& dir, const LoadOptions& opt = {},
                                            std::ostream& warn = std::cerr) {
    if (!std::filesystem::is_directory(dir)) throw DataError("corpus directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<CorpusEntry> out;
    for (const auto& f : files) {
        Tensor img;
        std::optional<Illuminant> il;
        try {
            img = read_image(f);
            il = read_illuminant(f);
        } catch (const DataError& e) {
            warn << "warning: skipping " << f.filename().string() << ": " << e.what() << '\n';
            continue;
        }
        const std::string name = f.filename().string();
        if (opt.quad) {
            // drop a trailing odd row/column so the quadrants tile exactly
            if (img.height() % 2 || img.width() % 2) {
                Tensor even(3, img.height() & ~std::size_t{1}, img.width() & ~std::size_t{1});
                for (std::size_t c = 0; c < 3; ++c)
                    for (std::size_t y = 0; y < even.height(); ++y)
                        std::copy_n(img.row(c, y), even.width(), even.row(c, y));
                img = std::move(even);
            }
            if (img.height() < 2 || img.width() < 2) {
                warn << "warning: skipping " << name << ": too small to split\n";
                continue;
            }
            auto q = quad_split(img, opt.canvas);
            for (std::size_t k = 0; k < 4; ++k) out.push_back({name + "#q" + std::to_string(k), std::move(q[k]), il});
        } else {
            out.push_back({name, resize_bilinear(img, opt.canvas, opt.canvas), il});
        }
    }
    if (out.empty()) throw DataError("corpus " + dir.string() + " contains no decodable images");
    return out;
}

/// Adds N(0, sigma^2) per element and clamps to [0,1].
inline Tensor add_gaussian_noise(const Tensor& image, double sigma, std::uint64_t seed) {
    Tensor out = image;
    if (sigma == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& v : out.values()) v = static_cast<float>(std::clamp(static_cast<double>(v) + n(rng), 0.0, 1.0));
    return out;
}

inline std::vector<double> gaussian_kernel(double sigma) {
    const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    for (std::size_t i = 0; i < k.size(); ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(radius);
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    const double sum = std::accumulate(k.begin(), k.end(), 0.0);
    for (auto& v : k) v /= sum;
    return k;
}

/// Separable Gaussian blur, kernel truncated at ceil(3 sigma) and
/// renormalized, replicate padding.
inline Tensor gaussian_blur(const Tensor& image, double sigma = default_blur_sigma) {
    if (sigma <= 0.0) return image;
    const auto k = gaussian_kernel(sigma);
    const long r = static_cast<long>(k.size() / 2);
    const long H = static_cast<long>(image.height()), W = static_cast<long>(image.width());
    std::vector<double> tmp(image.shape().plane());
    Tensor out(image.shape());
    for (std::size_t c = 0; c < image.channels(); ++c) {
        for (long y = 0; y < H; ++y) {
            const float* row = image.row(c, static_cast<std::size_t>(y));
            for (long x = 0; x < W; ++x) {
                double acc = 0.0;
                for (long i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * row[std::clamp(x + i, 0L, W - 1)];
                tmp[static_cast<std::size_t>(y * W + x)] = acc;
            }
        }
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                double acc = 0.0;
                for (long i = -r; i <= r; ++i)
                    acc += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0L, H - 1) * W + x)];
                out(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = static_cast<float>(acc);
            }
    }
    return out;
}

/// Divides channel c by illuminant_c and rescales by max(illuminant), then
/// clamps to [0,1].
inline Tensor cc_ground_truth(const Tensor& image, const Illuminant& il) {
    check_illuminant(il);
    if (image.channels() != 3) throw ShapeError("cc_ground_truth needs 3 channels, got " + image.shape().str());
    const double peak = *std::max_element(il.begin(), il.end());
    Tensor out(image.shape());
    const std::size_t n = image.shape().plane();
    for (std::size_t c = 0; c < 3; ++c) {
        const double gain = peak / il[c];
        for (std::size_t i = 0; i < n; ++i)
            out[c * n + i] = static_cast<float>(std::clamp(image[c * n + i] * gain, 0.0, 1.0));
    }
    return out;
}

/// Casts a neutral image under an illuminant: I_c * illuminant_c / max.
inline Tensor apply_illuminant(const Tensor& image, const Illuminant& il) {
    check_illuminant(il);
    const double peak = *std::max_element(il.begin(), il.end());
    Tensor out(image.shape());
    const std::size_t n = image.shape().plane();
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n; ++i)
            out[c * n + i] = static_cast<float>(std::clamp(image[c * n + i] * il[c] / peak, 0.0, 1.0));
    return out;
}

/// Random chromatic gains in [0.6, 1.4] for red and blue, unit green.
inline Illuminant synthetic_illuminant(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> g(0.6, 1.4);
    const auto r = static_cast<float>(g(rng));
    const auto b = static_cast<float>(g(rng));
    return {r, 1.0f, b};
}

struct SamplePair {
    Tensor input;
    Tensor target;
    Task task = Task::denoise;
};

struct CorruptionConfig {
    double noise_sigma = default_noise_sigma;
    double blur_sigma = default_blur_sigma;
};

/// Deterministic per-sample seed derived from the run seed and sample key.
inline std::uint64_t sample_seed(std::uint64_t seed, const std::string& key) {
    return splitmix64(seed ^ Fnv1a{}.text(key).value());
}

inline SamplePair make_pair(const CorpusEntry& e, Task task, std::uint64_t seed, const CorruptionConfig& cfg = {}) {
    switch (task) {
        case Task::denoise: return {add_gaussian_noise(e.image, cfg.noise_sigma, seed), e.image, task};
        case Task::deblur: return {gaussian_blur(e.image, cfg.blur_sigma), e.image, task};
        case Task::color_constancy: {
            if (e.illuminant) return {e.image, cc_ground_truth(e.image, *e.illuminant), task};
            const auto il = synthetic_illuminant(seed);
            Tensor cast = apply_illuminant(e.image, il);
            Tensor target = cc_ground_truth(cast, il);
            return {std::move(cast), std::move(target), task};
        }
    }
    throw UsageError("unknown task");
}

struct SplitConfig {
    double train = 0.7;
    double val = 0.2;
    double test = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9)
            throw ValidationError("split fractions must be nonnegative and sum to 1");
    }
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

/// Sorts keys, shuffles with the seed, then assigns floor(val*n) to val,
/// floor(test*n) to test and the remainder to train. Indices refer to `keys`.
inline SplitIndices split_indices(const std::vector<std::string>& keys, const SplitConfig& cfg) {
    cfg.validate();
    std::vector<std::size_t> order(keys.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<double>(keys.size());
    const auto n_val = static_cast<std::size_t>(std::floor(cfg.val * n + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(cfg.test * n + 1e-9));
    SplitIndices s;
    s.val.assign(order.begin(), order.begin() + static_cast<long>(n_val));
    s.test.assign(order.begin() + static_cast<long>(n_val), order.begin() + static_cast<long>(n_val + n_test));
    s.train.assign(order.begin() + static_cast<long>(n_val + n_test), order.end());
    return s;
}

struct DatasetSplit {
    std::vector<CorpusEntry> train, val, test;
};

inline DatasetSplit split_dataset(std::vector<CorpusEntry> entries, const SplitConfig& cfg) {
    std::vector<std::string> keys;
    for (const auto& e : entries) keys.push_back(e.key);
    const auto idx = split_indices(keys, cfg);
    DatasetSplit out;
    for (const auto i : idx.train) out.train.push_back(std::move(entries[i]));
    for (const auto i : idx.val) out.val.push_back(std::move(entries[i]));
    for (const auto i : idx.test) out.test.push_back(std::move(entries[i]));
    return out;
}

inline std::vector<SamplePair> make_pairs(const std::vector<CorpusEntry>& entries, Task task, std::uint64_t seed,
                                          const CorruptionConfig& cfg = {}) {
    std::vector<SamplePair> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(make_pair(e, task, sample_seed(seed, e.key), cfg));
    return out;
}

/// Content digest over keys, pixels and illuminants in the given order.
inline std::string corpus_digest(const std::vector<CorpusEntry>& entries) {
    Fnv1a h;
    for (const auto& e : entries) {
        h.text(e.key).values(e.image.span());
        if (e.illuminant) h.values(std::span<const float>(*e.illuminant));
    }
    return h.hex();
}

struct PreparedData {
    DatasetSplit split;
    nlohmann::json manifest;
};

/// Loads, splits and describes a corpus. The manifest records every
/// assignment and per-sample seed; its "digest" field hashes the rest.
inline PreparedData prepare(const std::filesystem::path& dir, Task task, const SplitConfig& split_cfg,
                            const LoadOptions& load = {}, const CorruptionConfig& corruption = {},
                            std::ostream& warn = std::cerr) {
    auto entries = load_corpus(dir, load, warn);
    nlohmann::json m;
    m["corpus"] = dir.lexically_normal().string();
    m["corpus_digest"] = corpus_digest(entries);
    m["canvas"] = load.canvas;
    m["quad"] = load.quad;
    m["task"] = to_string(task);
    m["noise_sigma"] = corruption.noise_sigma;
    m["blur_sigma"] = corruption.blur_sigma;
    m["noise_clamped"] = true;
    m["split"] = {{"train", split_cfg.train}, {"val", split_cfg.val}, {"test", split_cfg.test}, {"seed", split_cfg.seed}};
    PreparedData out{split_dataset(std::move(entries), split_cfg), {}};
    nlohmann::json samples = nlohmann::json::array();
    auto list = [&](const std::vector<CorpusEntry>& part, const char* name) {
        for (const auto& e : part) {
            nlohmann::json s{{"key", e.key}, {"split", name}, {"seed", sample_seed(split_cfg.seed, e.key)}};
            if (e.illuminant) s["illuminant"] = *e.illuminant;
            samples.push_back(s);
        }
    };
    list(out.split.train, "train");
    list(out.split.val, "val");
    list(out.split.test, "test");
    m["samples"] = samples;
    m["counts"] = {{"train", out.split.train.size()}, {"val", out.split.val.size()}, {"test", out.split.test.size()}};
    m["digest"] = Fnv1a{}.text(m.dump()).hex();
    out.manifest = std::move(m);
    return out;
}

inline constexpr double synthetic_optical_blur = 0.6;

/// Writes `count` dead-leaves images (occluding disks and rectangles with
/// power-law sizes and a little shading, softened by a small optical blur)
/// to `dir`. With `illuminants`, each image is cast under a synthetic
/// illuminant recorded in a sidecar.
inline std::vector<std::filesystem::path> synthesize_corpus(const std::filesystem::path& dir, std::size_t count,
                                                            std::uint64_t seed, std::size_t size = 128,
                                                            bool illuminants = false) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    for (std::size_t n = 0; n < count; ++n) {
        std::mt19937_64 rng(splitmix64(seed + n));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Tensor img(3, size, size);
        const double s = static_cast<double>(size);
        std::array<double, 3> base{u(rng), u(rng), u(rng)};
        for (std::size_t c = 0; c < 3; ++c)
            for (auto* p = img.channel(c); p != img.channel(c) + img.shape().plane(); ++p) *p = static_cast<float>(base[c]);
        const double r_min = s / 32.0, r_max = s / 4.0;
        for (int leaf = 0; leaf < 220; ++leaf) {
            // radius density ~ r^-3 on [r_min, r_max]
            const double a = 1.0 / (r_min * r_min), b = 1.0 / (r_max * r_max);
            const double r = 1.0 / std::sqrt(a - u(rng) * (a - b));
            const double cx = u(rng) * s, cy = u(rng) * s;
            const double lum = u(rng);
            std::array<double, 3> col{};
            for (auto& c : col) c = std::clamp(lum + 0.35 * (u(rng) - 0.5), 0.0, 1.0);
            const double gx = 0.3 * (u(rng) - 0.5) / r, gy = 0.3 * (u(rng) - 0.5) / r;
            const bool rect = u(rng) < 0.3;
            const double aspect = 0.5 + u(rng);
            const auto y0 = static_cast<long>(std::max(0.0, std::floor(cy - 1.5 * r)));
            const auto y1 = static_cast<long>(std::min(s, std::ceil(cy + 1.5 * r)));
            const auto x0 = static_cast<long>(std::max(0.0, std::floor(cx - 1.5 * r)));
            const auto x1 = static_cast<long>(std::min(s, std::ceil(cx + 1.5 * r)));
            for (long y = y0; y < y1; ++y)
                for (long x = x0; x < x1; ++x) {
                    const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
                    const bool inside = rect ? std::abs(dx) <= r * aspect && std::abs(dy) <= r / aspect
                                             : dx * dx + dy * dy <= r * r;
                    if (!inside) continue;
                    const double shade = gx * dx + gy * dy;
                    for (std::size_t c = 0; c < 3; ++c)
                        img(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
                            static_cast<float>(std::clamp(col[c] + shade, 0.0, 1.0));
                }
        }
        img = gaussian_blur(img, synthetic_optical_blur);
        char name[32];
        std::snprintf(name, sizeof name, "leaves_%04zu.png", n);
        const auto path = dir / name;
        if (illuminants) {
            const auto il = synthetic_illuminant(splitmix64(seed ^ (n + 0x5bd1e995ull)));
            write_png(path, apply_illuminant(img, il));
            write_illuminant(path, il);
        } else {
            write_png(path, img);
        }
        written.push_back(path);
    }
    return written;
}

}  // namespace vicnn
