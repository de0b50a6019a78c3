#pragma once

// Procedural brightness/color illusion stimuli with target masks, probe
// rows and the human-expected direction of the induced shift.
//
// Whenever scale, height and width are all even, a stimulus is rendered at
// half size and upscaled 2x nearest-neighbor, so doubling canvas and scale
// together always reproduces an exact 2x upscale.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vicnn/error.hpp"
#include "vicnn/ops.hpp"
#include "vicnn/tensor.hpp"

namespace vicnn {

enum class IllusionKind { dungeon, hong_shevell, white, luminance_gradient, chevreul };
enum class EffectFamily { assimilation, contrast, band_edge };

inline constexpr std::array<IllusionKind, 5> all_illusions{IllusionKind::dungeon, IllusionKind::hong_shevell,
                                                           IllusionKind::white, IllusionKind::luminance_gradient,
                                                           IllusionKind::chevreul};

inline std::string to_string(IllusionKind k) {
    switch (k) {
        case IllusionKind::dungeon: return "dungeon";
        case IllusionKind::hong_shevell: return "hong-shevell";
        case IllusionKind::white: return "white";
        case IllusionKind::luminance_gradient: return "luminance-gradient";
        case IllusionKind::chevreul: return "chevreul";
    }
    return "?";
}

inline IllusionKind illusion_from_string(const std::string& s) {
    for (const auto k : all_illusions)
        if (to_string(k) == s) return k;
    throw UsageError("unknown illusion '" + s +
                     "' (expected dungeon, hong-shevell, white, luminance-gradient or chevreul)");
}

inline std::string to_string(EffectFamily f) {
    switch (f) {
        case EffectFamily::assimilation: return "assimilation";
        case EffectFamily::contrast: return "contrast";
        case EffectFamily::band_edge: return "band-edge";
    }
    return "?";
}

/// Target size at which each illusion is shown by default.
inline std::size_t baseline_scale(IllusionKind k) {
    switch (k) {
        case IllusionKind::dungeon: return 4;
        case IllusionKind::hong_shevell: return 1;
        case IllusionKind::white: return 4;
        case IllusionKind::luminance_gradient: return 5;
        case IllusionKind::chevreul: return 10;
    }
    return 1;
}

using RGB = std::array<float, 3>;

inline constexpr float dark_level = 0.1f;
inline constexpr float light_level = 0.9f;
inline constexpr float target_level = 0.5f;

struct Palette {
    RGB red{0.8f, 0.2f, 0.2f};
    RGB green{0.2f, 0.8f, 0.2f};
    RGB yellow{0.8f, 0.8f, 0.2f};
    friend bool operator==(const Palette&, const Palette&) = default;
};

struct StimulusSpec {
    IllusionKind kind = IllusionKind::dungeon;
    std::size_t scale = 4;
    bool colored = false;
    std::size_t height = 128;
    std::size_t width = 128;
    Palette palette{};
    friend bool operator==(const StimulusSpec&, const StimulusSpec&) = default;
};

inline StimulusSpec baseline_spec(IllusionKind k, bool colored = false) {
    return StimulusSpec{k, baseline_scale(k), colored};
}

using Mask = BasicTensor<std::uint8_t>;

/// Horizontal profile segment: columns [x0, x1) of `row`.
struct Probe {
    std::size_t row = 0;
    std::size_t x0 = 0;
    std::size_t x1 = 0;
    friend bool operator==(const Probe&, const Probe&) = default;
};

/// Sign of mean(A) - mean(B) a human observer reports, for R, G, B and
/// luminance. For Chevreul the sign is the polarity of the band-edge
/// overshoot.
using Expected = std::array<int, 4>;
inline constexpr std::array<const char*, 4> channel_names{"R", "G", "B", "Y"};

struct Stimulus {
    StimulusSpec spec;
    Tensor image;
    std::vector<Mask> masks;
    std::vector<Probe> probes;
    Expected expected{};
    EffectFamily family = EffectFamily::assimilation;
};

inline EffectFamily effect_family(IllusionKind k) {
    switch (k) {
        case IllusionKind::luminance_gradient: return EffectFamily::contrast;
        case IllusionKind::chevreul: return EffectFamily::band_edge;
        default: return EffectFamily::assimilation;
    }
}

inline Expected expected_directions(IllusionKind k, bool colored) {
    switch (k) {
        case IllusionKind::dungeon:
        case IllusionKind::hong_shevell:
            // left target sits in a dark (red) surround, right in a light (green) one
            return colored ? Expected{+1, -1, 0, 0} : Expected{-1, -1, -1, -1};
        case IllusionKind::white:
            // left target on a dark (red) bar between light (yellow) bars
            return colored ? Expected{0, +1, 0, 0} : Expected{+1, +1, +1, +1};
        case IllusionKind::luminance_gradient:
            // left target on the dark (green) end of the ramp
            return colored ? Expected{+1, -1, 0, 0} : Expected{+1, +1, +1, +1};
        case IllusionKind::chevreul:
            return colored ? Expected{+1, 0, 0, +1} : Expected{+1, +1, +1, +1};
    }
    return {};
}

inline constexpr std::array<double, 3> luminance_weights{0.2989, 0.5870, 0.1140};

template <typename T>
BasicTensor<T> to_grayscale(const BasicTensor<T>& image) {
    if (image.channels() != 3) throw ShapeError("to_grayscale needs 3 channels, got " + image.shape().str());
    BasicTensor<T> out(1, image.height(), image.width());
    const std::size_t n = image.shape().plane();
    for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (std::size_t c = 0; c < 3; ++c) v += luminance_weights[c] * static_cast<double>(image[c * n + i]);
        out[i] = static_cast<T>(v);
    }
    return out;
}

namespace detail {

struct Canvas {
    Tensor image;
    std::vector<Mask> masks;

    Canvas(std::size_t h, std::size_t w, std::size_t n_masks) : image(3, h, w), masks(n_masks, Mask(1, h, w)) {}

    void set(std::size_t y, std::size_t x, const RGB& c) {
        for (std::size_t k = 0; k < 3; ++k) image(k, y, x) = c[k];
    }
    void target(std::size_t m, std::size_t y, std::size_t x) {
        set(y, x, {target_level, target_level, target_level});
        masks[m](0, y, x) = 1;
    }
};

inline RGB gray(float v) { return {v, v, v}; }

[[noreturn]] inline void too_large(const StimulusSpec& s, const std::string& why) {
    throw ValidationError(to_string(s.kind) + ": scale " + std::to_string(s.scale) + " too large for " +
                          std::to_string(s.height) + "x" + std::to_string(s.width) + " canvas (" + why + ")");
}

// Each half holds an n x n lattice of pitch 2s; inducer squares of side s in
// the opposite polarity to the background, the 2x2 central cells are targets.
inline Stimulus render_dungeon(const StimulusSpec& s) {
    const std::size_t hw = s.width / 2, p = 2 * s.scale;
    const std::size_t n = std::min({std::size_t{8}, hw / p, s.height / p});
    if (n < 4) too_large(s, "fewer than 4x4 lattice cells fit in each half");
    const RGB dark = s.colored ? s.palette.red : gray(dark_level);
    const RGB light = s.colored ? s.palette.green : gray(light_level);
    Canvas cv(s.height, s.width, 2);
    const std::size_t oy = (s.height - n * p) / 2, t0 = (n - 2) / 2;
    for (std::size_t side = 0; side < 2; ++side) {
        const RGB& bg = side == 0 ? dark : light;
        const RGB& fg = side == 0 ? light : dark;
        const std::size_t x_begin = side * hw, x_end = side == 0 ? hw : s.width;
        for (std::size_t y = 0; y < s.height; ++y)
            for (std::size_t x = x_begin; x < x_end; ++x) cv.set(y, x, bg);
        const std::size_t ox = x_begin + (hw - n * p) / 2;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const bool is_target = (i == t0 || i == t0 + 1) && (j == t0 || j == t0 + 1);
                const std::size_t y0 = oy + i * p + s.scale / 2, x0 = ox + j * p + s.scale / 2;
                for (std::size_t y = y0; y < y0 + s.scale; ++y)
                    for (std::size_t x = x0; x < x0 + s.scale; ++x) {
                        if (is_target)
                            cv.target(side, y, x);
                        else
                            cv.set(y, x, fg);
                    }
            }
    }
    Stimulus out{s, std::move(cv.image), std::move(cv.masks), {}, {}, {}};
    for (std::size_t i = t0; i < t0 + 2; ++i) out.probes.push_back({oy + i * p + s.scale / 2 + s.scale / 2, 0, s.width});
    return out;
}

// Concentric rings of width s around each half's center; ring index 6 is the
// test ring. Ring parity alternates dark/light with mirrored phase on the right.
inline constexpr std::size_t hong_shevell_test_ring = 6;

inline Stimulus render_hong_shevell(const StimulusSpec& s) {
    const std::size_t hw = s.width / 2;
    const std::size_t radius = std::min(s.height, hw) / 2;
    if ((hong_shevell_test_ring + 2) * s.scale > radius) too_large(s, "test ring and its outer flank must fit");
    const RGB dark = s.colored ? s.palette.red : gray(dark_level);
    const RGB light = s.colored ? s.palette.green : gray(light_level);
    Canvas cv(s.height, s.width, 2);
    const double cy = static_cast<double>(s.height) / 2.0;
    for (std::size_t side = 0; side < 2; ++side) {
        const std::size_t x_begin = side * hw, x_end = side == 0 ? hw : s.width;
        const double cx = static_cast<double>(x_begin) + static_cast<double>(hw) / 2.0;
        for (std::size_t y = 0; y < s.height; ++y)
            for (std::size_t x = x_begin; x < x_end; ++x) {
                const double d = std::hypot(static_cast<double>(y) + 0.5 - cy, static_cast<double>(x) + 0.5 - cx);
                const auto ring = static_cast<std::size_t>(d / static_cast<double>(s.scale));
                if (ring == hong_shevell_test_ring) {
                    cv.target(side, y, x);
                    continue;
                }
                const bool odd = ring % 2 == 1;
                cv.set(y, x, (odd == (side == 0)) ? dark : light);
            }
    }
    return Stimulus{s, std::move(cv.image), std::move(cv.masks), {{s.height / 2, 0, s.width}}, {}, {}};
}

// Vertical square-wave grating (even bars dark); targets s wide and 2s high
// on the dark bar nearest W/4 and the light bar nearest 3W/4.
inline Stimulus render_white(const StimulusSpec& s) {
    const std::size_t bars = s.width / s.scale;
    if (bars < 8 || s.height < 4 * s.scale) too_large(s, "needs 8 bars across and 4 bar widths of height");
    auto nearest_bar = [&](double x_center, std::size_t parity) {
        std::size_t best = parity;
        double best_d = 1e300;
        for (std::size_t b = parity; b + 1 < bars; b += 2) {
            if (b == 0) continue;
            const double d = std::abs((static_cast<double>(b) + 0.5) * static_cast<double>(s.scale) - x_center);
            if (d < best_d) best_d = d, best = b;
        }
        return best;
    };
    const std::size_t left_bar = nearest_bar(static_cast<double>(s.width) / 4.0, 0);
    const std::size_t right_bar = nearest_bar(3.0 * static_cast<double>(s.width) / 4.0, 1);
    const RGB dark = s.colored ? s.palette.red : gray(dark_level);
    const RGB light = s.colored ? s.palette.yellow : gray(light_level);
    Canvas cv(s.height, s.width, 2);
    for (std::size_t y = 0; y < s.height; ++y)
        for (std::size_t x = 0; x < s.width; ++x) cv.set(y, x, (x / s.scale) % 2 == 0 ? dark : light);
    const std::size_t y0 = s.height / 2 - s.scale;
    for (std::size_t m = 0; m < 2; ++m) {
        const std::size_t x0 = (m == 0 ? left_bar : right_bar) * s.scale;
        for (std::size_t y = y0; y < y0 + 2 * s.scale; ++y)
            for (std::size_t x = x0; x < x0 + s.scale; ++x) cv.target(m, y, x);
    }
    return Stimulus{s, std::move(cv.image), std::move(cv.masks), {{s.height / 2, 0, s.width}}, {}, {}};
}

// Horizontal ramp, dark left to light right; three disks of diameter s per
// side at W/8 and 7W/8 (mirrored origins so both sides are identical).
inline Stimulus render_luminance_gradient(const StimulusSpec& s) {
    const double d = static_cast<double>(s.scale);
    if (4 * s.scale >= s.height || 4 * s.scale > s.width) too_large(s, "three disks per side must stay separated");
    const auto bx = static_cast<std::size_t>(std::max(0.0, std::round(static_cast<double>(s.width) / 8.0 - d / 2.0)));
    Canvas cv(s.height, s.width, 2);
    for (std::size_t x = 0; x < s.width; ++x) {
        const float t = (static_cast<float>(x) + 0.5f) / static_cast<float>(s.width);
        RGB c = gray(dark_level + (light_level - dark_level) * t);
        if (s.colored)
            for (std::size_t k = 0; k < 3; ++k) c[k] = s.palette.green[k] + (s.palette.red[k] - s.palette.green[k]) * t;
        for (std::size_t y = 0; y < s.height; ++y) cv.set(y, x, c);
    }
    std::vector<Probe> probes;
    for (const double frac : {0.25, 0.5, 0.75}) {
        const auto by = static_cast<std::size_t>(std::round(static_cast<double>(s.height) * frac - d / 2.0));
        for (std::size_t m = 0; m < 2; ++m) {
            const std::size_t ox = m == 0 ? bx : s.width - bx - s.scale;
            for (std::size_t i = 0; i < s.scale; ++i)
                for (std::size_t j = 0; j < s.scale; ++j) {
                    const double dy = static_cast<double>(i) + 0.5 - d / 2.0, dx = static_cast<double>(j) + 0.5 - d / 2.0;
                    if (dy * dy + dx * dx <= d * d / 4.0) cv.target(m, by + i, ox + j);
                }
        }
        probes.push_back({by + s.scale / 2, 0, s.width});
    }
    return Stimulus{s, std::move(cv.image), std::move(cv.masks), std::move(probes), {}, {}};
}

inline constexpr std::size_t chevreul_bands = 5;

// Up to five bands of width s spanning [0.1, 0.9], centered; the margins
// continue the first and last band.
inline Stimulus render_chevreul(const StimulusSpec& s) {
    const std::size_t n = std::min(chevreul_bands, s.width / s.scale);
    if (n < 3) too_large(s, "fewer than 3 bands fit");
    const std::size_t x0 = (s.width - n * s.scale) / 2;
    Canvas cv(s.height, s.width, n);
    for (std::size_t x = 0; x < s.width; ++x) {
        const std::size_t band =
            x < x0 ? 0 : std::min(n - 1, (x - x0) / s.scale);
        const float v = dark_level + (light_level - dark_level) * static_cast<float>(band) / static_cast<float>(n - 1);
        const RGB c = s.colored ? RGB{v, s.palette.red[1], s.palette.red[2]} : gray(v);
        const bool inside = x >= x0 && x < x0 + n * s.scale;
        for (std::size_t y = 0; y < s.height; ++y) {
            cv.set(y, x, c);
            if (inside) cv.masks[band](0, y, x) = 1;
        }
    }
    return Stimulus{s, std::move(cv.image), std::move(cv.masks), {{s.height / 2, 0, s.width}}, {}, {}};
}

inline Stimulus upscale2(Stimulus st, const StimulusSpec& full) {
    st.spec = full;
    st.image = upsample_nearest2(st.image);
    for (auto& m : st.masks) m = upsample_nearest2(m);
    for (auto& p : st.probes) p = {2 * p.row, 2 * p.x0, 2 * p.x1};
    return st;
}

}  // namespace detail

/// Renders a stimulus. Throws ValidationError when the scale does not fit
/// the canvas.
inline Stimulus generate(const StimulusSpec& spec) {
    if (spec.scale < 1) throw ValidationError("stimulus scale must be >= 1");
    if (spec.height < 8 || spec.width < 8) throw ValidationError("stimulus canvas must be at least 8x8");
    if (spec.scale % 2 == 0 && spec.height % 2 == 0 && spec.width % 2 == 0) {
        StimulusSpec half = spec;
        half.scale /= 2;
        half.height /= 2;
        half.width /= 2;
        Stimulus st;
        try {
            st = generate(half);
        } catch (const ValidationError&) {
            detail::too_large(spec, "does not fit at reduced resolution");
        }
        return detail::upscale2(std::move(st), spec);
    }
    Stimulus st;
    switch (spec.kind) {
        case IllusionKind::dungeon: st = detail::render_dungeon(spec); break;
        case IllusionKind::hong_shevell: st = detail::render_hong_shevell(spec); break;
        case IllusionKind::white: st = detail::render_white(spec); break;
        case IllusionKind::luminance_gradient: st = detail::render_luminance_gradient(spec); break;
        case IllusionKind::chevreul: st = detail::render_chevreul(spec); break;
    }
    st.expected = expected_directions(spec.kind, spec.colored);
    st.family = effect_family(spec.kind);
    return st;
}

struct BoundingBox {
    std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open
};

inline std::optional<BoundingBox> bounding_box(const Mask& m) {
    std::optional<BoundingBox> box;
    for (std::size_t y = 0; y < m.height(); ++y)
        for (std::size_t x = 0; x < m.width(); ++x)
            if (m(0, y, x)) {
                if (!box) box = BoundingBox{y, x, y + 1, x + 1};
                box->y0 = std::min(box->y0, y), box->x0 = std::min(box->x0, x);
                box->y1 = std::max(box->y1, y + 1), box->x1 = std::max(box->x1, x + 1);
            }
    return box;
}

inline std::size_t mask_area(const Mask& m) {
    std::size_t n = 0;
    for (const auto v : m.values()) n += v != 0;
    return n;
}

/// Mean of each image channel over a mask (double accumulation).
template <typename T>
std::vector<double> masked_means(const BasicTensor<T>& image, const Mask& m) {
    if (m.height() != image.height() || m.width() != image.width())
        throw ShapeError("mask " + m.shape().str() + " does not match image " + image.shape().str());
    std::vector<double> sum(image.channels(), 0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i]) {
            ++n;
            for (std::size_t c = 0; c < image.channels(); ++c) sum[c] += image[c * m.size() + i];
        }
    if (n == 0) throw ValidationError("empty target mask");
    for (auto& v : sum) v /= static_cast<double>(n);
    return sum;
}

struct StimulusDiagnostics {
    bool ok = true;
    std::vector<std::string> problems;
    std::vector<std::size_t> mask_areas;
    std::vector<std::vector<double>> target_means;  // per mask, per channel
};

/// Checks every stimulus invariant and reports the first offending pixels.
inline StimulusDiagnostics validate_stimulus(const Stimulus& s) {
    StimulusDiagnostics d;
    auto fail = [&d](std::string msg) {
        d.ok = false;
        if (d.problems.size() < 16) d.problems.push_back(std::move(msg));
    };
    const Shape want{3, s.spec.height, s.spec.width};
    if (s.image.shape() != want) {
        fail("image shape " + s.image.shape().str() + ", expected " + want.str());
        return d;
    }
    if (!s.image.all_finite()) fail("image contains non-finite values");
    const bool banded = s.spec.kind == IllusionKind::chevreul;
    if (banded ? s.masks.size() < 3 : s.masks.size() != 2)
        fail("unexpected mask count " + std::to_string(s.masks.size()));
    const Shape mshape{1, s.spec.height, s.spec.width};
    for (std::size_t m = 0; m < s.masks.size(); ++m) {
        if (s.masks[m].shape() != mshape) {
            fail("mask " + std::to_string(m) + " has shape " + s.masks[m].shape().str());
            return d;
        }
        d.mask_areas.push_back(mask_area(s.masks[m]));
        if (d.mask_areas.back() == 0) {
            fail("mask " + std::to_string(m) + " is empty");
            continue;
        }
        d.target_means.push_back(masked_means(s.image, s.masks[m]));
    }
    if (!d.ok) return d;
    for (std::size_t y = 0; y < s.spec.height; ++y)
        for (std::size_t x = 0; x < s.spec.width; ++x) {
            std::size_t owners = 0;
            for (const auto& m : s.masks) owners += m(0, y, x) != 0;
            if (owners > 1) fail("masks overlap at (y=" + std::to_string(y) + ", x=" + std::to_string(x) + ")");
        }
    for (std::size_t m = 0; m < s.masks.size(); ++m) {
        // every target pixel must equal the reference value (0.5, or the band's first pixel)
        std::optional<RGB> ref;
        if (!banded) ref = RGB{target_level, target_level, target_level};
        for (std::size_t y = 0; y < s.spec.height; ++y)
            for (std::size_t x = 0; x < s.spec.width; ++x) {
                if (!s.masks[m](0, y, x)) continue;
                const RGB px{s.image(0, y, x), s.image(1, y, x), s.image(2, y, x)};
                if (!ref) ref = px;
                for (std::size_t c = 0; c < 3; ++c)
                    if (px[c] != (*ref)[c])
                        fail("mask " + std::to_string(m) + " pixel (c=" + std::to_string(c) + ", y=" +
                             std::to_string(y) + ", x=" + std::to_string(x) + ") = " + std::to_string(px[c]) +
                             ", expected " + std::to_string((*ref)[c]));
            }
    }
    if (!banded && s.masks.size() == 2) {
        if (d.mask_areas[0] != d.mask_areas[1])
            fail("mask areas differ: " + std::to_string(d.mask_areas[0]) + " vs " + std::to_string(d.mask_areas[1]));
        if (d.target_means[0] != d.target_means[1]) fail("target means differ between mask A and mask B");
    }
    if (banded)
        for (std::size_t m = 1; m < d.target_means.size(); ++m)
            if (!(d.target_means[m][0] > d.target_means[m - 1][0]))
                fail("band " + std::to_string(m) + " is not brighter than band " + std::to_string(m - 1));
    for (const auto& p : s.probes)
        if (p.row >= s.spec.height || p.x0 >= p.x1 || p.x1 > s.spec.width)
            fail("probe row " + std::to_string(p.row) + " [" + std::to_string(p.x0) + ", " + std::to_string(p.x1) +
                 ") lies outside the canvas");
    if (s.probes.empty()) fail("no probes");
    return d;
}

inline nlohmann::json to_json(const Palette& p) {
    return {{"red", p.red}, {"green", p.green}, {"yellow", p.yellow}};
}

inline nlohmann::json to_json(const StimulusSpec& s) {
    return {{"kind", to_string(s.kind)}, {"scale", s.scale},         {"colored", s.colored},
            {"height", s.height},        {"width", s.width},         {"palette", to_json(s.palette)}};
}

inline StimulusSpec stimulus_spec_from_json(const nlohmann::json& j) {
    StimulusSpec s;
    try {
        s.kind = illusion_from_string(j.at("kind").get<std::string>());
        s.scale = j.value("scale", baseline_scale(s.kind));
        s.colored = j.value("colored", false);
        s.height = j.value("height", std::size_t{128});
        s.width = j.value("width", std::size_t{128});
        if (j.contains("palette")) {
            const auto& p = j.at("palette");
            s.palette.red = p.value("red", s.palette.red);
            s.palette.green = p.value("green", s.palette.green);
            s.palette.yellow = p.value("yellow", s.palette.yellow);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("stimulus spec: ") + e.what());
    }
    return s;
}

/// Sidecar metadata: spec, mask bounding boxes, probes, expected directions.
inline nlohmann::json metadata(const Stimulus& s) {
    nlohmann::json masks = nlohmann::json::array();
    for (const auto& m : s.masks) {
        const auto b = bounding_box(m);
        nlohmann::json e{{"area", mask_area(m)}};
        if (b) e["bbox"] = {{"y0", b->y0}, {"x0", b->x0}, {"y1", b->y1}, {"x1", b->x1}};
        masks.push_back(e);
    }
    nlohmann::json probes = nlohmann::json::array();
    for (const auto& p : s.probes) probes.push_back({{"row", p.row}, {"x0", p.x0}, {"x1", p.x1}});
    nlohmann::json expected;
    for (std::size_t c = 0; c < 4; ++c) expected[channel_names[c]] = s.expected[c];
    return {{"spec", to_json(s.spec)},
            {"family", to_string(s.family)},
            {"masks", masks},
            {"probes", probes},
            {"expected", expected}};
}

}  // namespace vicnn
