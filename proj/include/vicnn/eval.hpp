#pragma once

// Runs frozen models on stimuli, measures the induced target shift and
// classifies it against the human-expected direction.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vicnn/checkpoint.hpp"
#include "vicnn/model.hpp"
#include "vicnn/stimuli.hpp"

namespace vicnn {

inline constexpr double default_tau = 0.005;

enum class Verdict { replicated, null, inverted };

inline std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::replicated: return "replicated";
        case Verdict::null: return "null";
        case Verdict::inverted: return "inverted";
    }
    return "?";
}

/// replicated iff sign(E) == expected and |E| > tau; inverted iff the sign
/// is opposite and |E| > tau; null otherwise (always null for expected 0).
inline Verdict verdict(double effect, int expected, double tau = default_tau) {
    if (expected == 0 || !(std::abs(effect) > tau)) return Verdict::null;
    return (effect > 0) == (expected > 0) ? Verdict::replicated : Verdict::inverted;
}

inline std::string stimulus_id(const StimulusSpec& s) {
    return to_string(s.kind) + "-s" + std::to_string(s.scale) + (s.colored ? "-color" : "-gray");
}

/// Input and output values along one probe, per channel (R, G, B, Y).
struct ProfileRecord {
    std::string stimulus;
    Probe probe;
    std::array<std::vector<float>, 4> input;
    std::array<std::vector<float>, 4> output;
    std::vector<std::pair<std::size_t, std::size_t>> target_spans;  // [x0, x1) along the probe
};

inline std::vector<ProfileRecord> profiles(const Stimulus& st, const Tensor& output) {
    const auto in_y = to_grayscale(st.image);
    const auto out_y = to_grayscale(output);
    std::vector<ProfileRecord> out;
    for (const auto& p : st.probes) {
        ProfileRecord r{stimulus_id(st.spec), p, {}, {}, {}};
        for (std::size_t x = p.x0; x < p.x1; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                r.input[c].push_back(st.image(c, p.row, x));
                r.output[c].push_back(output(c, p.row, x));
            }
            r.input[3].push_back(in_y(0, p.row, x));
            r.output[3].push_back(out_y(0, p.row, x));
        }
        std::optional<std::size_t> open;
        for (std::size_t x = p.x0; x <= p.x1; ++x) {
            bool inside = false;
            if (x < p.x1)
                for (const auto& m : st.masks) inside |= m(0, p.row, x) != 0;
            if (inside && !open) open = x;
            if (!inside && open) {
                r.target_spans.emplace_back(*open, x);
                open.reset();
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

struct RunResult {
    Tensor output;
    std::vector<ProfileRecord> profiles;
};

/// Deterministic forward pass of a frozen model on a stimulus.
inline RunResult run_on_stimulus(const ModelSpec& spec, const Params<float>& params, const Stimulus& st) {
    if (st.image.shape() != spec.input)
        throw ShapeError("stimulus " + st.image.shape().str() + " does not match model input " + spec.input.str());
    Tensor out = predict(spec, params, st.image);
    auto prof = profiles(st, out);
    return {std::move(out), std::move(prof)};
}

inline RunResult run_on_stimulus(const Checkpoint& ck, const Stimulus& st) {
    return run_on_stimulus(ck.spec, ck.params, st);
}

/// E_c = mean(output over mask A) - mean(output over mask B) for R, G, B
/// and the luminance-converted output.
inline std::array<double, 4> effect_magnitude(const Tensor& output, const Stimulus& st) {
    if (st.spec.kind == IllusionKind::chevreul)
        throw ValidationError("chevreul has no paired targets; use chevreul_statistic");
    if (st.masks.size() != 2) throw ValidationError("effect_magnitude needs exactly two target masks");
    const auto a = masked_means(output, st.masks[0]);
    const auto b = masked_means(output, st.masks[1]);
    const auto y = to_grayscale(output);
    const auto ya = masked_means(y, st.masks[0]);
    const auto yb = masked_means(y, st.masks[1]);
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2], ya[0] - yb[0]};
}

struct BandStatistic {
    std::size_t band = 0;
    double overshoot = 0.0;   // max - min of the profile within the band
    std::size_t argmax = 0;   // offsets from the band's left edge
    std::size_t argmin = 0;
    Verdict verdict = Verdict::null;
};

struct ChevreulChannel {
    std::vector<BandStatistic> bands;  // interior bands only
    double mean_overshoot = 0.0;
    Verdict verdict = Verdict::null;   // majority over interior bands
};

/// Edge overshoot per interior band along the probe row. A band replicates
/// (for ascending bands, expected +1) when max - min > tau with the maximum
/// in the left quartile and the minimum in the right quartile.
inline std::array<ChevreulChannel, 4> chevreul_statistic(const Tensor& output, const Stimulus& st,
                                                         double tau = default_tau) {
    if (st.spec.kind != IllusionKind::chevreul) throw ValidationError("chevreul_statistic needs a chevreul stimulus");
    const auto y = to_grayscale(output);
    const std::size_t row = st.probes.at(0).row;
    std::array<ChevreulChannel, 4> result;
    for (std::size_t c = 0; c < 4; ++c) {
        const int expected = st.expected[c];
        std::size_t rep = 0, inv = 0;
        for (std::size_t b = 1; b + 1 < st.masks.size(); ++b) {
            const auto box = bounding_box(st.masks[b]).value();
            const std::size_t w = box.x1 - box.x0;
            BandStatistic s{b};
            float hi = -INFINITY, lo = INFINITY;
            for (std::size_t x = box.x0; x < box.x1; ++x) {
                const float v = c == 3 ? y(0, row, x) : output(c, row, x);
                if (v > hi) hi = v, s.argmax = x - box.x0;
                if (v < lo) lo = v, s.argmin = x - box.x0;
            }
            s.overshoot = static_cast<double>(hi) - static_cast<double>(lo);
            const double quarter = static_cast<double>(w) / 4.0;
            auto left = [&](std::size_t p) { return static_cast<double>(p) + 0.5 <= quarter; };
            auto right = [&](std::size_t p) { return static_cast<double>(p) + 0.5 >= static_cast<double>(w) - quarter; };
            if (expected != 0 && s.overshoot > tau) {
                const bool ascending_edges = left(s.argmax) && right(s.argmin);
                const bool descending_edges = right(s.argmax) && left(s.argmin);
                if (expected > 0 ? ascending_edges : descending_edges) s.verdict = Verdict::replicated;
                if (expected > 0 ? descending_edges : ascending_edges) s.verdict = Verdict::inverted;
            }
            rep += s.verdict == Verdict::replicated;
            inv += s.verdict == Verdict::inverted;
            result[c].mean_overshoot += s.overshoot;
            result[c].bands.push_back(s);
        }
        const std::size_t n = result[c].bands.size();
        if (n > 0) result[c].mean_overshoot /= static_cast<double>(n);
        if (2 * rep > n) result[c].verdict = Verdict::replicated;
        if (2 * inv > n) result[c].verdict = Verdict::inverted;
    }
    return result;
}

struct ChannelEffect {
    double effect = 0.0;  // E, or the mean overshoot for chevreul
    int expected = 0;
    Verdict verdict = Verdict::null;
};

struct EffectReport {
    std::string model;
    StimulusSpec stimulus;
    std::size_t kernel = 0;
    double tau = default_tau;
    std::optional<std::string> rejection;  // set when the stimulus could not be generated
    std::array<ChannelEffect, 4> channels{};
    std::array<std::vector<BandStatistic>, 4> bands{};  // chevreul only
    std::vector<ProfileRecord> profiles;
};

/// Scores one model output against a stimulus.
inline EffectReport score(const Tensor& output, const Stimulus& st, const std::string& model, std::size_t kernel,
                          double tau = default_tau) {
    EffectReport r{model, st.spec, kernel, tau, std::nullopt, {}, {}, profiles(st, output)};
    if (st.spec.kind == IllusionKind::chevreul) {
        const auto ch = chevreul_statistic(output, st, tau);
        for (std::size_t c = 0; c < 4; ++c) {
            r.channels[c] = {ch[c].mean_overshoot, st.expected[c], ch[c].verdict};
            r.bands[c] = ch[c].bands;
        }
    } else {
        const auto e = effect_magnitude(output, st);
        for (std::size_t c = 0; c < 4; ++c) r.channels[c] = {e[c], st.expected[c], verdict(e[c], st.expected[c], tau)};
    }
    return r;
}

/// Largest kernel among the model's conv layers (the sweep axis value).
inline std::size_t model_kernel(const ModelSpec& spec) {
    std::size_t k = 0;
    for (const auto& l : spec.layers)
        if (const auto* c = std::get_if<ConvLayer>(&l)) k = std::max(k, c->kernel);
    return k;
}

inline EffectReport evaluate(const Checkpoint& ck, const StimulusSpec& spec, double tau = default_tau,
                             std::string model = {}) {
    if (model.empty()) model = ck.spec.name;
    Stimulus st;
    try {
        st = generate(spec);
    } catch (const ValidationError& e) {
        EffectReport r{model, spec, model_kernel(ck.spec), tau, std::string(e.what()), {}, {}, {}};
        return r;
    }
    const auto run = run_on_stimulus(ck, st);
    return score(run.output, st, model, model_kernel(ck.spec), tau);
}

struct SweepReport {
    std::string axis;  // "scale" or "kernel"
    IllusionKind kind = IllusionKind::dungeon;
    std::vector<std::size_t> values;
    std::vector<EffectReport> cells;
};

inline SweepReport sweep_scales(const Checkpoint& ck, IllusionKind kind, const std::vector<std::size_t>& scales,
                                bool colored = false, double tau = default_tau, const std::string& model = {}) {
    SweepReport r{"scale", kind, scales, {}};
    for (const auto s : scales) {
        StimulusSpec spec{kind, s, colored, ck.spec.input.height, ck.spec.input.width};
        r.cells.push_back(evaluate(ck, spec, tau, model));
    }
    return r;
}

/// `provide(k)` trains or loads the checkpoint for kernel k; each is
/// evaluated at the illusion's baseline scale.
inline SweepReport sweep_kernels(const std::function<Checkpoint(std::size_t)>& provide, IllusionKind kind,
                                 const std::vector<std::size_t>& kernels, bool colored = false,
                                 double tau = default_tau) {
    SweepReport r{"kernel", kind, kernels, {}};
    for (const auto k : kernels) {
        const auto ck = provide(k);
        StimulusSpec spec{kind, baseline_scale(kind), colored, ck.spec.input.height, ck.spec.input.width};
        r.cells.push_back(evaluate(ck, spec, tau));
    }
    return r;
}

}  // namespace vicnn
