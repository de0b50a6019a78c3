#pragma once

// Finite-difference verification of every engine op and of whole models.
// Everything runs in double precision; the scalar objective is the MSE
// between the op output and a fixed random target.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "vicnn/model.hpp"
#include "vicnn/ops.hpp"
#include "vicnn/zoo.hpp"

namespace vicnn::gradcheck {

using DTensor = BasicTensor<double>;

inline constexpr double step = 1e-3;
inline constexpr double tolerance = 1e-3;

struct Row {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // perturbations that crossed a kink
    bool passed() const { return max_rel_error < tolerance; }
};

inline double rel_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

inline DTensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    DTensor t(s);
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

// Values bounded away from zero by `gap` (relu kinks).
inline DTensor random_tensor_off_zero(Shape s, std::mt19937_64& rng, double gap) {
    DTensor t = random_tensor(s, rng);
    for (auto& v : t.values())
        if (std::abs(v) < gap) v = v < 0 ? -gap - std::abs(v) : gap + std::abs(v);
    return t;
}

// Pairwise distinct values spaced 0.05 apart (unique pool winners).
inline DTensor random_tensor_distinct(Shape s, std::mt19937_64& rng) {
    std::vector<double> v(s.size());
    std::iota(v.begin(), v.end(), 0.0);
    std::shuffle(v.begin(), v.end(), rng);
    for (auto& x : v) x = -1.0 + 0.05 * x;
    return DTensor(s, std::move(v));
}

/// Central differences of `loss` with respect to each entry of `values`.
/// When `regime` is given, entries whose perturbation changes it (a relu
/// sign flip or a different pool winner) are reported as NaN and skipped.
inline std::vector<double> numeric_gradient(std::vector<double>& values, const std::function<double()>& loss,
                                            const std::function<std::uint64_t()>& regime = {}) {
    std::vector<double> g(values.size());
    const std::uint64_t base = regime ? regime() : 0;
    for (std::size_t n = 0; n < values.size(); ++n) {
        const double saved = values[n];
        values[n] = saved + step;
        const double up = loss();
        const bool up_same = !regime || regime() == base;
        values[n] = saved - step;
        const double down = loss();
        const bool down_same = !regime || regime() == base;
        values[n] = saved;
        g[n] = up_same && down_same ? (up - down) / (2.0 * step) : std::numeric_limits<double>::quiet_NaN();
    }
    return g;
}

inline void compare(Row& row, const std::vector<double>& analytic, const std::vector<double>& numeric) {
    for (std::size_t n = 0; n < analytic.size(); ++n) {
        if (std::isnan(numeric[n])) {
            ++row.skipped;
            continue;
        }
        row.max_rel_error = std::max(row.max_rel_error, rel_error(analytic[n], numeric[n]));
        ++row.checked;
    }
}

inline void check_conv(Row& row, std::mt19937_64& rng, std::size_t kernel, std::size_t stride, std::size_t dilation) {
    ConvParams<double> p(3, 2, kernel, stride, dilation);
    auto w = random_tensor({1, 1, p.weights.size()}, rng);
    p.weights = w.values();
    p.bias = random_tensor({1, 1, 3}, rng).values();
    DTensor x = random_tensor({2, 7, 6}, rng);
    const DTensor target = random_tensor(p.output_shape(x.shape()), rng);
    auto loss = [&] { return mse_loss(conv2d_forward(x, p), target).value; };
    auto lr = mse_loss(conv2d_forward(x, p), target);
    auto g = conv2d_backward(x, p, lr.grad);
    compare(row, g.input.values(), numeric_gradient(x.values(), loss));
    compare(row, g.weights, numeric_gradient(p.weights, loss));
    compare(row, g.bias, numeric_gradient(p.bias, loss));
}

template <typename Fwd, typename Bwd>
void check_unary(Row& row, DTensor x, std::mt19937_64& rng, Fwd fwd, Bwd bwd) {
    const DTensor target = random_tensor(fwd(x).shape(), rng);
    auto loss = [&] { return mse_loss(fwd(x), target).value; };
    const auto lr = mse_loss(fwd(x), target);
    compare(row, bwd(x, lr.grad).values(), numeric_gradient(x.values(), loss));
}

// Hash of every relu sign and pool winner on the forward tape.
template <typename T>
std::uint64_t activation_regime(const Tape<T>& tape) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) { h = (h ^ v) * 1099511628211ull; };
    for (const auto& z : tape.pre_activation)
        for (const T v : z.values()) mix(v > T{0} ? 1 : 0);
    for (const auto& a : tape.argmax)
        for (const auto idx : a) mix(idx);
    return h;
}

inline void check_model(Row& row, const ModelSpec& spec, std::mt19937_64& rng) {
    auto params = init_params<double>(spec, rng());
    for (auto& p : params)
        for (auto& b : p.bias) b = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
    DTensor x = random_tensor(spec.input, rng, 0.0, 1.0);
    const DTensor target = random_tensor({3, spec.input.height, spec.input.width}, rng, 0.0, 1.0);
    auto loss = [&] { return mse_loss(predict(spec, params, x), target).value; };
    bool kinked = false;
    for (const auto& l : spec.layers) {
        const auto* c = std::get_if<ConvLayer>(&l);
        kinked |= std::holds_alternative<MaxPoolLayer>(l) || (c && c->activation == Activation::relu);
    }
    std::function<std::uint64_t()> regime;
    if (kinked) regime = [&] { return activation_regime(forward(spec, params, x).tape); };
    auto fr = forward(spec, params, x);
    const auto lr = mse_loss(fr.output, target);
    const auto g = backward(spec, params, fr.tape, lr.grad, true);
    compare(row, g.input.values(), numeric_gradient(x.values(), loss, regime));
    for (std::size_t k = 0; k < params.size(); ++k) {
        compare(row, g.weights[k], numeric_gradient(params[k].weights, loss, regime));
        compare(row, g.bias[k], numeric_gradient(params[k].bias, loss, regime));
    }
}

inline ModelSpec small(ModelSpec spec, Shape input) {
    spec.input = input;
    validate(spec);
    return spec;
}

/// Runs every check over `seeds` consecutive seeds starting at `seed`.
inline std::vector<Row> run_all(std::uint64_t seed, std::size_t seeds = 10) {
    std::vector<Row> rows{{"conv2d"},      {"sigmoid"},       {"relu"},          {"maxpool2"},
                          {"upsample2"},   {"residual_add"},  {"mse_loss"},      {"model:base"},
                          {"model:base-1ch"}, {"model:jain2009-pool"}, {"model:jain2009-residual"},
                          {"model:deep-residual"}};
    const Shape s{2, 6, 8};
    for (std::uint64_t k = 0; k < seeds; ++k) {
        std::mt19937_64 rng(seed + k);
        for (const std::size_t kernel : {1, 3, 5})
            for (const std::size_t stride : {1, 2})
                for (const std::size_t dilation : {1, 2}) check_conv(rows[0], rng, kernel, stride, dilation);
        check_unary(rows[1], random_tensor(s, rng, -4.0, 4.0), rng, [](const DTensor& x) { return sigmoid(x); },
                    [](const DTensor& x, const DTensor& g) { return sigmoid_backward(sigmoid(x), g); });
        check_unary(rows[2], random_tensor_off_zero(s, rng, 10 * step), rng, [](const DTensor& x) { return relu(x); },
                    [](const DTensor& x, const DTensor& g) { return relu_backward(x, g); });
        check_unary(rows[3], random_tensor_distinct(s, rng), rng, [](const DTensor& x) { return maxpool2(x).output; },
                    [](const DTensor& x, const DTensor& g) { return maxpool2_backward(x.shape(), maxpool2(x).argmax, g); });
        check_unary(rows[4], random_tensor(s, rng), rng, [](const DTensor& x) { return upsample_nearest2(x); },
                    [](const DTensor&, const DTensor& g) { return upsample_nearest2_backward(g); });
        {
            // d/da and d/db of mse(a + b, target); both equal the upstream gradient.
            DTensor a = random_tensor(s, rng), b = random_tensor(s, rng);
            const DTensor target = random_tensor(s, rng);
            auto loss = [&] { return mse_loss(residual_add(a, b), target).value; };
            const auto lr = mse_loss(residual_add(a, b), target);
            compare(rows[5], lr.grad.values(), numeric_gradient(a.values(), loss));
            compare(rows[5], lr.grad.values(), numeric_gradient(b.values(), loss));
        }
        {
            DTensor pred = random_tensor(s, rng);
            const DTensor target = random_tensor(s, rng);
            auto loss = [&] { return mse_value(pred, target); };
            compare(rows[6], mse_loss(pred, target).grad.values(), numeric_gradient(pred.values(), loss));
        }
        check_model(rows[7], small(zoo::build_base_net(), {3, 8, 8}), rng);
        check_model(rows[8], small(zoo::build_base_net(), {1, 8, 8}), rng);
        check_model(rows[9], small(zoo::build_jain2009_pool(3), {3, 8, 8}), rng);
        check_model(rows[10], small(zoo::build_jain2009_residual(3), {3, 6, 6}), rng);
        {
            auto spec = zoo::build_deep_residual_denoiser(3);
            for (auto& l : spec.layers)
                if (auto* c = std::get_if<ConvLayer>(&l); c && c->out_channels == 64) c->out_channels = 4;
            check_model(rows[11], small(spec, {3, 5, 5}), rng);
        }
    }
    return rows;
}

}  // namespace vicnn::gradcheck
