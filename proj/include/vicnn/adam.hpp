#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "vicnn/error.hpp"

namespace vicnn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Moment accumulators for a list of parameter buffers. Moments start at
/// zero and are sized lazily on the first step.
template <typename T>
struct AdamState {
    AdamConfig config{};
    std::uint64_t step = 0;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;

    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : config(cfg) {}

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update, applied in place.
template <typename T>
void adam_step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads, AdamState<T>& state) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: parameter and gradient lists differ in length");
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.size(), T{0});
            state.second_moment.emplace_back(p.size(), T{0});
        }
    }
    if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: optimizer state tracks a different model");
    for (std::size_t b = 0; b < params.size(); ++b)
        if (params[b].size() != grads[b].size() || params[b].size() != state.first_moment[b].size())
            throw ShapeError("adam_step: buffer " + std::to_string(b) + " size mismatch");

    const auto& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);

    for (std::size_t b = 0; b < params.size(); ++b) {
        auto& m = state.first_moment[b];
        auto& v = state.second_moment[b];
        const auto p = params[b];
        const auto g = grads[b];
        for (std::size_t n = 0; n < p.size(); ++n) {
            const double gn = static_cast<double>(g[n]);
            const double mn = c.beta1 * static_cast<double>(m[n]) + (1.0 - c.beta1) * gn;
            const double vn = c.beta2 * static_cast<double>(v[n]) + (1.0 - c.beta2) * gn * gn;
            m[n] = static_cast<T>(mn);
            v[n] = static_cast<T>(vn);
            const double update = c.learning_rate * (mn / correction1) / (std::sqrt(vn / correction2) + c.epsilon);
            p[n] = static_cast<T>(static_cast<double>(p[n]) - update);
        }
    }
}

}  // namespace vicnn
