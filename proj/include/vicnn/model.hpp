#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "vicnn/error.hpp"
#include "vicnn/ops.hpp"
#include "vicnn/tensor.hpp"

namespace vicnn {

enum class Activation { none, sigmoid, relu };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::sigmoid: return "sigmoid";
        case Activation::relu: return "relu";
        case Activation::none: break;
    }
    return "none";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "relu") return Activation::relu;
    if (s == "none" || s == "linear") return Activation::none;
    throw ValidationError("unknown activation '" + s + "'");
}

struct ConvLayer {
    std::size_t out_channels = 0;
    std::size_t kernel = 5;
    std::size_t stride = 1;
    std::size_t dilation = 1;
    Activation activation = Activation::none;
    friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct MaxPoolLayer {
    friend bool operator==(const MaxPoolLayer&, const MaxPoolLayer&) = default;
};

struct UpsampleLayer {
    friend bool operator==(const UpsampleLayer&, const UpsampleLayer&) = default;
};

/// Adds an earlier tensor to the running activation. Tensor indices count
/// the network input as 0 and the output of the n-th layer (1-based) as n.
struct ResidualJoin {
    std::size_t source = 0;
    friend bool operator==(const ResidualJoin&, const ResidualJoin&) = default;
};

using Layer = std::variant<ConvLayer, MaxPoolLayer, UpsampleLayer, ResidualJoin>;

struct ModelSpec {
    std::string name;
    Shape input{3, 128, 128};
    std::vector<Layer> layers;
    std::string notes;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;

    std::size_t conv_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += std::holds_alternative<ConvLayer>(l) ? 1 : 0;
        return n;
    }
};

/// Shape trace of a validated spec: trace[0] is the input, trace[n] the
/// output of layer n. Throws ValidationError on any inconsistency.
inline std::vector<Shape> validate(const ModelSpec& spec) {
    auto fail = [&](std::size_t idx, const std::string& why) {
        throw ValidationError("model '" + spec.name + "' layer " + std::to_string(idx + 1) + ": " + why);
    };
    if (spec.input.size() == 0) throw ValidationError("model '" + spec.name + "' has an empty input shape");
    if (spec.layers.empty()) throw ValidationError("model '" + spec.name + "' has no layers");

    std::vector<Shape> trace{spec.input};
    for (std::size_t n = 0; n < spec.layers.size(); ++n) {
        const Shape cur = trace.back();
        Shape next = cur;
        std::visit(
            [&](const auto& layer) {
                using L = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<L, ConvLayer>) {
                    if (layer.out_channels == 0) fail(n, "conv with zero filters");
                    if (layer.kernel == 0 || layer.kernel % 2 == 0) fail(n, "conv kernel must be odd");
                    if (layer.stride < 1 || layer.dilation < 1) fail(n, "stride and dilation must be >= 1");
                    try {
                        next = ConvParams<float>(layer.out_channels, cur.channels, layer.kernel, layer.stride,
                                                 layer.dilation)
                                   .output_shape(cur);
                    } catch (const ShapeError& e) {
                        fail(n, e.what());
                    }
                } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
                    if (cur.height % 2 != 0 || cur.width % 2 != 0) fail(n, "max pooling needs even extents, got " + cur.str());
                    next = {cur.channels, cur.height / 2, cur.width / 2};
                } else if constexpr (std::is_same_v<L, UpsampleLayer>) {
                    next = {cur.channels, cur.height * 2, cur.width * 2};
                } else {
                    if (layer.source > n)
                        fail(n, "residual source " + std::to_string(layer.source) + " is not an earlier tensor");
                    if (trace[layer.source] != cur)
                        fail(n, "residual source shape " + trace[layer.source].str() + " differs from join shape " +
                                    cur.str());
                }
            },
            spec.layers[n]);
        trace.push_back(next);
    }
    const Shape& out = trace.back();
    if (out.channels != 3 || out.height != spec.input.height || out.width != spec.input.width)
        throw ValidationError("model '" + spec.name + "' must map to 3 channels at input resolution, got " + out.str());
    return trace;
}

// ---------------------------------------------------------------------------
// JSON schema

inline nlohmann::json to_json(const Layer& layer) {
    return std::visit(
        [](const auto& l) -> nlohmann::json {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, ConvLayer>)
                return {{"type", "conv"},         {"out_channels", l.out_channels},
                        {"kernel", l.kernel},     {"stride", l.stride},
                        {"dilation", l.dilation}, {"activation", to_string(l.activation)}};
            else if constexpr (std::is_same_v<L, MaxPoolLayer>)
                return {{"type", "maxpool2"}};
            else if constexpr (std::is_same_v<L, UpsampleLayer>)
                return {{"type", "upsample2"}};
            else
                return {{"type", "residual"}, {"source", l.source}};
        },
        layer);
}

inline nlohmann::json to_json(const ModelSpec& spec) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : spec.layers) layers.push_back(to_json(l));
    nlohmann::json j{{"name", spec.name},
                     {"input", {spec.input.channels, spec.input.height, spec.input.width}},
                     {"layers", layers}};
    if (!spec.notes.empty()) j["notes"] = spec.notes;
    return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    try {
        ModelSpec spec;
        spec.name = j.at("name").get<std::string>();
        const auto& in = j.at("input");
        spec.input = {in.at(0).get<std::size_t>(), in.at(1).get<std::size_t>(), in.at(2).get<std::size_t>()};
        spec.notes = j.value("notes", std::string{});
        for (const auto& l : j.at("layers")) {
            const auto type = l.at("type").get<std::string>();
            if (type == "conv") {
                ConvLayer c;
                c.out_channels = l.at("out_channels").get<std::size_t>();
                c.kernel = l.at("kernel").get<std::size_t>();
                c.stride = l.value("stride", std::size_t{1});
                c.dilation = l.value("dilation", std::size_t{1});
                c.activation = activation_from_string(l.value("activation", std::string{"none"}));
                spec.layers.emplace_back(c);
            } else if (type == "maxpool2") {
                spec.layers.emplace_back(MaxPoolLayer{});
            } else if (type == "upsample2") {
                spec.layers.emplace_back(UpsampleLayer{});
            } else if (type == "residual") {
                spec.layers.emplace_back(ResidualJoin{l.at("source").get<std::size_t>()});
            } else {
                throw ValidationError("unknown layer type '" + type + "'");
            }
        }
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed model spec JSON: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
using Params = std::vector<ConvParams<T>>;

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
template <typename T = float>
Params<T> init_params(const ModelSpec& spec, std::uint64_t seed) {
    const auto trace = validate(spec);
    std::mt19937_64 rng(seed);
    Params<T> params;
    for (std::size_t n = 0; n < spec.layers.size(); ++n) {
        const auto* conv = std::get_if<ConvLayer>(&spec.layers[n]);
        if (!conv) continue;
        ConvParams<T> p(conv->out_channels, trace[n].channels, conv->kernel, conv->stride, conv->dilation);
        const double k2 = static_cast<double>(conv->kernel * conv->kernel);
        const double limit = std::sqrt(6.0 / (static_cast<double>(p.in_channels) * k2 + static_cast<double>(p.out_channels) * k2));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& w : p.weights) w = static_cast<T>(dist(rng));
        params.push_back(std::move(p));
    }
    return params;
}

template <typename T>
std::size_t parameter_count(const Params<T>& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.parameter_count();
    return n;
}

inline std::size_t parameter_count(const ModelSpec& spec) {
    const auto trace = validate(spec);
    std::size_t n = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
        if (const auto* c = std::get_if<ConvLayer>(&spec.layers[i]))
            n += c->out_channels * trace[i].channels * c->kernel * c->kernel + c->out_channels;
    return n;
}

/// Flat views in (weights, bias) order per conv layer; the layout used by
/// the optimizer and the checkpoint format.
template <typename T>
std::vector<std::span<T>> param_views(Params<T>& params) {
    std::vector<std::span<T>> v;
    for (auto& p : params) {
        v.emplace_back(p.weights);
        v.emplace_back(p.bias);
    }
    return v;
}

template <typename T>
void check_params(const ModelSpec& spec, const Params<T>& params) {
    const auto trace = validate(spec);
    std::size_t k = 0;
    for (std::size_t n = 0; n < spec.layers.size(); ++n) {
        const auto* conv = std::get_if<ConvLayer>(&spec.layers[n]);
        if (!conv) continue;
        if (k >= params.size()) throw ValidationError("too few parameter blocks for model '" + spec.name + "'");
        const auto& p = params[k++];
        if (p.out_channels != conv->out_channels || p.in_channels != trace[n].channels || p.kernel != conv->kernel ||
            p.stride != conv->stride || p.dilation != conv->dilation)
            throw ValidationError("parameter block " + std::to_string(k - 1) + " does not match layer " + std::to_string(n + 1));
        p.validate();
    }
    if (k != params.size()) throw ValidationError("too many parameter blocks for model '" + spec.name + "'");
}

// ---------------------------------------------------------------------------
// Execution

template <typename T>
struct Tape {
    std::vector<BasicTensor<T>> tensors;          // tensors[0] = input, tensors[n] = layer n output
    std::vector<BasicTensor<T>> pre_activation;   // conv layers with relu
    std::vector<std::vector<std::uint32_t>> argmax;
};

template <typename T>
struct ForwardResult {
    BasicTensor<T> output;
    Tape<T> tape;
};

template <typename T>
struct ModelGrads {
    std::vector<std::vector<T>> weights;
    std::vector<std::vector<T>> bias;
    BasicTensor<T> input;  // empty unless requested

    std::vector<std::span<const T>> views() const {
        std::vector<std::span<const T>> v;
        for (std::size_t n = 0; n < weights.size(); ++n) {
            v.emplace_back(weights[n]);
            v.emplace_back(bias[n]);
        }
        return v;
    }
};

namespace detail {

template <typename T>
void accumulate(std::optional<BasicTensor<T>>& slot, BasicTensor<T>&& g) {
    if (!slot) {
        slot = std::move(g);
        return;
    }
    require_same_shape(slot->shape(), g.shape(), "gradient accumulation");
    for (std::size_t n = 0; n < g.size(); ++n) (*slot)[n] += g[n];
}

}  // namespace detail

/// Runs the layer list. The spec must already be validated against params
/// (check_params); input shape must match spec.input.
template <typename T>
ForwardResult<T> forward(const ModelSpec& spec, const Params<T>& params, const BasicTensor<T>& input, bool keep_tape = true) {
    require_same_shape(input.shape(), spec.input, ("forward '" + spec.name + "' input").c_str());
    Tape<T> tape;
    tape.pre_activation.resize(spec.layers.size());
    tape.argmax.resize(spec.layers.size());
    std::vector<bool> needed(spec.layers.size() + 1, keep_tape);
    for (const auto& l : spec.layers)
        if (const auto* r = std::get_if<ResidualJoin>(&l)) needed[r->source] = true;

    tape.tensors.push_back(input);
    BasicTensor<T> cur = input;
    std::size_t k = 0;
    for (std::size_t n = 0; n < spec.layers.size(); ++n) {
        BasicTensor<T> next = std::visit(
            [&](const auto& layer) -> BasicTensor<T> {
                using L = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<L, ConvLayer>) {
                    BasicTensor<T> z = conv2d_forward(cur, params.at(k++));
                    switch (layer.activation) {
                        case Activation::sigmoid: return sigmoid(z);
                        case Activation::relu: {
                            BasicTensor<T> a = relu(z);
                            if (keep_tape) tape.pre_activation[n] = std::move(z);
                            return a;
                        }
                        case Activation::none: break;
                    }
                    return z;
                } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
                    auto r = maxpool2(cur);
                    if (keep_tape) tape.argmax[n] = std::move(r.argmax);
                    return std::move(r.output);
                } else if constexpr (std::is_same_v<L, UpsampleLayer>) {
                    return upsample_nearest2(cur);
                } else {
                    return residual_add(cur, tape.tensors.at(layer.source));
                }
            },
            spec.layers[n]);
        cur = std::move(next);
        tape.tensors.push_back(needed[n + 1] ? cur : BasicTensor<T>{});
    }
    if (!keep_tape) tape = {};
    return {std::move(cur), std::move(tape)};
}

template <typename T>
BasicTensor<T> predict(const ModelSpec& spec, const Params<T>& params, const BasicTensor<T>& input) {
    return forward(spec, params, input, false).output;
}

/// Reverse pass over a tape produced by forward(). Residual joins route the
/// incoming gradient to both operands.
template <typename T>
ModelGrads<T> backward(const ModelSpec& spec, const Params<T>& params, const Tape<T>& tape, const BasicTensor<T>& grad_out,
                       bool need_input_grad = false) {
    const std::size_t L = spec.layers.size();
    if (tape.tensors.size() != L + 1) throw ValidationError("backward: tape does not belong to model '" + spec.name + "'");
    std::vector<std::optional<BasicTensor<T>>> grad(L + 1);
    grad[L] = grad_out;

    ModelGrads<T> out;
    out.weights.resize(params.size());
    out.bias.resize(params.size());
    std::size_t k = params.size();

    for (std::size_t n = L; n-- > 0;) {
        if (!grad[n + 1]) throw ValidationError("backward: missing gradient for layer " + std::to_string(n + 1));
        BasicTensor<T> g = std::move(*grad[n + 1]);
        grad[n + 1].reset();
        const bool want_input = n > 0 || need_input_grad;
        std::visit(
            [&](const auto& layer) {
                using L_ = std::decay_t<decltype(layer)>;
                if constexpr (std::is_same_v<L_, ConvLayer>) {
                    const auto& p = params.at(--k);
                    if (layer.activation == Activation::sigmoid)
                        g = sigmoid_backward(tape.tensors[n + 1], g);
                    else if (layer.activation == Activation::relu)
                        g = relu_backward(tape.pre_activation[n], g);
                    auto cg = conv2d_backward(tape.tensors[n], p, g, want_input);
                    out.weights[k] = std::move(cg.weights);
                    out.bias[k] = std::move(cg.bias);
                    if (want_input) detail::accumulate(grad[n], std::move(cg.input));
                } else if constexpr (std::is_same_v<L_, MaxPoolLayer>) {
                    detail::accumulate(grad[n], maxpool2_backward(tape.tensors[n].shape(), tape.argmax[n], g));
                } else if constexpr (std::is_same_v<L_, UpsampleLayer>) {
                    detail::accumulate(grad[n], upsample_nearest2_backward(g));
                } else {
                    BasicTensor<T> copy = g;
                    detail::accumulate(grad[layer.source], std::move(copy));
                    detail::accumulate(grad[n], std::move(g));
                }
            },
            spec.layers[n]);
    }
    if (need_input_grad && grad[0]) out.input = std::move(*grad[0]);
    return out;
}

}  // namespace vicnn
