#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vicnn/model.hpp"

namespace vicnn::zoo {

inline constexpr std::size_t hidden_width = 8;

/// One sigmoid hidden layer of eight maps, then a linear output conv.
/// Shared by the denoising, deblurring and color-constancy networks.
inline ModelSpec build_base_net(std::size_t kernel = 5) {
    ModelSpec s;
    s.name = "base";
    s.layers = {ConvLayer{hidden_width, kernel, 1, 1, Activation::sigmoid}, ConvLayer{3, kernel, 1, 1, Activation::none}};
    if (kernel != 5) s.name += "-k" + std::to_string(kernel);
    validate(s);
    return s;
}

/// Four sigmoid hidden layers (width 8, inherited from the base net).
inline ModelSpec build_jain2009(std::size_t kernel = 5) {
    ModelSpec s;
    s.name = "jain2009";
    for (int n = 0; n < 4; ++n) s.layers.emplace_back(ConvLayer{hidden_width, kernel, 1, 1, Activation::sigmoid});
    s.layers.emplace_back(ConvLayer{3, kernel, 1, 1, Activation::none});
    s.notes = "hidden width 8 and linear output layer are assumptions";
    validate(s);
    return s;
}

/// Conv, pool, conv, pool, conv, up, conv, up, output conv.
inline ModelSpec build_jain2009_pool(std::size_t kernel = 5) {
    const ConvLayer hidden{hidden_width, kernel, 1, 1, Activation::sigmoid};
    ModelSpec s;
    s.name = "jain2009-pool";
    s.layers = {hidden, MaxPoolLayer{}, hidden, MaxPoolLayer{}, hidden, UpsampleLayer{}, hidden, UpsampleLayer{},
                ConvLayer{3, kernel, 1, 1, Activation::none}};
    s.notes = "max pooling of size two; hidden width 8 assumed";
    validate(s);
    return s;
}

/// Hidden convs dilated by `rate`; the output conv stays undilated.
inline ModelSpec build_jain2009_dilated(std::size_t rate, std::size_t kernel = 5) {
    ModelSpec s = build_jain2009(kernel);
    if (rate == 1) return s;
    s.name = "jain2009-dilated" + std::to_string(rate);
    for (std::size_t n = 0; n + 1 < s.layers.size(); ++n) std::get<ConvLayer>(s.layers[n]).dilation = rate;
    validate(s);
    return s;
}

/// Jain2009 plus one skip from the first conv output into the output conv.
inline ModelSpec build_jain2009_residual(std::size_t kernel = 5) {
    ModelSpec s = build_jain2009(kernel);
    s.name = "jain2009-residual";
    s.layers.insert(s.layers.end() - 1, ResidualJoin{1});
    validate(s);
    return s;
}

/// Residual (noise-predicting) denoiser: `depth` 3x3 convs, 64 ReLU maps in
/// every hidden layer, and a join from the network input after the last conv.
/// Batch normalization is left out.
inline ModelSpec build_deep_residual_denoiser(std::size_t depth = 8, std::size_t kernel = 3) {
    if (depth < 2) throw ValidationError("deep residual denoiser needs depth >= 2");
    ModelSpec s;
    s.name = "deep-residual" + std::to_string(depth);
    for (std::size_t n = 0; n + 1 < depth; ++n) s.layers.emplace_back(ConvLayer{64, kernel, 1, 1, Activation::relu});
    s.layers.emplace_back(ConvLayer{3, kernel, 1, 1, Activation::none});
    s.layers.emplace_back(ResidualJoin{0});
    s.notes = "approximation of a state-of-the-art residual denoiser: no batch normalization";
    validate(s);
    return s;
}

/// Single 1x1 conv; initialize with identity_params for a pass-through model.
inline ModelSpec build_identity() {
    ModelSpec s;
    s.name = "identity";
    s.layers = {ConvLayer{3, 1, 1, 1, Activation::none}};
    validate(s);
    return s;
}

template <typename T = float>
Params<T> identity_params() {
    ConvParams<T> p(3, 3, 1);
    for (std::size_t c = 0; c < 3; ++c) p.w(c, c, 0, 0) = T{1};
    return {p};
}

/// Replaces every conv kernel by k x k; padding follows automatically.
inline ModelSpec with_kernel_size(ModelSpec spec, std::size_t k) {
    if (k % 2 == 0) throw ValidationError("kernel size must be odd, got " + std::to_string(k));
    bool changed = false;
    for (auto& l : spec.layers)
        if (auto* c = std::get_if<ConvLayer>(&l)) {
            changed |= c->kernel != k;
            c->kernel = k;
        }
    if (changed) {
        const auto pos = spec.name.find("-k");
        spec.name = spec.name.substr(0, pos) + "-k" + std::to_string(k);
    }
    validate(spec);
    return spec;
}

struct Builder {
    std::string name;
    std::string description;
    std::function<ModelSpec()> build;
};

inline std::vector<Builder> builders() {
    return {
        {"base", "one hidden sigmoid layer, 8 maps, 5x5 kernels", [] { return build_base_net(); }},
        {"jain2009", "four hidden sigmoid layers, 8 maps, 5x5", [] { return build_jain2009(); }},
        {"jain2009-pool", "jain2009 with two 2x2 max pools and two upsamplings", [] { return build_jain2009_pool(); }},
        {"jain2009-dilated2", "jain2009 with dilation 2", [] { return build_jain2009_dilated(2); }},
        {"jain2009-dilated4", "jain2009 with dilation 4", [] { return build_jain2009_dilated(4); }},
        {"jain2009-dilated8", "jain2009 with dilation 8", [] { return build_jain2009_dilated(8); }},
        {"jain2009-residual", "jain2009 with a skip from conv 1 into the output conv",
         [] { return build_jain2009_residual(); }},
        {"deep-residual", "residual ReLU denoiser, depth 8, 64 maps, 3x3", [] { return build_deep_residual_denoiser(8); }},
        {"identity", "1x1 pass-through (identity weights)", [] { return build_identity(); }},
    };
}

/// Looks up a builder by name, optionally overriding the kernel size
/// (0 keeps the builder's default).
inline ModelSpec build(const std::string& name, std::size_t kernel = 0, std::size_t depth = 8) {
    ModelSpec spec;
    if (name == "deep-residual") {
        spec = build_deep_residual_denoiser(depth);
    } else {
        bool found = false;
        for (const auto& b : builders())
            if (b.name == name) {
                spec = b.build();
                found = true;
            }
        if (!found) throw UsageError("unknown architecture '" + name + "' (see `zoo list`)");
    }
    return kernel == 0 ? spec : with_kernel_size(spec, kernel);
}

}  // namespace vicnn::zoo
