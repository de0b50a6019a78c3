#pragma once

// Differentiable building blocks. Every op is a pure function of its inputs;
// backward functions take whatever the forward pass needs to recompute local
// derivatives (input or output) plus the upstream gradient.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vicnn/tensor.hpp"

namespace vicnn {

/// Square-kernel convolution parameters. Padding is always zero "same":
/// (k - 1) / 2 * dilation on each border, so stride 1 preserves H and W.
template <typename T>
struct ConvParams {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t dilation = 1;
    std::vector<T> weights;  // (out, in, k, k)
    std::vector<T> bias;     // (out)

    ConvParams() = default;
    ConvParams(std::size_t out_ch, std::size_t in_ch, std::size_t k, std::size_t stride_ = 1, std::size_t dilation_ = 1)
        : out_channels(out_ch),
          in_channels(in_ch),
          kernel(k),
          stride(stride_),
          dilation(dilation_),
          weights(out_ch * in_ch * k * k, T{0}),
          bias(out_ch, T{0}) {
        validate();
    }

    void validate() const {
        if (kernel % 2 == 0) throw ShapeError("conv kernel must be odd, got " + std::to_string(kernel));
        if (stride < 1 || dilation < 1) throw ShapeError("conv stride and dilation must be >= 1");
        if (weights.size() != out_channels * in_channels * kernel * kernel || bias.size() != out_channels)
            throw ShapeError("conv parameter buffers do not match (out, in, k) = (" + std::to_string(out_channels) +
                             ", " + std::to_string(in_channels) + ", " + std::to_string(kernel) + ")");
    }

    std::size_t padding() const noexcept { return (kernel - 1) / 2 * dilation; }
    std::size_t footprint() const noexcept { return (kernel - 1) * dilation + 1; }
    std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }

    T& w(std::size_t o, std::size_t c, std::size_t i, std::size_t j) noexcept {
        return weights[((o * in_channels + c) * kernel + i) * kernel + j];
    }
    const T& w(std::size_t o, std::size_t c, std::size_t i, std::size_t j) const noexcept {
        return weights[((o * in_channels + c) * kernel + i) * kernel + j];
    }

    Shape output_shape(const Shape& in) const {
        if (in.channels != in_channels)
            throw ShapeError("conv expects " + std::to_string(in_channels) + " input channels, got " + in.str());
        if (in.height == 0 || in.width == 0) throw ShapeError("conv input is empty: " + in.str());
        const auto pad = padding();
        const auto foot = footprint();
        if (in.height + 2 * pad < foot || in.width + 2 * pad < foot)
            throw ShapeError("conv footprint larger than padded input " + in.str());
        return {out_channels, (in.height + 2 * pad - foot) / stride + 1, (in.width + 2 * pad - foot) / stride + 1};
    }

    friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

template <typename T>
struct ConvGrads {
    BasicTensor<T> input;
    std::vector<T> weights;
    std::vector<T> bias;
};

namespace detail {

// Output index range [lo, hi) such that 0 <= o * stride + offset < extent.
inline std::pair<std::size_t, std::size_t> valid_range(std::ptrdiff_t offset, std::size_t stride, std::size_t extent,
                                                       std::size_t out_extent) {
    const auto s = static_cast<std::ptrdiff_t>(stride);
    std::ptrdiff_t lo = 0;
    if (offset < 0) lo = (-offset + s - 1) / s;
    const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(extent) - 1 - offset;
    if (last < 0) return {0, 0};
    std::ptrdiff_t hi = last / s + 1;
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out_extent));
    if (hi <= lo) return {0, 0};
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Lane-split dot product; fixed summation order keeps results reproducible.
template <typename T>
T dot(const T* a, const T* b, std::size_t n, std::size_t stride_b) {
    if (stride_b != 1) {
        T acc{0};
        for (std::size_t x = 0; x < n; ++x) acc += a[x] * b[x * stride_b];
        return acc;
    }
    constexpr std::size_t lanes = 8;
    T acc[lanes] = {};
    std::size_t x = 0;
    for (; x + lanes <= n; x += lanes)
        for (std::size_t l = 0; l < lanes; ++l) acc[l] += a[x + l] * b[x + l];
    T tail{0};
    for (; x < n; ++x) tail += a[x] * b[x];
    T sum{0};
    for (std::size_t l = 0; l < lanes; ++l) sum += acc[l];
    return sum + tail;
}

}  // namespace detail

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvParams<T>& p) {
    p.validate();
    const Shape os = p.output_shape(input.shape());
    BasicTensor<T> out(os);
    const auto pad = static_cast<std::ptrdiff_t>(p.padding());
    const auto d = static_cast<std::ptrdiff_t>(p.dilation);
    const std::size_t s = p.stride;
    const std::size_t k = p.kernel;

    for (std::size_t o = 0; o < os.channels; ++o) {
        for (std::size_t oy = 0; oy < os.height; ++oy) {
            T* orow = out.row(o, oy);
            for (std::size_t ox = 0; ox < os.width; ++ox) orow[ox] = p.bias[o];
            for (std::size_t c = 0; c < p.in_channels; ++c) {
                for (std::size_t i = 0; i < k; ++i) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s) + static_cast<std::ptrdiff_t>(i) * d - pad;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(input.height())) continue;
                    const T* irow = input.row(c, static_cast<std::size_t>(iy));
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) * d - pad;
                        const auto [lo, hi] = detail::valid_range(off, s, input.width(), os.width);
                        const T w = p.w(o, c, i, j);
                        if (s == 1) {
                            const T* src = irow + off;
                            for (std::size_t ox = lo; ox < hi; ++ox) orow[ox] += w * src[ox];
                        } else {
                            for (std::size_t ox = lo; ox < hi; ++ox)
                                orow[ox] += w * irow[static_cast<std::ptrdiff_t>(ox * s) + off];
                        }
                    }
                }
            }
        }
    }
    return out;
}

/// Gradients of sum(grad_out * conv(input)). Pass need_input = false to skip
/// the input gradient (first layer of a network).
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvParams<T>& p, const BasicTensor<T>& grad_out,
                             bool need_input = true) {
    p.validate();
    const Shape os = p.output_shape(input.shape());
    require_same_shape(grad_out.shape(), os, "conv2d_backward grad_out");
    const auto pad = static_cast<std::ptrdiff_t>(p.padding());
    const auto d = static_cast<std::ptrdiff_t>(p.dilation);
    const std::size_t s = p.stride;
    const std::size_t k = p.kernel;
    const auto ih = static_cast<std::ptrdiff_t>(input.height());

    ConvGrads<T> g;
    g.weights.assign(p.weights.size(), T{0});
    g.bias.assign(p.out_channels, T{0});

    for (std::size_t o = 0; o < os.channels; ++o) {
        const T* gplane = grad_out.channel(o);
        T acc{0};
        for (std::size_t n = 0; n < os.plane(); ++n) acc += gplane[n];
        g.bias[o] = acc;
    }

    for (std::size_t o = 0; o < os.channels; ++o) {
        for (std::size_t c = 0; c < p.in_channels; ++c) {
            for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) * d - pad;
                    const auto [lo, hi] = detail::valid_range(off, s, input.width(), os.width);
                    if (lo >= hi) continue;
                    T acc{0};
                    for (std::size_t oy = 0; oy < os.height; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s) + static_cast<std::ptrdiff_t>(i) * d - pad;
                        if (iy < 0 || iy >= ih) continue;
                        const T* grow = grad_out.row(o, oy) + lo;
                        const T* irow = input.row(c, static_cast<std::size_t>(iy)) + static_cast<std::ptrdiff_t>(lo * s) + off;
                        acc += detail::dot(grow, irow, hi - lo, s);
                    }
                    g.weights[((o * p.in_channels + c) * k + i) * k + j] = acc;
                }
            }
        }
    }

    if (need_input) {
        g.input = BasicTensor<T>(input.shape());
        for (std::size_t c = 0; c < p.in_channels; ++c) {
            for (std::size_t oy = 0; oy < os.height; ++oy) {
                for (std::size_t o = 0; o < os.channels; ++o) {
                    const T* grow = grad_out.row(o, oy);
                    for (std::size_t i = 0; i < k; ++i) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s) + static_cast<std::ptrdiff_t>(i) * d - pad;
                        if (iy < 0 || iy >= ih) continue;
                        T* girow = g.input.row(c, static_cast<std::size_t>(iy));
                        for (std::size_t j = 0; j < k; ++j) {
                            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) * d - pad;
                            const auto [lo, hi] = detail::valid_range(off, s, input.width(), os.width);
                            const T w = p.w(o, c, i, j);
                            if (s == 1) {
                                T* dst = girow + off;
                                for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] += w * grow[ox];
                            } else {
                                for (std::size_t ox = lo; ox < hi; ++ox)
                                    girow[static_cast<std::ptrdiff_t>(ox * s) + off] += w * grow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
    return g;
}

template <typename T>
T sigmoid_scalar(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input) {
    BasicTensor<T> out(input.shape());
    for (std::size_t n = 0; n < input.size(); ++n) out[n] = sigmoid_scalar(input[n]);
    return out;
}

/// Takes the forward output s; derivative is s * (1 - s).
template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& output, const BasicTensor<T>& grad_out) {
    require_same_shape(output.shape(), grad_out.shape(), "sigmoid_backward");
    BasicTensor<T> g(output.shape());
    for (std::size_t n = 0; n < output.size(); ++n) g[n] = grad_out[n] * output[n] * (T{1} - output[n]);
    return g;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
    BasicTensor<T> out(input.shape());
    for (std::size_t n = 0; n < input.size(); ++n) out[n] = input[n] > T{0} ? input[n] : T{0};
    return out;
}

/// Subgradient at exactly zero is zero.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out) {
    require_same_shape(input.shape(), grad_out.shape(), "relu_backward");
    BasicTensor<T> g(input.shape());
    for (std::size_t n = 0; n < input.size(); ++n) g[n] = input[n] > T{0} ? grad_out[n] : T{0};
    return g;
}

template <typename T>
struct PoolResult {
    BasicTensor<T> output;
    std::vector<std::uint32_t> argmax;  // flat input index per output element
};

template <typename T>
PoolResult<T> maxpool2(const BasicTensor<T>& input) {
    const Shape& is = input.shape();
    if (is.height % 2 != 0 || is.width % 2 != 0) throw ShapeError("maxpool2 needs even height and width, got " + is.str());
    const Shape os{is.channels, is.height / 2, is.width / 2};
    PoolResult<T> r{BasicTensor<T>(os), std::vector<std::uint32_t>(os.size())};
    std::size_t n = 0;
    for (std::size_t c = 0; c < os.channels; ++c)
        for (std::size_t y = 0; y < os.height; ++y)
            for (std::size_t x = 0; x < os.width; ++x, ++n) {
                std::size_t best = (c * is.height + 2 * y) * is.width + 2 * x;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = (c * is.height + 2 * y + dy) * is.width + 2 * x + dx;
                        if (input[idx] > input[best]) best = idx;
                    }
                r.output[n] = input[best];
                r.argmax[n] = static_cast<std::uint32_t>(best);
            }
    return r;
}

template <typename T>
BasicTensor<T> maxpool2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                                 const BasicTensor<T>& grad_out) {
    if (grad_out.size() != argmax.size() || input_shape.height != 2 * grad_out.height() ||
        input_shape.width != 2 * grad_out.width() || input_shape.channels != grad_out.channels())
        throw ShapeError("maxpool2_backward: " + grad_out.shape().str() + " does not pool from " + input_shape.str());
    BasicTensor<T> g(input_shape);
    for (std::size_t n = 0; n < argmax.size(); ++n) g[argmax[n]] += grad_out[n];
    return g;
}

template <typename T>
BasicTensor<T> upsample_nearest2(const BasicTensor<T>& input) {
    const Shape& is = input.shape();
    BasicTensor<T> out(is.channels, is.height * 2, is.width * 2);
    for (std::size_t c = 0; c < is.channels; ++c)
        for (std::size_t y = 0; y < out.height(); ++y) {
            const T* src = input.row(c, y / 2);
            T* dst = out.row(c, y);
            for (std::size_t x = 0; x < out.width(); ++x) dst[x] = src[x / 2];
        }
    return out;
}

template <typename T>
BasicTensor<T> upsample_nearest2_backward(const BasicTensor<T>& grad_out) {
    if (grad_out.height() % 2 != 0 || grad_out.width() % 2 != 0)
        throw ShapeError("upsample_nearest2_backward needs even extents, got " + grad_out.shape().str());
    BasicTensor<T> g(grad_out.channels(), grad_out.height() / 2, grad_out.width() / 2);
    for (std::size_t c = 0; c < g.channels(); ++c)
        for (std::size_t y = 0; y < grad_out.height(); ++y) {
            const T* src = grad_out.row(c, y);
            T* dst = g.row(c, y / 2);
            for (std::size_t x = 0; x < grad_out.width(); ++x) dst[x / 2] += src[x];
        }
    return g;
}

template <typename T>
BasicTensor<T> residual_add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "residual_add");
    BasicTensor<T> out(a.shape());
    for (std::size_t n = 0; n < a.size(); ++n) out[n] = a[n] + b[n];
    return out;
}

template <typename T>
struct LossResult {
    double value = 0.0;
    BasicTensor<T> grad;
};

/// Mean squared error, accumulated in double. Gradient is 2 (pred - target) / N.
template <typename T>
LossResult<T> mse_loss(const BasicTensor<T>& prediction, const BasicTensor<T>& target) {
    require_same_shape(prediction.shape(), target.shape(), "mse_loss");
    if (prediction.empty()) throw ShapeError("mse_loss on empty tensors");
    LossResult<T> r{0.0, BasicTensor<T>(prediction.shape())};
    const double n = static_cast<double>(prediction.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const double diff = static_cast<double>(prediction[i]) - static_cast<double>(target[i]);
        acc += diff * diff;
        r.grad[i] = static_cast<T>(2.0 * diff / n);
    }
    r.value = acc / n;
    return r;
}

template <typename T>
double mse_value(const BasicTensor<T>& prediction, const BasicTensor<T>& target) {
    require_same_shape(prediction.shape(), target.shape(), "mse_value");
    if (prediction.empty()) throw ShapeError("mse_value on empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const double diff = static_cast<double>(prediction[i]) - static_cast<double>(target[i]);
        acc += diff * diff;
    }
    return acc / static_cast<double>(prediction.size());
}

}  // namespace vicnn
