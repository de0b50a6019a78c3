#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "vicnn/adam.hpp"
#include "vicnn/gradcheck.hpp"
#include "vicnn/model.hpp"
#include "vicnn/ops.hpp"
#include "vicnn/zoo.hpp"

using namespace vicnn;

namespace {

template <typename T>
BasicTensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    BasicTensor<T> t(s);
    for (auto& v : t.values()) v = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
ConvParams<T> random_conv(std::size_t out, std::size_t in, std::size_t k, std::size_t stride, std::size_t dilation,
                          std::uint64_t seed) {
    ConvParams<T> p(out, in, k, stride, dilation);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& w : p.weights) w = static_cast<T>(dist(rng));
    for (auto& b : p.bias) b = static_cast<T>(dist(rng));
    return p;
}

}  // namespace

TEST(Conv2d, IdentityKernel) {
    ConvParams<float> p(1, 1, 1);
    p.w(0, 0, 0, 0) = 1.0f;
    const auto x = random_tensor<float>({1, 3, 3}, 1);
    EXPECT_EQ(conv2d_forward(x, p), x);
}

TEST(Conv2d, AllOnesCountsOverlap) {
    ConvParams<float> p(1, 1, 3);
    p.weights.assign(9, 1.0f);
    const Tensor x(1, 5, 5, 1.0f);
    const auto y = conv2d_forward(x, p);
    EXPECT_EQ(y.shape(), (Shape{1, 5, 5}));
    EXPECT_FLOAT_EQ(y(0, 2, 2), 9.0f);
    EXPECT_FLOAT_EQ(y(0, 0, 0), 4.0f);
    EXPECT_FLOAT_EQ(y(0, 0, 2), 6.0f);
}

TEST(Conv2d, DilatedMatchesNaiveOracle) {
    const auto x = random_tensor<float>({2, 8, 8}, 3);
    const auto p = random_conv<float>(4, 2, 5, 1, 2, 4);
    const auto y = conv2d_forward(x, p);
    ConvParams<double> pd(4, 2, 5, 1, 2);
    pd.weights.assign(p.weights.begin(), p.weights.end());
    pd.bias.assign(p.bias.begin(), p.bias.end());
    const auto ref = oracle::naive_conv(x.cast<double>(), pd);
    ASSERT_EQ(y.shape(), ref.shape());
    for (std::size_t n = 0; n < y.size(); ++n) EXPECT_NEAR(y[n], ref[n], 1e-5);
}

// Property: every (stride, dilation) in {1,2,4,8}^2 and kernel in {1,3,5,7,11,15}.
TEST(Conv2d, NaiveOracleSweep) {
    std::uint64_t seed = 100;
    for (const std::size_t k : {1, 3, 5, 7, 11, 15})
        for (const std::size_t s : {1, 2, 4, 8})
            for (const std::size_t d : {1, 2, 4, 8}) {
                const auto x = random_tensor<double>({2, 13, 11}, seed++);
                const auto p = random_conv<double>(2, 2, k, s, d, seed++);
                const auto y = conv2d_forward(x, p);
                const auto ref = oracle::naive_conv(x, p);
                ASSERT_EQ(y.shape(), ref.shape()) << k << " " << s << " " << d;
                double worst = 0.0;
                for (std::size_t n = 0; n < y.size(); ++n) worst = std::max(worst, std::abs(y[n] - ref[n]));
                EXPECT_LT(worst, 1e-5) << "k=" << k << " stride=" << s << " dilation=" << d;
            }
}

TEST(Conv2d, SamePaddingPreservesSize) {
    for (const std::size_t d : {1, 2, 4, 8}) {
        ConvParams<float> p(8, 3, 5, 1, d);
        EXPECT_EQ(p.output_shape({3, 128, 128}), (Shape{8, 128, 128}));
    }
}

TEST(Conv2d, RejectsShapeMismatch) {
    ConvParams<float> p(2, 3, 3);
    EXPECT_THROW(conv2d_forward(Tensor(2, 4, 4), p), ShapeError);
    const Tensor x(3, 4, 4);
    EXPECT_THROW(conv2d_backward(x, p, Tensor(2, 3, 4)), ShapeError);
    EXPECT_THROW(ConvParams<float>(1, 1, 4), ShapeError);
}

TEST(Conv2d, BackwardZeroGradient) {
    const auto x = random_tensor<float>({2, 6, 6}, 5);
    const auto p = random_conv<float>(3, 2, 3, 1, 1, 6);
    const auto g = conv2d_backward(x, p, Tensor(3, 6, 6));
    for (float v : g.input.values()) EXPECT_EQ(v, 0.0f);
    for (float v : g.weights) EXPECT_EQ(v, 0.0f);
    for (float v : g.bias) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2d, PointwiseWeightGradientIsInputSum) {
    const auto x = random_tensor<double>({3, 5, 4}, 7);
    ConvParams<double> p(1, 3, 1);
    const auto g = conv2d_backward(x, p, BasicTensor<double>(1, 5, 4, 1.0));
    for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (std::size_t n = 0; n < 20; ++n) sum += x.channel(c)[n];
        EXPECT_NEAR(g.weights[c], sum, 1e-12);
    }
    EXPECT_NEAR(g.bias[0], 20.0, 1e-12);
}

TEST(Activations, SigmoidValues) {
    const Tensor x(Shape{1, 1, 3}, std::vector<float>{0.0f, 100.0f, -100.0f});
    const auto s = sigmoid(x);
    EXPECT_FLOAT_EQ(s[0], 0.5f);
    EXPECT_FLOAT_EQ(s[1], 1.0f);
    EXPECT_NEAR(s[2], 0.0f, 1e-30);
    const auto g = sigmoid_backward(s, Tensor(Shape{1, 1, 3}, 1.0f));
    EXPECT_FLOAT_EQ(g[0], 0.25f);
    EXPECT_FLOAT_EQ(g[1], 0.0f);
    EXPECT_TRUE(s.all_finite());
}

TEST(Activations, ReluValuesAndMask) {
    const Tensor x(Shape{1, 1, 4}, std::vector<float>{-1.0f, 2.0f, 0.0f, 0.5f});
    const auto r = relu(x);
    EXPECT_EQ(r[0], 0.0f);
    EXPECT_EQ(r[1], 2.0f);
    const auto g = relu_backward(x, Tensor(Shape{1, 1, 4}, 3.0f));
    EXPECT_EQ(g[0], 0.0f);
    EXPECT_EQ(g[1], 3.0f);
    EXPECT_EQ(g[2], 0.0f);  // subgradient at zero
    EXPECT_EQ(g[3], 3.0f);
}

TEST(Pooling, ConstantAndBlockMax) {
    const Tensor c(2, 4, 6, 0.7f);
    const auto r = maxpool2(c);
    EXPECT_EQ(r.output, Tensor(2, 2, 3, 0.7f));
    const Tensor b(Shape{1, 2, 2}, std::vector<float>{1, 2, 3, 4});
    EXPECT_EQ(maxpool2(b).output[0], 4.0f);
    EXPECT_THROW(maxpool2(Tensor(1, 3, 4)), ShapeError);
}

TEST(Pooling, MatchesPerWindowOracle) {
    const auto x = random_tensor<float>({3, 8, 10}, 11);
    const auto r = maxpool2(x);
    const auto g = random_tensor<float>(r.output.shape(), 12);
    const auto back = maxpool2_backward(x.shape(), r.argmax, g);
    Tensor expect_back(x.shape());
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t xx = 0; xx < 5; ++xx) {
                float best = -1e9f;
                std::size_t by = 0, bx = 0;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx)
                        if (x(c, 2 * y + dy, 2 * xx + dx) > best) {
                            best = x(c, 2 * y + dy, 2 * xx + dx);
                            by = 2 * y + dy;
                            bx = 2 * xx + dx;
                        }
                EXPECT_EQ(r.output(c, y, xx), best);
                expect_back(c, by, bx) = g(c, y, xx);
            }
    EXPECT_EQ(back, expect_back);
}

TEST(Upsample, ReplicatesAndInvertsPooling) {
    const Tensor v(Shape{1, 1, 1}, std::vector<float>{0.3f});
    EXPECT_EQ(upsample_nearest2(v), Tensor(1, 2, 2, 0.3f));
    // Tensors constant over 2x2 blocks are fixed points of upsample(maxpool(.)).
    const auto small = random_tensor<float>({2, 3, 4}, 13);
    const auto blocky = upsample_nearest2(small);
    EXPECT_EQ(upsample_nearest2(maxpool2(blocky).output), blocky);
    const auto g = upsample_nearest2_backward(Tensor(1, 4, 4, 1.0f));
    EXPECT_EQ(g, Tensor(1, 2, 2, 4.0f));
}

TEST(Residual, AddProperties) {
    const auto a = random_tensor<float>({2, 3, 3}, 14);
    const auto b = random_tensor<float>({2, 3, 3}, 15);
    EXPECT_EQ(residual_add(a, Tensor(a.shape())), a);
    EXPECT_EQ(residual_add(a, b), residual_add(b, a));
    EXPECT_THROW(residual_add(a, Tensor(2, 3, 4)), ShapeError);
}

TEST(Loss, MseValues) {
    const auto a = random_tensor<float>({3, 4, 4}, 16);
    EXPECT_EQ(mse_loss(a, a).value, 0.0);
    Tensor b = a;
    for (auto& v : b.values()) v -= 1.0f;
    EXPECT_NEAR(mse_loss(a, b).value, 1.0, 1e-6);
    EXPECT_THROW(mse_loss(a, Tensor(3, 4, 5)), ShapeError);
}

TEST(Loss, MseMatchesDoubleOracle) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto a = random_tensor<float>({3, 16, 16}, seed);
        const auto b = random_tensor<float>({3, 16, 16}, seed + 50);
        long double acc = 0;
        for (std::size_t n = 0; n < a.size(); ++n) {
            const long double d = static_cast<long double>(a[n]) - b[n];
            acc += d * d;
        }
        const double loss = mse_loss(a, b).value;
        EXPECT_NEAR(loss, static_cast<double>(acc / a.size()), 1e-6);
        EXPECT_GE(loss, 0.0);
        EXPECT_GT(loss, 0.0);
    }
}

TEST(Adam, ZeroGradientLeavesParameters) {
    std::vector<float> w{1.0f, -2.0f, 3.0f};
    const std::vector<float> g(3, 0.0f);
    AdamState<float> st;
    std::vector<std::span<float>> ps{w};
    std::vector<std::span<const float>> gs{g};
    adam_step<float>(ps, gs, st);
    EXPECT_EQ(w, (std::vector<float>{1.0f, -2.0f, 3.0f}));
    EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    for (const double g0 : {0.5, -3.0, 1e-2}) {
        std::vector<double> w{0.0};
        const std::vector<double> g{g0};
        AdamState<double> st;
        std::vector<std::span<double>> ps{w};
        std::vector<std::span<const double>> gs{g};
        adam_step<double>(ps, gs, st);
        EXPECT_NEAR(std::abs(w[0]), st.config.learning_rate, 1e-6);
        EXPECT_LT(w[0] * g0, 0.0);
    }
}

TEST(Adam, ConvergesOnQuadratic) {
    std::vector<double> w{0.0};
    AdamState<double> st(AdamConfig{0.1, 0.9, 0.999, 1e-8});
    std::uint64_t last = 0;
    for (int n = 0; n < 100; ++n) {
        const std::vector<double> g{2.0 * (w[0] - 3.0)};
        std::vector<std::span<double>> ps{w};
        std::vector<std::span<const double>> gs{g};
        adam_step<double>(ps, gs, st);
        EXPECT_GT(st.step, last);
        last = st.step;
    }
    EXPECT_NEAR(w[0], 3.0, 0.1);
}

TEST(Model, IdentityConvModel) {
    const auto spec = zoo::build_identity();
    const auto params = zoo::identity_params();
    const auto x = random_tensor<float>(spec.input, 17, 0.0, 1.0);
    EXPECT_EQ(predict(spec, params, x), x);
}

TEST(Model, BaseNetOutputIsUnboundedLinearMap) {
    auto spec = zoo::build_base_net();
    spec.input = {3, 16, 16};
    auto params = init_params(spec, 3);
    for (auto& w : params[1].weights) w *= 40.0f;
    const auto x = random_tensor<float>(spec.input, 18, 0.0, 1.0);
    const auto fr = forward(spec, params, x);
    // Hidden sigmoid maps lie in (0,1); the linear output conv is not bounded.
    for (float v : fr.tape.tensors[1].values()) {
        EXPECT_GT(v, 0.0f);
        EXPECT_LT(v, 1.0f);
    }
    float lo = 1e9f, hi = -1e9f;
    for (float v : fr.output.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    EXPECT_TRUE(lo < 0.0f || hi > 1.0f);
}

TEST(Model, ForwardBackwardDeterministic) {
    auto spec = zoo::build_jain2009_residual();
    spec.input = {3, 16, 16};
    const auto params = init_params(spec, 9);
    const auto x = random_tensor<float>(spec.input, 19, 0.0, 1.0);
    const auto a = forward(spec, params, x);
    const auto b = forward(spec, params, x);
    EXPECT_EQ(a.output, b.output);
    const auto ga = backward(spec, params, a.tape, a.output, true);
    const auto gb = backward(spec, params, b.tape, b.output, true);
    EXPECT_EQ(ga.weights, gb.weights);
    EXPECT_EQ(ga.input, gb.input);
}

TEST(Gradcheck, AllOpsAndModelsWithinTolerance) {
    for (const auto& row : gradcheck::run_all(1, 10)) {
        EXPECT_GT(row.checked, 0u) << row.name;
        EXPECT_LT(row.max_rel_error, 1e-3) << row.name;
    }
}

TEST(Gradcheck, ReluMaskMatchesFiniteDifferences) {
    std::mt19937_64 rng(21);
    gradcheck::DTensor x = gradcheck::random_tensor_off_zero({1, 5, 5}, rng, 0.01);
    const gradcheck::DTensor ones(x.shape(), 1.0);
    const auto analytic = relu_backward(x, ones);
    for (std::size_t n = 0; n < x.size(); ++n) {
        auto sum = [&] {
            double s = 0;
            const auto r = relu(x);
            for (double v : r.values()) s += v;
            return s;
        };
        const double saved = x[n];
        x[n] = saved + 1e-3;
        const double up = sum();
        x[n] = saved - 1e-3;
        const double down = sum();
        x[n] = saved;
        EXPECT_NEAR(analytic[n], (up - down) / 2e-3, 1e-9);
        EXPECT_EQ(analytic[n], x[n] > 0 ? 1.0 : 0.0);
    }
}
