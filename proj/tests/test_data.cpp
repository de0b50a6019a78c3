#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "vicnn/data.hpp"

using namespace vicnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    auto dir = fs::temp_directory_path() / ("vicnn_" + std::string(info->name()) + "_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Tensor random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor t(3, h, w);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

// 2x downscale with half-pixel centers samples exactly between four pixels.
Tensor block_mean2(const Tensor& in) {
    Tensor out(in.channels(), in.height() / 2, in.width() / 2);
    for (std::size_t c = 0; c < in.channels(); ++c)
        for (std::size_t y = 0; y < out.height(); ++y)
            for (std::size_t x = 0; x < out.width(); ++x)
                out(c, y, x) = static_cast<float>((double(in(c, 2 * y, 2 * x)) + in(c, 2 * y, 2 * x + 1) +
                                                   in(c, 2 * y + 1, 2 * x) + in(c, 2 * y + 1, 2 * x + 1)) /
                                                  4.0);
    return out;
}

std::vector<CorpusEntry> fake_entries(std::size_t n) {
    std::vector<CorpusEntry> e;
    for (std::size_t i = 0; i < n; ++i) e.push_back({"img" + std::to_string(i) + ".png", Tensor(3, 4, 4), {}});
    return e;
}

}  // namespace

TEST(ImageIo, PngRoundTripIsByteExact) {
    const auto dir = scratch("png");
    Tensor img = random_image(17, 23, 1);
    for (auto& v : img.values()) v = static_cast<float>(to_byte(v)) / 255.0f;
    write_png(dir / "a.png", img);
    EXPECT_EQ(read_png(dir / "a.png"), img);
    Tensor gray(1, 5, 7, 0.25f);
    write_png(dir / "g.png", gray);
    const auto back = read_png(dir / "g.png");
    EXPECT_EQ(back.channels(), 3u);
    EXPECT_FLOAT_EQ(back(2, 4, 6), 64.0f / 255.0f);
}

TEST(ImageIo, ReadsBinaryPnm) {
    const auto dir = scratch("pnm");
    std::ofstream(dir / "a.pgm", std::ios::binary) << "P5\n# comment\n2 1\n255\n" << char(0) << char(255);
    const auto t = read_image(dir / "a.pgm");
    EXPECT_EQ(t.shape(), (Shape{3, 1, 2}));
    EXPECT_EQ(t(1, 0, 0), 0.0f);
    EXPECT_EQ(t(1, 0, 1), 1.0f);
    std::ofstream(dir / "bad.ppm", std::ios::binary) << "P6\n4 4\n255\n" << "xx";
    EXPECT_THROW(read_image(dir / "bad.ppm"), DataError);
}

TEST(ImageIo, BilinearHalvingMatchesBlockMean) {
    const auto img = random_image(256, 256, 2);
    const auto r = resize_bilinear(img, 128, 128);
    const auto oracle = block_mean2(img);
    for (std::size_t i = 0; i < r.size(); ++i) ASSERT_NEAR(r[i], oracle[i], 1e-6);
}

TEST(Corpus, SolidGrayLoadsConstant) {
    const auto dir = scratch("gray");
    write_png(dir / "gray.png", Tensor(3, 64, 48, 128.0f / 255.0f));
    const auto c = load_corpus(dir);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c[0].image.shape(), (Shape{3, 128, 128}));
    for (const float v : c[0].image.values()) ASSERT_FLOAT_EQ(v, 128.0f / 255.0f);
    EXPECT_NEAR(c[0].image[0], 0.5, 1.0 / 255.0);
}

TEST(Corpus, CheckerboardAveragesToGray) {
    const auto dir = scratch("checker");
    Tensor board(3, 256, 256);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 256; ++y)
            for (std::size_t x = 0; x < 256; ++x) board(c, y, x) = (x + y) % 2 ? 1.0f : 0.0f;
    write_png(dir / "board.png", board);
    const auto c = load_corpus(dir);
    for (const float v : c[0].image.values()) ASSERT_FLOAT_EQ(v, 0.5f);
}

TEST(Corpus, SkipsUndecodableFiles) {
    const auto dir = scratch("skip");
    for (int i = 0; i < 3; ++i) write_png(dir / ("ok" + std::to_string(i) + ".png"), Tensor(3, 8, 8, 0.2f));
    std::ofstream(dir / "broken.png") << "not a png";
    std::ofstream(dir / "notes.txt") << "ignored";
    std::ostringstream warn;
    const auto c = load_corpus(dir, {}, warn);
    EXPECT_EQ(c.size(), 3u);
    EXPECT_NE(warn.str().find("broken.png"), std::string::npos);
}

TEST(Corpus, EmptyCorpusIsFatal) {
    const auto dir = scratch("empty");
    EXPECT_THROW(load_corpus(dir), DataError);
    EXPECT_THROW(load_corpus(dir / "missing"), DataError);
}

TEST(Corpus, QuadLoadingYieldsFourPerImage) {
    const auto dir = scratch("quad");
    for (int i = 0; i < 3; ++i) write_png(dir / ("im" + std::to_string(i) + ".png"), Tensor(3, 256, 256, 0.3f));
    const auto c = load_corpus(dir, {128, true});
    EXPECT_EQ(c.size(), 12u);
    EXPECT_EQ(c[1].key, "im0.png#q1");
}

TEST(Corpus, IlluminantSidecar) {
    const auto dir = scratch("illum");
    write_png(dir / "a.png", Tensor(3, 8, 8, 0.5f));
    write_illuminant(dir / "a.png", {1.5f, 1.0f, 0.75f});
    write_png(dir / "b.png", Tensor(3, 8, 8, 0.5f));
    std::ofstream(dir / "c.illum") << "1 -2 1";
    write_png(dir / "c.png", Tensor(3, 8, 8, 0.5f));
    std::ostringstream warn;
    const auto c = load_corpus(dir, {}, warn);
    ASSERT_EQ(c.size(), 2u);
    ASSERT_TRUE(c[0].illuminant);
    EXPECT_FLOAT_EQ((*c[0].illuminant)[0], 1.5f);
    EXPECT_FALSE(c[1].illuminant);
    EXPECT_NE(warn.str().find("c.png"), std::string::npos);
}

TEST(Noise, ZeroSigmaIsIdentity) {
    const auto img = random_image(16, 16, 3);
    EXPECT_EQ(add_gaussian_noise(img, 0.0, 1), img);
}

TEST(Noise, EmpiricalStdMatchesSigma) {
    const Tensor gray(3, 128, 128, 0.5f);
    const auto noisy = add_gaussian_noise(gray, default_noise_sigma, 11);
    double sum = 0, sq = 0;
    for (const float v : noisy.values()) sum += v, sq += double(v) * v;
    const double n = static_cast<double>(noisy.size());
    const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
    EXPECT_NEAR(sd, default_noise_sigma, 0.05 * default_noise_sigma);
}

TEST(Noise, SeededAndClamped) {
    const auto img = random_image(32, 32, 4);
    EXPECT_EQ(add_gaussian_noise(img, 0.3, 9), add_gaussian_noise(img, 0.3, 9));
    EXPECT_NE(add_gaussian_noise(img, 0.3, 9), add_gaussian_noise(img, 0.3, 10));
    const auto noisy = add_gaussian_noise(img, 0.3, 9);
    for (const float v : noisy.values()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}

TEST(Blur, ConstantUnchanged) {
    const auto b = gaussian_blur(Tensor(3, 20, 20, 0.37f));
    for (const float v : b.values()) ASSERT_NEAR(v, 0.37f, 1e-6);
}

TEST(Blur, ImpulseFollowsAnalyticGaussian) {
    Tensor imp(1, 41, 41);
    imp(0, 20, 20) = 1.0f;
    const auto b = gaussian_blur(imp, 2.0);
    const double ratio = b(0, 20, 20) / b(0, 20, 21);
    EXPECT_NEAR(ratio, std::exp(1.0 / 8.0), 1e-3);
    double sum = 0;
    for (const float v : b.values()) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-4);
    EXPECT_EQ(gaussian_kernel(2.0).size(), 13u);
}

TEST(ColorConstancy, UnitIlluminantIsIdentity) {
    const auto img = random_image(8, 8, 5);
    EXPECT_EQ(cc_ground_truth(img, {1, 1, 1}), img);
}

TEST(ColorConstancy, RedIlluminantHalvesRed) {
    const auto out = cc_ground_truth(Tensor(3, 1, 1, 0.4f), {2, 1, 1});
    EXPECT_FLOAT_EQ(out[0], 0.4f);
    EXPECT_FLOAT_EQ(out[1], 0.8f);
    EXPECT_FLOAT_EQ(out[0] / out[1], 0.5f);
    EXPECT_THROW(cc_ground_truth(Tensor(3, 1, 1), {0, 1, 1}), ValidationError);
    EXPECT_THROW(cc_ground_truth(Tensor(3, 1, 1), {1, -1, 1}), ValidationError);
}

TEST(ColorConstancy, CorrectionBalancesRedCastCorpus) {
    const auto dir = scratch("cast");
    synthesize_corpus(dir, 12, 7, 64);
    const auto clean = load_corpus(dir, {64, false});
    auto imbalance = [](const Tensor& t) {
        std::array<double, 3> m{};
        const std::size_t n = t.shape().plane();
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < n; ++i) m[c] += t[c * n + i] / static_cast<double>(n);
        return std::max({m[0], m[1], m[2]}) - std::min({m[0], m[1], m[2]});
    };
    double before = 0, after = 0;
    const Illuminant red{1.4f, 1.0f, 0.6f};
    for (const auto& e : clean) {
        const auto cast = apply_illuminant(e.image, red);
        before += imbalance(cast);
        after += imbalance(cc_ground_truth(cast, red));
    }
    EXPECT_LT(after, before);
}

TEST(QuadSplit, QuadrantsReassemble) {
    const auto img = random_image(256, 256, 6);
    const auto q = quad_split(img);
    for (const auto& t : q) EXPECT_EQ(t.shape(), (Shape{3, 128, 128}));
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 256; ++y)
            for (std::size_t x = 0; x < 256; ++x)
                ASSERT_EQ(q[(y / 128) * 2 + x / 128](c, y % 128, x % 128), img(c, y, x));
    EXPECT_THROW(quad_split(Tensor(3, 5, 4)), ValidationError);
    EXPECT_EQ(quad_split(random_image(10, 6, 1), 128)[3].shape(), (Shape{3, 128, 128}));
}

TEST(Split, TenEntriesGiveSevenTwoOne) {
    const auto s = split_dataset(fake_entries(10), {0.7, 0.2, 0.1, 3});
    EXPECT_EQ(s.train.size(), 7u);
    EXPECT_EQ(s.val.size(), 2u);
    EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, PartitionIsSeededAndOrderInvariant) {
    auto entries = fake_entries(37);
    auto keyset = [](const std::vector<CorpusEntry>& v) {
        std::set<std::string> s;
        for (const auto& e : v) s.insert(e.key);
        return s;
    };
    const auto a = split_dataset(entries, {0.7, 0.2, 0.1, 5});
    std::reverse(entries.begin(), entries.end());
    const auto b = split_dataset(entries, {0.7, 0.2, 0.1, 5});
    EXPECT_EQ(keyset(a.train), keyset(b.train));
    EXPECT_EQ(keyset(a.val), keyset(b.val));
    EXPECT_EQ(keyset(a.test), keyset(b.test));
    auto all = keyset(a.train);
    for (const auto& k : keyset(a.val)) EXPECT_TRUE(all.insert(k).second);
    for (const auto& k : keyset(a.test)) EXPECT_TRUE(all.insert(k).second);
    EXPECT_EQ(all.size(), 37u);
    EXPECT_THROW(split_dataset(entries, {0.5, 0.2, 0.1, 0}), ValidationError);
}

TEST(Pairs, TaskInvariantsHold) {
    CorpusEntry e{"x.png", random_image(32, 32, 8), {}};
    const auto seed = sample_seed(1, e.key);
    const auto dn = make_pair(e, Task::denoise, seed);
    EXPECT_EQ(dn.target, e.image);
    EXPECT_EQ(dn.input, add_gaussian_noise(e.image, default_noise_sigma, seed));
    const auto db = make_pair(e, Task::deblur, seed);
    EXPECT_EQ(db.input, gaussian_blur(e.image));
    EXPECT_EQ(db.target, e.image);
    const auto cc = make_pair(e, Task::color_constancy, seed);
    EXPECT_EQ(cc.target, cc_ground_truth(cc.input, synthetic_illuminant(seed)));
    e.illuminant = Illuminant{1.2f, 1.0f, 0.8f};
    const auto cc2 = make_pair(e, Task::color_constancy, seed);
    EXPECT_EQ(cc2.input, e.image);
    EXPECT_EQ(cc2.target, cc_ground_truth(e.image, *e.illuminant));
    for (const auto* p : {&dn, &db, &cc})
        for (const float v : p->input.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
}

TEST(Illuminant, SyntheticGainsInRange) {
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto il = synthetic_illuminant(s);
        EXPECT_EQ(il[1], 1.0f);
        for (const std::size_t c : {0u, 2u}) {
            EXPECT_GE(il[c], 0.6f);
            EXPECT_LE(il[c], 1.4f);
        }
    }
}

TEST(Prepare, ManifestIsDeterministic) {
    const auto dir = scratch("prep");
    const auto files = synthesize_corpus(dir, 10, 3, 64, true);
    EXPECT_EQ(files.size(), 10u);
    EXPECT_TRUE(fs::exists(dir / "leaves_0000.illum"));
    std::ostringstream warn;
    const auto a = prepare(dir, Task::denoise, {0.7, 0.2, 0.1, 4}, {64, false}, {}, warn);
    const auto b = prepare(dir, Task::denoise, {0.7, 0.2, 0.1, 4}, {64, false}, {}, warn);
    EXPECT_EQ(a.manifest, b.manifest);
    EXPECT_EQ(a.manifest["samples"].size(), 10u);
    EXPECT_EQ(a.manifest["counts"]["train"], 7);
    const auto c = prepare(dir, Task::deblur, {0.7, 0.2, 0.1, 4}, {64, false}, {}, warn);
    EXPECT_NE(a.manifest["digest"], c.manifest["digest"]);
}

TEST(Synth, CorpusIsReproducible) {
    const auto d1 = scratch("s1");
    const auto d2 = scratch("s2");
    synthesize_corpus(d1, 3, 9, 64);
    synthesize_corpus(d2, 3, 9, 64);
    const auto a = load_corpus(d1, {64, false});
    const auto b = load_corpus(d2, {64, false});
    EXPECT_EQ(corpus_digest(a), corpus_digest(b));
    EXPECT_NE(a[0].image, a[1].image);
}
