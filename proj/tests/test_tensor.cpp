#include <cmath>
#include <numeric>

#include "lpdh/errors.hpp"
#include "lpdh/parallel.hpp"
#include "lpdh/resample.hpp"
#include "test_util.hpp"

using namespace lpdh;
using lpdh::test::random_tensor;

TEST(Tensor, ConstructionAndAccess) {
    Tensor<float> t({1, 2, 3, 4}, 0.5f);
    EXPECT_EQ(t.numel(), 24u);
    EXPECT_EQ(t.ndim(), 4u);
    t.at(0, 1, 2, 3) = 7.0f;
    EXPECT_EQ(t[23], 7.0f);
    EXPECT_EQ(t.at(0, 0, 0, 0), 0.5f);
    EXPECT_EQ(Tensor<double>::scalar(3.0).shape(), Shape{1});
}

TEST(Tensor, RejectsBadShapes) {
    EXPECT_THROW(Tensor<float>({2, 0, 3}), DimensionError);
    EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), DimensionError);
    Tensor<float> t({2, 3});
    EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
    EXPECT_THROW(t + Tensor<float>({3, 2}), DimensionError);
}

TEST(Tensor, ElementwiseOps) {
    const Tensor<double> a({2, 2}, std::vector<double>{1, 2, 3, 4});
    const Tensor<double> b({2, 2}, std::vector<double>{4, 3, 2, 1});
    EXPECT_EQ((a + b).vec(), (std::vector<double>{5, 5, 5, 5}));
    EXPECT_EQ((a - b).vec(), (std::vector<double>{-3, -1, 1, 3}));
    EXPECT_EQ((a * b).vec(), (std::vector<double>{4, 6, 6, 4}));
    EXPECT_EQ((a * 2.0).vec(), (std::vector<double>{2, 4, 6, 8}));
    EXPECT_EQ(sum(a), 10.0);
    EXPECT_EQ(max_abs_diff(a, b), 3.0);
}

TEST(Tensor, FiniteCheck) {
    Tensor<float> t({3}, 1.0f);
    EXPECT_TRUE(t.all_finite());
    t[1] = std::nanf("");
    EXPECT_FALSE(t.all_finite());
    EXPECT_THROW(t.ensure_finite("t"), NumericError);
}

TEST(Parallel, CoversEveryIndexOnce) {
    for (std::size_t threads : {1u, 2u, 3u, 8u}) {
        set_thread_count(threads);
        std::vector<int> hits(1001, 0);
        parallel_for(hits.size(), 1, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) ++hits[i];
        });
        EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; })) << threads;
    }
    set_thread_count(0);
}

TEST(Resample, Reflect101) {
    // n = 4: 2 3 2 1 | 0 1 2 3 | 2 1 0
    const std::ptrdiff_t expect[] = {2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0};
    for (std::ptrdiff_t i = -4; i <= 6; ++i) EXPECT_EQ(reflect101(i, 4), expect[i + 4]) << i;
    EXPECT_EQ(reflect101(5, 1), 0);
}

namespace {

// Direct 5x5 convolution with an explicit mirror table.
Tensor<double> blur_oracle(const Tensor<double>& img) {
    const std::size_t h = img.dim(2), w = img.dim(3);
    auto mirror = [](long i, long n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i;
            if (i >= n) i = 2 * (n - 1) - i;
        }
        return static_cast<std::size_t>(i);
    };
    const double k[5] = {1, 4, 6, 4, 1};
    Tensor<double> out(img.shape());
    for (std::size_t c = 0; c < img.dim(1); ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double s = 0;
                for (int dy = -2; dy <= 2; ++dy)
                    for (int dx = -2; dx <= 2; ++dx) {
                        s += k[dy + 2] * k[dx + 2] *
                             img.at(0, c, mirror(static_cast<long>(y) + dy, static_cast<long>(h)),
                                    mirror(static_cast<long>(x) + dx, static_cast<long>(w)));
                    }
                out.at(0, c, y, x) = s / 256.0;
            }
    return out;
}

} // namespace

TEST(Resample, BlurMatchesDirectConvolution) {
    Xoshiro256 rng(3);
    for (Shape s : {Shape{1, 3, 7, 9}, Shape{1, 1, 2, 5}, Shape{1, 2, 16, 4}}) {
        const auto img = random_tensor<double>(s, rng);
        EXPECT_LT(max_abs_diff(gaussian_blur(img), blur_oracle(img)), 1e-14) << shape_str(s);
    }
}

TEST(Resample, BlurPreservesConstantsExactly) {
    const Tensor<float> c({1, 3, 8, 8}, 0.3f);
    EXPECT_EQ(max_abs_diff(gaussian_blur(c), c), 0.0f);
}

TEST(Resample, Contracts) {
    EXPECT_THROW(downsample2(Tensor<float>({1, 1, 5, 4})), ContractError);
    EXPECT_THROW(gaussian_blur(Tensor<float>({1, 1, 1, 4})), ContractError);
    EXPECT_THROW(upsample_bilinear(Tensor<float>({1, 1, 2, 2}), 0, 4), ContractError);
}

TEST(Resample, DownsampleTakesEvenSamplesOfBlur) {
    Xoshiro256 rng(5);
    const auto img = random_tensor<double>({1, 2, 8, 6}, rng);
    const auto blurred = blur_oracle(img);
    const auto down = downsample2(img);
    ASSERT_EQ(down.shape(), (Shape{1, 2, 4, 3}));
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 3; ++x) EXPECT_NEAR(down.at(0, c, y, x), blurred.at(0, c, 2 * y, 2 * x), 1e-14);
}

TEST(Resample, BilinearHalfPixelValues) {
    // 1-D row [0, 1] upsampled to 4 samples: centers at -0.25, 0.25, 0.75, 1.25
    // in source coordinates, clamped at both ends.
    const Tensor<double> row({1, 1, 1, 2}, std::vector<double>{0, 1});
    const auto up = upsample_bilinear(row, 1, 4);
    const std::vector<double> expect{0, 0.25, 0.75, 1};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(up[i], expect[i], 1e-15);
    // Same size is the identity.
    Xoshiro256 rng(1);
    const auto img = random_tensor<double>({1, 3, 5, 7}, rng);
    EXPECT_EQ(max_abs_diff(upsample_bilinear(img, 5, 7), img), 0.0);
}

TEST(Resample, BilinearAdjointIdentity) {
    // <U x, y> == <x, U^T y> for random x, y.
    Xoshiro256 rng(11);
    for (auto [ih, iw, oh, ow] : {std::array<std::size_t, 4>{3, 5, 6, 10}, {4, 4, 7, 9}, {2, 3, 2, 3}}) {
        const auto x = random_tensor<double>({1, 2, ih, iw}, rng, -1, 1);
        const auto y = random_tensor<double>({1, 2, oh, ow}, rng, -1, 1);
        const double lhs = sum(upsample_bilinear(x, oh, ow) * y);
        const double rhs = sum(x * upsample_bilinear_adjoint(y, ih, iw));
        EXPECT_NEAR(lhs, rhs, 1e-12);
    }
}

TEST(Resample, PadReflectAndCrop) {
    const Tensor<double> t({1, 1, 2, 3}, std::vector<double>{0, 1, 2, 3, 4, 5});
    const auto p = pad_reflect(t, 4, 5);
    // Rows reflect as 0 1 | 0 1; columns as 0 1 2 | 1 0.
    const std::vector<double> expect{0, 1, 2, 1, 0, 3, 4, 5, 4, 3, 0, 1, 2, 1, 0, 3, 4, 5, 4, 3};
    EXPECT_EQ(p.vec(), expect);
    EXPECT_EQ(crop(p, 2, 3).vec(), t.vec());
}
