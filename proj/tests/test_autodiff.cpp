#include <array>
#include <cmath>

#include "lpdh/errors.hpp"
#include "lpdh/parallel.hpp"
#include "grad_cases.hpp"
#include "test_util.hpp"

using namespace lpdh;
using lpdh::test::grad_check;
using lpdh::test::kFdTolerance;
using lpdh::test::random_tensor;

namespace {

// Direct 7-loop convolution.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b, std::size_t stride,
                           std::size_t pad) {
    const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t ho = (h + 2 * pad - kh) / stride + 1, wo = (wd + 2 * pad - kw) / stride + 1;
    Tensor<double> out({n, co, ho, wo});
    for (std::size_t b0 = 0; b0 < n; ++b0)
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t y = 0; y < ho; ++y)
                for (std::size_t xx = 0; xx < wo; ++xx) {
                    double s = b ? (*b)[o] : 0.0;
                    for (std::size_t c = 0; c < ci; ++c)
                        for (std::size_t ky = 0; ky < kh; ++ky)
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                                const long ix = static_cast<long>(xx * stride + kx) - static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                                s += x.at(b0, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                                     w.at(o, c, ky, kx);
                            }
                    out.at(b0, o, y, xx) = s;
                }
    return out;
}

} // namespace

class GradCheck : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GradCheck, EveryOpMatchesFiniteDifferences) {
    const std::uint64_t seed = GetParam();
    for (const auto& c : lpdh::test::op_grad_cases(seed)) {
        const auto r = grad_check(c.f, c.inputs);
        EXPECT_GT(r.checked, 0u) << c.name;
        EXPECT_LE(r.max_rel_error, kFdTolerance) << c.name << " seed " << seed;
    }
}

INSTANTIATE_TEST_SUITE_P(TenSeeds, GradCheck, ::testing::Range<std::uint64_t>(1, 11));

TEST(Conv2d, MatchesDirectLoops) {
    Xoshiro256 rng(42);
    for (auto [stride, pad, k] : {std::array<std::size_t, 3>{1, 1, 3}, {2, 1, 3}, {1, 0, 1}, {2, 0, 3}}) {
        const auto x = random_tensor<double>({2, 3, 9, 7}, rng, -1, 1);
        const auto w = random_tensor<double>({5, 3, k, k}, rng, -1, 1);
        const auto b = random_tensor<double>({5}, rng, -1, 1);
        EXPECT_LT(max_abs_diff(conv2d_forward(x, w, &b, stride, pad), conv_oracle(x, w, &b, stride, pad)), 1e-12);
    }
}

TEST(Conv2d, ThreadCountDoesNotChangeResults) {
    Xoshiro256 rng(9);
    Var<float> x(random_tensor<float>({1, 16, 64, 64}, rng, -1, 1), true);
    Var<float> w(random_tensor<float>({32, 16, 3, 3}, rng, -1, 1), true);
    std::vector<Tensor<float>> outs, gx, gw;
    for (std::size_t t : {1u, 3u}) {
        set_thread_count(t);
        x.zero_grad();
        w.zero_grad();
        Var<float> y = conv2d(x, w, 1, 1);
        outs.push_back(y.value());
        backward(sum(mul(y, y)));
        gx.push_back(x.grad());
        gw.push_back(w.grad());
    }
    set_thread_count(0);
    EXPECT_EQ(outs[0].vec(), outs[1].vec());
    EXPECT_EQ(gx[0].vec(), gx[1].vec());
    EXPECT_EQ(gw[0].vec(), gw[1].vec());
}

TEST(Conv2d, ShapeErrors) {
    Var<float> x(Tensor<float>({1, 3, 4, 4}), false);
    EXPECT_THROW(conv2d(x, Var<float>(Tensor<float>({2, 4, 3, 3}), false), 1, 1), DimensionError);
    EXPECT_THROW(conv2d(x, Var<float>(Tensor<float>({2, 3, 7, 7}), false), 1, 0), DimensionError);
}

TEST(Tape, NonScalarLossIsRejected) {
    Var<double> x(Tensor<double>({2}, 1.0), true);
    EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Tape, InferenceRecordsNoGraph) {
    Var<double> x(Tensor<double>({3}, 1.0), false);
    Var<double> y = tanh(mul(x, x));
    EXPECT_TRUE(y.node()->inputs.empty());
    EXPECT_FALSE(y.requires_grad());
}

TEST(Tape, OrderAndRelease) {
    Var<double> x(Tensor<double>({1}, 2.0), true);
    Var<double> y = mul(x, x);
    Var<double> z = add(y, y);  // shared subexpression: gradient 2 * 2x
    Tape<double> tape(z);
    EXPECT_EQ(tape.size(), 3u);
    EXPECT_EQ(tape.nodes().back().get(), z.node().get());
    tape.run();
    EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
    // The graph is released after the pass.
    EXPECT_TRUE(z.node()->inputs.empty());
}

TEST(Tape, StopGradientBlocks) {
    Var<double> x(Tensor<double>({2}, 1.5), true);
    backward(sum(add(mul(x, x), stop_gradient(mul(x, x)))));
    EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
}
