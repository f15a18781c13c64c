#include <cmath>
#include <fstream>
#include <limits>

#include "lpdh/errors.hpp"
#include "lpdh/image_io.hpp"
#include "lpdh/metrics.hpp"
#include "metric_oracles.hpp"
#include "test_util.hpp"

using namespace lpdh;
using lpdh::test::random_tensor;
using lpdh::test::TempDir;

namespace {

Tensor<double> noisy(const Tensor<double>& img, double sigma, std::uint64_t seed) {
    Xoshiro256 rng(seed);
    Tensor<double> out = img;
    for (auto& v : out.data()) v += sigma * rng.normal();
    return out;
}

ModelConfig identity_model() {
    ModelConfig mc;
    mc.identity_bottom = true;
    mc.tucker_enabled = false;
    return mc;
}

} // namespace

TEST(Psnr, ClosedForms) {
    const Tensor<double> a({1, 3, 4, 4}, 0.5);
    EXPECT_EQ(psnr(a, a), std::numeric_limits<double>::infinity());
    const Tensor<double> b({1, 3, 4, 4}, 0.6);  // MSE = 0.01
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
    EXPECT_NEAR(psnr(a, b, 255.0), 20.0 + 20 * std::log10(255.0), 1e-9);
    EXPECT_NEAR(psnr(a, b, 1.0, true), 20.0, 1e-9);
    EXPECT_THROW(psnr(a, Tensor<double>({1, 3, 4, 5})), DimensionError);
}

TEST(Psnr, MatchesBruteForceAndIsSymmetric) {
    Xoshiro256 rng(1);
    for (int i = 0; i < 10; ++i) {
        const auto a = random_tensor<double>({1, 3, 17, 23}, rng);
        const auto b = random_tensor<double>({1, 3, 17, 23}, rng);
        EXPECT_NEAR(psnr(a, b), lpdh::test::psnr_bruteforce(a, b), 1e-9);
        EXPECT_EQ(psnr(a, b), psnr(b, a));
        EXPECT_GE(psnr(a, b), 0.0);
        const auto af = a.cast<float>(), bf = b.cast<float>();
        EXPECT_NEAR(psnr(af, bf), lpdh::test::psnr_bruteforce(af, bf), 1e-9);
    }
}

TEST(Ssim, IdenticalAndNegative) {
    Xoshiro256 rng(2);
    const auto a = random_tensor<double>({1, 3, 24, 24}, rng, 0.3, 0.7);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
    Tensor<double> neg = a;
    for (auto& v : neg.data()) v = 1.0 - v;
    EXPECT_LT(ssim(a, neg), 0.5);
}

TEST(Ssim, MatchesScalarReference) {
    Xoshiro256 rng(3);
    for (int i = 0; i < 10; ++i) {
        const std::size_t h = 11 + rng.below(20), w = 11 + rng.below(20);
        const auto a = random_tensor<double>({1, 3, h, w}, rng);
        const auto b = noisy(a, 0.1 * (i + 1) / 10.0, 50 + i);
        const double s = ssim(a, b);
        EXPECT_NEAR(s, lpdh::test::ssim_reference(a, b), 1e-4) << i;
        EXPECT_EQ(s, ssim(b, a));
        EXPECT_GE(s, -1.0);
        EXPECT_LE(s, 1.0);
    }
}

TEST(Ssim, Contracts) {
    EXPECT_THROW(ssim(Tensor<double>({1, 3, 10, 20}), Tensor<double>({1, 3, 10, 20})), ContractError);
    EXPECT_THROW(ssim(Tensor<double>({2, 3, 12, 12}), Tensor<double>({2, 3, 12, 12})), DimensionError);
    EXPECT_THROW(ssim(Tensor<double>({1, 3, 12, 12}), Tensor<double>({1, 3, 12, 13})), DimensionError);
}

TEST(Metrics, MonotoneInNoise) {
    Xoshiro256 rng(4);
    const auto img = random_tensor<double>({1, 3, 32, 32}, rng, 0.2, 0.8);
    double prev_p = std::numeric_limits<double>::infinity(), prev_s = 1.0;
    for (double sigma : {0.01, 0.05, 0.1}) {
        const auto n = noisy(img, sigma, 9);
        const double p = psnr(img, n), s = ssim(img, n);
        EXPECT_LT(p, prev_p) << sigma;
        EXPECT_LT(s, prev_s) << sigma;
        prev_p = p;
        prev_s = s;
    }
}

TEST(Eval, IdentityModelMatchesHazyBaseline) {
    const DehazeModel<float> model(identity_model());
    Xoshiro256 rng(5);
    std::vector<ImagePair<float>> pairs;
    for (int i = 0; i < 3; ++i)
        pairs.push_back({"p" + std::to_string(i), random_tensor<float>({1, 3, 32, 32}, rng),
                         random_tensor<float>({1, 3, 32, 32}, rng)});
    const QualityReport r = eval_pairs<float>(model, pairs);
    ASSERT_EQ(r.rows.size(), 3u);
    // The identity model reproduces its input to float rounding (<= 1e-6).
    for (const auto& row : r.rows) {
        EXPECT_NEAR(row.psnr_out, row.psnr_hazy, 1e-4);
        EXPECT_NEAR(row.ssim_out, row.ssim_hazy, 1e-6);
    }
    EXPECT_EQ(r.mean.file, "mean");
    EXPECT_NEAR(r.mean_psnr_gain(), 0.0, 1e-4);
    EXPECT_THROW(eval_pairs<float>(model, {}), ContractError);
    EXPECT_THROW(eval_dataset(model, {}), ContractError);
}

TEST(Eval, SkipsUnreadablePairsAndWritesCsv) {
    TempDir dir("eval");
    Xoshiro256 rng(6);
    const auto img = random_tensor<float>({1, 3, 16, 16}, rng);
    write_ppm(dir.file("a.ppm"), img);
    write_ppm(dir.file("b.ppm"), img);
    const std::vector<PairFiles> files{{"good", dir.file("a.ppm"), dir.file("b.ppm")},
                                       {"bad", dir.file("missing.ppm"), dir.file("b.ppm")}};
    const QualityReport r = eval_dataset(DehazeModel<float>(identity_model()), files);
    EXPECT_EQ(r.skipped, 1u);
    ASSERT_EQ(r.rows.size(), 1u);
    r.write_csv(dir.file("r.csv"));
    std::ifstream is(dir.file("r.csv"));
    std::string header, row, mean;
    std::getline(is, header);
    std::getline(is, row);
    std::getline(is, mean);
    EXPECT_EQ(header, "file,psnr_out,ssim_out,psnr_hazy,ssim_hazy");
    // Hazy equals clean here, so the baseline PSNR is the infinite sentinel.
    EXPECT_EQ(row.substr(0, 5), "good,");
    EXPECT_NE(row.find(",inf,"), std::string::npos) << row;
    EXPECT_EQ(mean.substr(0, 5), "mean,");
}
