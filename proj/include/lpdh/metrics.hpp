#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lpdh/network.hpp"
#include "lpdh/tensor.hpp"
#include "lpdh/training.hpp"

namespace lpdh {

// 10 log10(peak^2 / MSE) with the MSE taken over every element. Identical
// inputs give +infinity. With y_only, both images are first reduced to
// BT.601 luma (requires 3 channels).
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0, bool y_only = false);

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

// Mean SSIM over all valid 11x11 windows (Gaussian weights, sigma 1.5) of
// the channel-mean grayscale images, peak 1.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b);

struct QualityRow {
    std::string file;
    double psnr_out = 0;
    double ssim_out = 0;
    double psnr_hazy = 0;
    double ssim_hazy = 0;
};

struct QualityReport {
    std::vector<QualityRow> rows;
    QualityRow mean;  // file == "mean"
    std::size_t skipped = 0;

    // Header `file,psnr_out,ssim_out,psnr_hazy,ssim_hazy`, mean row last.
    void write_csv(const std::string& path) const;
    double mean_psnr_gain() const { return mean.psnr_out - mean.psnr_hazy; }
};

// Dehazes every pair and scores output and hazy input against clean.
template <typename T>
QualityReport eval_pairs(const DehazeModel<T>& model, std::span<const ImagePair<T>> pairs);

struct PairFiles {
    std::string name;
    std::string hazy;
    std::string clean;
};

// As eval_pairs, reading images from disk. Pairs that cannot be read or do
// not match in shape are skipped with a warning on stderr and counted.
QualityReport eval_dataset(const DehazeModel<float>& model, std::span<const PairFiles> pairs);

} // namespace lpdh
