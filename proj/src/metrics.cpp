#include "lpdh/metrics.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>

#include "lpdh/image_io.hpp"

namespace lpdh {

namespace {

// (H, W) luma or channel mean of a (1, C, H, W) image, in double.
template <typename T>
std::vector<double> to_gray(const Tensor<T>& img, bool luma) {
    const std::size_t c = img.dim(1);
    const std::size_t hw = img.dim(2) * img.dim(3);
    std::vector<double> out(hw, 0.0);
    static constexpr std::array<double, 3> kY{0.299, 0.587, 0.114};
    for (std::size_t k = 0; k < c; ++k) {
        const double wk = luma ? kY[k] : 1.0 / static_cast<double>(c);
        for (std::size_t p = 0; p < hw; ++p) out[p] += wk * static_cast<double>(img[k * hw + p]);
    }
    return out;
}

std::array<double, kSsimWindow> gaussian_window() {
    std::array<double, kSsimWindow> g{};
    double s = 0;
    for (std::size_t i = 0; i < kSsimWindow; ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(kSsimWindow / 2);
        g[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
        s += g[i];
    }
    for (auto& v : g) v /= s;
    return g;
}

// Separable "valid" filtering of an (h, w) plane.
std::vector<double> filter_valid(const std::vector<double>& x, std::size_t h, std::size_t w,
                                 const std::array<double, kSsimWindow>& g) {
    const std::size_t wo = w - kSsimWindow + 1;
    const std::size_t ho = h - kSsimWindow + 1;
    std::vector<double> tmp(h * wo, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xo = 0; xo < wo; ++xo) {
            double s = 0;
            for (std::size_t i = 0; i < kSsimWindow; ++i) s += g[i] * x[y * w + xo + i];
            tmp[y * wo + xo] = s;
        }
    std::vector<double> out(ho * wo, 0.0);
    for (std::size_t yo = 0; yo < ho; ++yo)
        for (std::size_t xo = 0; xo < wo; ++xo) {
            double s = 0;
            for (std::size_t i = 0; i < kSsimWindow; ++i) s += g[i] * tmp[(yo + i) * wo + xo];
            out[yo * wo + xo] = s;
        }
    return out;
}

void write_value(std::ostream& os, double v) {
    if (std::isinf(v)) os << (v > 0 ? "inf" : "-inf");
    else os << v;
}

QualityRow mean_row(const std::vector<QualityRow>& rows) {
    QualityRow m;
    m.file = "mean";
    for (const auto& r : rows) {
        m.psnr_out += r.psnr_out;
        m.ssim_out += r.ssim_out;
        m.psnr_hazy += r.psnr_hazy;
        m.ssim_hazy += r.ssim_hazy;
    }
    const auto n = static_cast<double>(rows.size());
    m.psnr_out /= n;
    m.ssim_out /= n;
    m.psnr_hazy /= n;
    m.ssim_hazy /= n;
    return m;
}

template <typename T>
QualityRow score(const DehazeModel<T>& model, const std::string& name, const Tensor<T>& hazy, const Tensor<T>& clean) {
    const Tensor<T> out = dehaze(model, hazy);
    return {name, psnr(out, clean), ssim(out, clean), psnr(hazy, clean), ssim(hazy, clean)};
}

} // namespace

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak, bool y_only) {
    check_same_shape(a.shape(), b.shape(), "psnr");
    double mse = 0;
    if (y_only) {
        check_nchw(a.shape(), "psnr");
        if (a.dim(1) != 3) throw DimensionError("psnr: luma mode needs 3 channels, got " + shape_str(a.shape()));
        const auto ya = to_gray(a, true);
        const auto yb = to_gray(b, true);
        for (std::size_t i = 0; i < ya.size(); ++i) mse += (ya[i] - yb[i]) * (ya[i] - yb[i]);
        mse /= static_cast<double>(ya.size());
    } else {
        for (std::size_t i = 0; i < a.numel(); ++i) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            mse += d * d;
        }
        mse /= static_cast<double>(a.numel());
    }
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "ssim");
    check_nchw(a.shape(), "ssim");
    const std::size_t h = a.dim(2);
    const std::size_t w = a.dim(3);
    if (a.dim(0) != 1) throw DimensionError("ssim: expected a single image, got " + shape_str(a.shape()));
    if (h < kSsimWindow || w < kSsimWindow) {
        throw ContractError("ssim: image " + shape_str(a.shape()) + " is smaller than the 11x11 window");
    }
    const auto x = to_gray(a, false);
    const auto y = to_gray(b, false);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto g = gaussian_window();
    const auto mx = filter_valid(x, h, w, g);
    const auto my = filter_valid(y, h, w, g);
    const auto sxx = filter_valid(xx, h, w, g);
    const auto syy = filter_valid(yy, h, w, g);
    const auto sxy = filter_valid(xy, h, w, g);
    const double c1 = kSsimK1 * kSsimK1;
    const double c2 = kSsimK2 * kSsimK2;
    double total = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cxy = sxy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return total / static_cast<double>(mx.size());
}

void QualityReport::write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write report: " + path);
    os << "file,psnr_out,ssim_out,psnr_hazy,ssim_hazy\n" << std::setprecision(10);
    auto row = [&](const QualityRow& r) {
        os << r.file << ',';
        write_value(os, r.psnr_out);
        os << ',';
        write_value(os, r.ssim_out);
        os << ',';
        write_value(os, r.psnr_hazy);
        os << ',';
        write_value(os, r.ssim_hazy);
        os << '\n';
    };
    for (const auto& r : rows) row(r);
    row(mean);
    if (!os) throw IoError("failed writing report: " + path);
}

template <typename T>
QualityReport eval_pairs(const DehazeModel<T>& model, std::span<const ImagePair<T>> pairs) {
    if (pairs.empty()) throw ContractError("eval: dataset is empty");
    QualityReport report;
    for (const auto& p : pairs) report.rows.push_back(score(model, p.name, p.hazy, p.clean));
    report.mean = mean_row(report.rows);
    return report;
}

QualityReport eval_dataset(const DehazeModel<float>& model, std::span<const PairFiles> pairs) {
    if (pairs.empty()) throw ContractError("eval: dataset is empty");
    QualityReport report;
    for (const auto& p : pairs) {
        Tensor<float> hazy, clean;
        try {
            hazy = read_pnm(p.hazy);
            clean = read_pnm(p.clean);
            check_same_shape(hazy.shape(), clean.shape(), "eval pair");
        } catch (const Error& e) {
            std::cerr << "warning: skipping pair " << p.name << ": " << e.what() << '\n';
            ++report.skipped;
            continue;
        }
        report.rows.push_back(score(model, p.name, hazy, clean));
    }
    if (report.rows.empty()) throw ContractError("eval: no readable pairs (" + std::to_string(report.skipped) + " skipped)");
    report.mean = mean_row(report.rows);
    return report;
}

#define LPDH_INSTANTIATE(T)                                                          \
    template double psnr(const Tensor<T>&, const Tensor<T>&, double, bool);          \
    template double ssim(const Tensor<T>&, const Tensor<T>&);                        \
    template QualityReport eval_pairs(const DehazeModel<T>&, std::span<const ImagePair<T>>);

LPDH_INSTANTIATE(float)
LPDH_INSTANTIATE(double)

} // namespace lpdh
