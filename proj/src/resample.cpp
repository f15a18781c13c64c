#include "lpdh/resample.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lpdh/parallel.hpp"

namespace lpdh {

std::ptrdiff_t reflect101(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n <= 1) return 0;
    const std::ptrdiff_t period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

namespace {

struct BilinearTap {
    std::size_t i0;
    std::size_t i1;
    double w1; // weight on i1; i0 gets 1 - w1
};

std::vector<BilinearTap> bilinear_taps(std::size_t in, std::size_t out) {
    std::vector<BilinearTap> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        auto i0 = static_cast<std::size_t>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        std::size_t i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
}

} // namespace

template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& img) {
    check_nchw(img.shape(), "gaussian_blur");
    const std::size_t planes = img.dim(0) * img.dim(1);
    const auto h = static_cast<std::ptrdiff_t>(img.dim(2));
    const auto w = static_cast<std::ptrdiff_t>(img.dim(3));
    if (h < 2 || w < 2) {
        throw ContractError("gaussian_blur: spatial dims must be >= 2, got " + shape_str(img.shape()));
    }
    Tensor<T> out(img.shape());
    // Written as centre + weighted differences so constant regions come out
    // bit-exact; high bands of a constant image are then exactly zero.
    const auto taps = [](T a, T b, T c, T d, T e) {
        return c + ((a - c) + T(4) * (b - c) + T(4) * (d - c) + (e - c)) * T(0.0625);
    };

    parallel_for(planes, 1, [&](std::size_t pb, std::size_t pe) {
        std::vector<T> tmp(static_cast<std::size_t>(h * w));
        std::vector<std::ptrdiff_t> cols(static_cast<std::size_t>(w + 4));
        for (std::ptrdiff_t x = -2; x < w + 2; ++x) cols[static_cast<std::size_t>(x + 2)] = reflect101(x, w);
        for (std::size_t p = pb; p < pe; ++p) {
            const T* src = img.data().data() + p * static_cast<std::size_t>(h * w);
            T* dst = out.data().data() + p * static_cast<std::size_t>(h * w);
            for (std::ptrdiff_t y = 0; y < h; ++y) {
                const T* row = src + y * w;
                T* trow = tmp.data() + y * w;
                for (std::ptrdiff_t x = 0; x < w; ++x) {
                    const std::ptrdiff_t* c = cols.data() + x;
                    trow[x] = taps(row[c[0]], row[c[1]], row[c[2]], row[c[3]], row[c[4]]);
                }
            }
            for (std::ptrdiff_t y = 0; y < h; ++y) {
                const T* r[5];
                for (int t = 0; t < 5; ++t) r[t] = tmp.data() + reflect101(y + t - 2, h) * w;
                T* drow = dst + y * w;
                for (std::ptrdiff_t x = 0; x < w; ++x) {
                    drow[x] = taps(r[0][x], r[1][x], r[2][x], r[3][x], r[4][x]);
                }
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> downsample2(const Tensor<T>& img) {
    check_nchw(img.shape(), "downsample2");
    const std::size_t h = img.dim(2);
    const std::size_t w = img.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ContractError("downsample2: spatial dims must be even, got " + shape_str(img.shape()));
    }
    Tensor<T> blurred = gaussian_blur(img);
    const std::size_t oh = h / 2;
    const std::size_t ow = w / 2;
    Tensor<T> out({img.dim(0), img.dim(1), oh, ow});
    const std::size_t planes = img.dim(0) * img.dim(1);
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = blurred.data().data() + p * h * w;
        T* dst = out.data().data() + p * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) dst[y * ow + x] = src[(2 * y) * w + 2 * x];
        }
    }
    return out;
}

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& img, std::size_t out_h, std::size_t out_w) {
    check_nchw(img.shape(), "upsample_bilinear");
    if (out_h == 0 || out_w == 0) throw ContractError("upsample_bilinear: zero-sized output");
    const std::size_t ih = img.dim(2);
    const std::size_t iw = img.dim(3);
    const auto ty = bilinear_taps(ih, out_h);
    const auto tx = bilinear_taps(iw, out_w);
    const std::size_t planes = img.dim(0) * img.dim(1);
    Tensor<T> out({img.dim(0), img.dim(1), out_h, out_w});

    parallel_for(planes * out_h, 64, [&](std::size_t rb, std::size_t re) {
        for (std::size_t r = rb; r < re; ++r) {
            const std::size_t p = r / out_h;
            const std::size_t y = r % out_h;
            const T* src = img.data().data() + p * ih * iw;
            const T* r0 = src + ty[y].i0 * iw;
            const T* r1 = src + ty[y].i1 * iw;
            const T wy = T(ty[y].w1);
            T* dst = out.data().data() + p * out_h * out_w + y * out_w;
            for (std::size_t x = 0; x < out_w; ++x) {
                const T wx = T(tx[x].w1);
                const T top = r0[tx[x].i0] + wx * (r0[tx[x].i1] - r0[tx[x].i0]);
                const T bot = r1[tx[x].i0] + wx * (r1[tx[x].i1] - r1[tx[x].i0]);
                dst[x] = top + wy * (bot - top);
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> upsample_bilinear_adjoint(const Tensor<T>& grad_out, std::size_t in_h, std::size_t in_w) {
    check_nchw(grad_out.shape(), "upsample_bilinear_adjoint");
    const std::size_t oh = grad_out.dim(2);
    const std::size_t ow = grad_out.dim(3);
    const auto ty = bilinear_taps(in_h, oh);
    const auto tx = bilinear_taps(in_w, ow);
    const std::size_t planes = grad_out.dim(0) * grad_out.dim(1);
    Tensor<T> out({grad_out.dim(0), grad_out.dim(1), in_h, in_w}, T{0});

    parallel_for(planes, 1, [&](std::size_t pb, std::size_t pe) {
        for (std::size_t p = pb; p < pe; ++p) {
            const T* g = grad_out.data().data() + p * oh * ow;
            T* dst = out.data().data() + p * in_h * in_w;
            for (std::size_t y = 0; y < oh; ++y) {
                const T wy1 = T(ty[y].w1);
                const T wy0 = T(1) - wy1;
                T* r0 = dst + ty[y].i0 * in_w;
                T* r1 = dst + ty[y].i1 * in_w;
                for (std::size_t x = 0; x < ow; ++x) {
                    const T gv = g[y * ow + x];
                    const T wx1 = T(tx[x].w1);
                    const T wx0 = T(1) - wx1;
                    r0[tx[x].i0] += gv * wy0 * wx0;
                    r0[tx[x].i1] += gv * wy0 * wx1;
                    r1[tx[x].i0] += gv * wy1 * wx0;
                    r1[tx[x].i1] += gv * wy1 * wx1;
                }
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& img, std::size_t out_h, std::size_t out_w) {
    check_nchw(img.shape(), "pad_reflect");
    const std::size_t h = img.dim(2);
    const std::size_t w = img.dim(3);
    if (out_h < h || out_w < w) throw ContractError("pad_reflect: output smaller than input");
    Tensor<T> out({img.dim(0), img.dim(1), out_h, out_w});
    const std::size_t planes = img.dim(0) * img.dim(1);
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = img.data().data() + p * h * w;
        T* dst = out.data().data() + p * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const auto sy = static_cast<std::size_t>(reflect101(static_cast<std::ptrdiff_t>(y), static_cast<std::ptrdiff_t>(h)));
            for (std::size_t x = 0; x < out_w; ++x) {
                const auto sx = static_cast<std::size_t>(reflect101(static_cast<std::ptrdiff_t>(x), static_cast<std::ptrdiff_t>(w)));
                dst[y * out_w + x] = src[sy * w + sx];
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& img, std::size_t h, std::size_t w) {
    check_nchw(img.shape(), "crop");
    const std::size_t ih = img.dim(2);
    const std::size_t iw = img.dim(3);
    if (h > ih || w > iw || h == 0 || w == 0) throw ContractError("crop: window outside image");
    Tensor<T> out({img.dim(0), img.dim(1), h, w});
    const std::size_t planes = img.dim(0) * img.dim(1);
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < h; ++y) {
            const T* src = img.data().data() + p * ih * iw + y * iw;
            std::copy(src, src + w, out.data().data() + p * h * w + y * w);
        }
    }
    return out;
}

#define LPDH_INSTANTIATE(T)                                                                  \
    template Tensor<T> gaussian_blur(const Tensor<T>&);                                      \
    template Tensor<T> downsample2(const Tensor<T>&);                                        \
    template Tensor<T> upsample_bilinear(const Tensor<T>&, std::size_t, std::size_t);        \
    template Tensor<T> upsample_bilinear_adjoint(const Tensor<T>&, std::size_t, std::size_t); \
    template Tensor<T> pad_reflect(const Tensor<T>&, std::size_t, std::size_t);              \
    template Tensor<T> crop(const Tensor<T>&, std::size_t, std::size_t);

LPDH_INSTANTIATE(float)
LPDH_INSTANTIATE(double)

} // namespace lpdh
