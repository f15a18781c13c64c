#include "lpdh/pyramid.hpp"

#include <string>

namespace lpdh {

std::size_t round_up(std::size_t n, std::size_t multiple) {
    return multiple == 0 ? n : (n + multiple - 1) / multiple * multiple;
}

template <typename T>
Pyramid<T> decompose(const Tensor<T>& img, std::size_t levels) {
    check_nchw(img.shape(), "decompose");
    if (levels < 1) throw ContractError("decompose: levels must be >= 1");
    if (levels >= 8 * sizeof(std::size_t)) throw ContractError("decompose: levels too large");
    const std::size_t factor = std::size_t{1} << levels;
    const std::size_t h = img.dim(2);
    const std::size_t w = img.dim(3);
    if (h % factor != 0 || w % factor != 0) {
        throw ContractError("decompose: spatial dims " + shape_str(img.shape()) + " not divisible by 2^" +
                            std::to_string(levels) + " (pad first)");
    }

    Pyramid<T> pyr;
    pyr.high_bands.reserve(levels);
    Tensor<T> current = img;
    for (std::size_t l = 0; l < levels; ++l) {
        Tensor<T> down = downsample2(current);
        Tensor<T> up = upsample_bilinear(down, current.dim(2), current.dim(3));
        pyr.high_bands.push_back(current - up);
        current = std::move(down);
    }
    pyr.low_band = std::move(current);
    return pyr;
}

template <typename T>
Tensor<T> reconstruct(const Pyramid<T>& pyr) {
    if (pyr.low_band.empty()) throw DimensionError("reconstruct: pyramid has no low band");
    return collapse_bands<Tensor<T>>(pyr.low_band, pyr.high_bands);
}

template <typename T>
PaddedPyramid<T> decompose_padded(const Tensor<T>& img, std::size_t levels) {
    check_nchw(img.shape(), "decompose");
    const std::size_t factor = std::size_t{1} << levels;
    PaddedPyramid<T> out;
    out.height = img.dim(2);
    out.width = img.dim(3);
    const std::size_t ph = round_up(out.height, factor);
    const std::size_t pw = round_up(out.width, factor);
    out.pyramid = (ph == out.height && pw == out.width) ? decompose(img, levels)
                                                        : decompose(pad_reflect(img, ph, pw), levels);
    return out;
}

template <typename T>
Tensor<T> reconstruct_cropped(const PaddedPyramid<T>& p) {
    Tensor<T> full = reconstruct(p.pyramid);
    if (full.dim(2) == p.height && full.dim(3) == p.width) return full;
    return crop(full, p.height, p.width);
}

#define LPDH_INSTANTIATE(T)                                                   \
    template Pyramid<T> decompose(const Tensor<T>&, std::size_t);             \
    template Tensor<T> reconstruct(const Pyramid<T>&);                        \
    template PaddedPyramid<T> decompose_padded(const Tensor<T>&, std::size_t); \
    template Tensor<T> reconstruct_cropped(const PaddedPyramid<T>&);

LPDH_INSTANTIATE(float)
LPDH_INSTANTIATE(double)

} // namespace lpdh
