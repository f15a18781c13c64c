#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lpdh/resample.hpp"
#include "lpdh/tensor.hpp"

namespace lpdh {

/// Laplacian pyramid of an NCHW image.
///
/// high_bands[0] is the finest band (full resolution) and high_bands[L-1] the
/// coarsest; low_band is the residual at 1/2^L resolution. With n = L + 1
/// terms, high_bands[l-1] is q_l and low_band is q_n.
template <typename T>
struct Pyramid {
    std::vector<Tensor<T>> high_bands;
    Tensor<T> low_band;

    std::size_t levels() const noexcept { return high_bands.size(); }
};

// Smallest multiple of `multiple` that is >= n.
std::size_t round_up(std::size_t n, std::size_t multiple);

// Spatial dims must be divisible by 2^levels; levels >= 1.
template <typename T>
Pyramid<T> decompose(const Tensor<T>& img, std::size_t levels);

template <typename T>
Tensor<T> reconstruct(const Pyramid<T>& pyr);

// Reflect-pads to a multiple of 2^levels, decomposes, and records the
// original extent so reconstruct_cropped can undo the padding.
template <typename T>
struct PaddedPyramid {
    Pyramid<T> pyramid;
    std::size_t height = 0;
    std::size_t width = 0;
};

template <typename T>
PaddedPyramid<T> decompose_padded(const Tensor<T>& img, std::size_t levels);

template <typename T>
Tensor<T> reconstruct_cropped(const PaddedPyramid<T>& p);

// Collapse shared by plain tensors and autodiff values: start from the low
// band and, coarsest first, upsample the running image to the next band's
// size and add the band. Works for any V with shape(), add() and
// upsample_bilinear() overloads (Tensor<T>, Var<T>).
template <typename V>
V collapse_bands(const V& low, std::span<const V> high_fine_to_coarse) {
    V current = low;
    for (std::size_t i = high_fine_to_coarse.size(); i-- > 0;) {
        const V& band = high_fine_to_coarse[i];
        const auto& s = band.shape();
        if (s.size() != 4 || current.shape().size() != 4 || s[0] != current.shape()[0] ||
            s[1] != current.shape()[1]) {
            throw DimensionError("reconstruct: band " + std::to_string(i + 1) + " shape " + shape_str(s) +
                                 " inconsistent with " + shape_str(current.shape()));
        }
        if (s[2] != 2 * current.shape()[2] || s[3] != 2 * current.shape()[3]) {
            throw DimensionError("reconstruct: band " + std::to_string(i + 1) + " shape " + shape_str(s) +
                                 " is not twice the level below " + shape_str(current.shape()));
        }
        current = add(upsample_bilinear(current, s[2], s[3]), band);
    }
    return current;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return a + b;
}

} // namespace lpdh
