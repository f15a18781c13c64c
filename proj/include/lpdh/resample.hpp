#pragma once

#include <cstddef>

#include "lpdh/tensor.hpp"

namespace lpdh {

// Reflect-101 ("mirror without repeating the edge") index folding, valid for
// any offset: for n = 4, ... 2 1 | 0 1 2 3 | 2 1 0 1 ...
std::ptrdiff_t reflect101(std::ptrdiff_t i, std::ptrdiff_t n);

// Burt-Adelson binomial taps [1 4 6 4 1] / 16.
inline constexpr double kBinomial5[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

// Separable 5-tap binomial blur per channel plane, reflect-101 borders.
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& img);

// Blur, then keep rows/columns 0, 2, 4, ... Spatial dims must be even.
template <typename T>
Tensor<T> downsample2(const Tensor<T>& img);

// Half-pixel-center bilinear resize (align_corners = false) of an NCHW
// tensor. Source coordinates below zero clamp to the first sample.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& img, std::size_t out_h, std::size_t out_w);

// Transpose of upsample_bilinear: scatters `grad_out` back onto an
// (in_h, in_w) grid with the same interpolation weights.
template <typename T>
Tensor<T> upsample_bilinear_adjoint(const Tensor<T>& grad_out, std::size_t in_h, std::size_t in_w);

// Reflect-101 pads the bottom and right edges up to (out_h, out_w).
template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& img, std::size_t out_h, std::size_t out_w);

// Top-left (h, w) window of an NCHW tensor.
template <typename T>
Tensor<T> crop(const Tensor<T>& img, std::size_t h, std::size_t w);

} // namespace lpdh
