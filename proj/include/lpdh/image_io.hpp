#pragma once

#include <string>

#include "lpdh/tensor.hpp"

namespace lpdh {

// Binary PPM (P6) or PGM (P5), maxval 1..255, '#' comments allowed in the
// header. Values map linearly to [0, 1]. Returns (1, 3, H, W) for P6 and
// (1, 1, H, W) for P5.
Tensor<float> read_pnm(const std::string& path);

// Writes `P6\n<w> <h>\n255\n` followed by 3*w*h bytes. `img` is
// (1, 3, H, W) or (1, 1, H, W) (gray is replicated); values are clamped to
// [0, 1] and rounded to the nearest 8-bit level.
void write_ppm(const std::string& path, const Tensor<float>& img);

// Lossless float32 sidecar: magic "LPDF", u32 ndim, u64 dims, row-major
// little-endian values.
void write_f32(const std::string& path, const Tensor<float>& t);
Tensor<float> read_f32(const std::string& path);

// Any PNM file as an (H, W) map (channel mean, in [0, 1]).
Tensor<double> read_depth_map(const std::string& path);

} // namespace lpdh
