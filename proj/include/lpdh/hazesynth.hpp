#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lpdh/random.hpp"
#include "lpdh/tensor.hpp"

namespace lpdh {

inline constexpr double kAirlightMin = 0.8;
inline constexpr double kAirlightMax = 1.0;
inline constexpr double kBetaMin = 0.4;
inline constexpr double kBetaMax = 2.0;

struct HazeParams {
    double airlight = 1.0;  // A, gray, shared by all channels
    double beta = 1.0;      // scattering coefficient per depth unit
    Tensor<double> depth;   // (H, W), >= 0
    std::uint64_t seed = 0;

    void validate() const;
};

enum class DepthKind { ramp, radial, noise, file };

DepthKind parse_depth_kind(const std::string& s);

// Depth maps are normalized to [0, 1] so that the beta range is meaningful
// regardless of source.
Tensor<double> depth_ramp(std::size_t h, std::size_t w, Xoshiro256& rng);
Tensor<double> depth_radial(std::size_t h, std::size_t w, Xoshiro256& rng);
Tensor<double> depth_noise(std::size_t h, std::size_t w, Xoshiro256& rng);
Tensor<double> normalize_depth(const Tensor<double>& d);

// t(x) = exp(-beta * d(x)).
Tensor<double> transmission(const Tensor<double>& depth, double beta);

// I = J * t + A * (1 - t), clamped to [0, 1]. `clean` is (1, C, H, W) in [0, 1].
template <typename T>
Tensor<T> apply_haze(const Tensor<T>& clean, const HazeParams& p);

struct DepthSpec {
    DepthKind kind = DepthKind::ramp;
    std::size_t height = 64;
    std::size_t width = 64;
    // Used when kind == file; any non-negative map, rescaled to [0, 1].
    std::optional<Tensor<double>> map;
};

// A ~ U[0.8, 1], beta ~ U[0.4, 2] from Xoshiro256(seed), then the depth map.
HazeParams sample_params(std::uint64_t seed, const DepthSpec& depth);

// Procedural clean scene: two-color gradient, random rectangles and discs,
// and a faint stripe texture. (1, 3, h, w) in [0, 1].
Tensor<float> synthetic_scene(std::size_t h, std::size_t w, Xoshiro256& rng);

// Rounds to the nearest of 256 levels in [0, 1], as stored in 8-bit files.
Tensor<float> quantize8(const Tensor<float>& img);

struct SynthPair {
    Tensor<float> clean;
    Tensor<float> hazy;
    HazeParams params;
};

// One training pair, both images quantized to 8 bits. Without `clean` a
// scene of depth.height x depth.width is generated from pair_seed; with it,
// the depth extent is taken from the image.
SynthPair synthesize_pair(std::uint64_t pair_seed, DepthSpec depth, const Tensor<float>* clean = nullptr);

// Per-pair seeds of a dataset: successive outputs of Xoshiro256(seed).
std::vector<std::uint64_t> pair_seeds(std::uint64_t seed, std::size_t count);

} // namespace lpdh
