#include "lpdh/hazesynth.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace lpdh {

void HazeParams::validate() const {
    if (!(airlight >= kAirlightMin && airlight <= kAirlightMax)) {
        throw ContractError("haze: airlight " + std::to_string(airlight) + " outside [0.8, 1]");
    }
    if (!(beta >= kBetaMin && beta <= kBetaMax)) {
        throw ContractError("haze: beta " + std::to_string(beta) + " outside [0.4, 2]");
    }
    if (depth.ndim() != 2) throw DimensionError("haze: depth must be (H, W), got " + shape_str(depth.shape()));
    for (double d : depth.data()) {
        if (!std::isfinite(d) || d < 0) throw ContractError("haze: depth must be finite and non-negative");
    }
}

DepthKind parse_depth_kind(const std::string& s) {
    if (s == "ramp") return DepthKind::ramp;
    if (s == "radial") return DepthKind::radial;
    if (s == "noise") return DepthKind::noise;
    return DepthKind::file;
}

Tensor<double> normalize_depth(const Tensor<double>& d) {
    auto [lo, hi] = std::minmax_element(d.data().begin(), d.data().end());
    const double mn = *lo;
    const double range = *hi - mn;
    Tensor<double> out(d.shape());
    for (std::size_t i = 0; i < d.numel(); ++i) out[i] = range > 0 ? (d[i] - mn) / range : 0.0;
    return out;
}

Tensor<double> depth_ramp(std::size_t h, std::size_t w, Xoshiro256& rng) {
    // Mostly vertical gradient (far at the top) with a random tilt.
    const double tilt = rng.uniform(-0.5, 0.5);
    Tensor<double> d({h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double fy = h > 1 ? static_cast<double>(y) / static_cast<double>(h - 1) : 0.0;
            const double fx = w > 1 ? static_cast<double>(x) / static_cast<double>(w - 1) : 0.0;
            d[y * w + x] = (1.0 - fy) + tilt * fx;
        }
    return normalize_depth(d);
}

Tensor<double> depth_radial(std::size_t h, std::size_t w, Xoshiro256& rng) {
    const double cy = rng.uniform(0.25, 0.75) * static_cast<double>(h);
    const double cx = rng.uniform(0.25, 0.75) * static_cast<double>(w);
    Tensor<double> d({h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            d[y * w + x] = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx);
        }
    return normalize_depth(d);
}

Tensor<double> depth_noise(std::size_t h, std::size_t w, Xoshiro256& rng) {
    // Value noise: bilinearly interpolated random lattices, four octaves.
    Tensor<double> d({h, w}, 0.0);
    double amp = 1.0;
    std::size_t cells = 2;
    for (int oct = 0; oct < 4; ++oct, amp *= 0.5, cells *= 2) {
        const std::size_t gh = cells + 1;
        const std::size_t gw = cells + 1;
        std::vector<double> lattice(gh * gw);
        for (auto& v : lattice) v = rng.uniform();
        for (std::size_t y = 0; y < h; ++y) {
            const double gy = static_cast<double>(y) / static_cast<double>(std::max<std::size_t>(1, h)) * static_cast<double>(cells);
            const auto y0 = static_cast<std::size_t>(gy);
            const double fy = gy - static_cast<double>(y0);
            for (std::size_t x = 0; x < w; ++x) {
                const double gx = static_cast<double>(x) / static_cast<double>(std::max<std::size_t>(1, w)) * static_cast<double>(cells);
                const auto x0 = static_cast<std::size_t>(gx);
                const double fx = gx - static_cast<double>(x0);
                const double a = lattice[y0 * gw + x0];
                const double b = lattice[y0 * gw + x0 + 1];
                const double c = lattice[(y0 + 1) * gw + x0];
                const double e = lattice[(y0 + 1) * gw + x0 + 1];
                d[y * w + x] += amp * ((a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + e * fx) * fy);
            }
        }
    }
    return normalize_depth(d);
}

Tensor<double> transmission(const Tensor<double>& depth, double beta) {
    Tensor<double> t(depth.shape());
    for (std::size_t i = 0; i < depth.numel(); ++i) {
        if (!(depth[i] >= 0)) throw ContractError("transmission: depth must be non-negative");
        t[i] = std::exp(-beta * depth[i]);
    }
    return t;
}

template <typename T>
Tensor<T> apply_haze(const Tensor<T>& clean, const HazeParams& p) {
    check_nchw(clean.shape(), "apply_haze");
    p.validate();
    const std::size_t h = clean.dim(2);
    const std::size_t w = clean.dim(3);
    if (p.depth.dim(0) != h || p.depth.dim(1) != w) {
        throw DimensionError("apply_haze: depth " + shape_str(p.depth.shape()) + " does not match image " +
                             shape_str(clean.shape()));
    }
    for (T v : clean.data()) {
        if (!(v >= T(0) && v <= T(1))) throw ContractError("apply_haze: clean image must lie in [0, 1]");
    }
    const Tensor<double> t = transmission(p.depth, p.beta);
    Tensor<T> out(clean.shape());
    const std::size_t planes = clean.dim(0) * clean.dim(1);
    for (std::size_t c = 0; c < planes; ++c)
        for (std::size_t i = 0; i < h * w; ++i) {
            const double j = static_cast<double>(clean[c * h * w + i]);
            const double v = j * t[i] + p.airlight * (1.0 - t[i]);
            out[c * h * w + i] = static_cast<T>(std::clamp(v, 0.0, 1.0));
        }
    return out;
}

HazeParams sample_params(std::uint64_t seed, const DepthSpec& depth) {
    Xoshiro256 rng(seed);
    HazeParams p;
    p.seed = seed;
    p.airlight = rng.uniform_closed(kAirlightMin, kAirlightMax);
    p.beta = rng.uniform_closed(kBetaMin, kBetaMax);
    switch (depth.kind) {
    case DepthKind::ramp: p.depth = depth_ramp(depth.height, depth.width, rng); break;
    case DepthKind::radial: p.depth = depth_radial(depth.height, depth.width, rng); break;
    case DepthKind::noise: p.depth = depth_noise(depth.height, depth.width, rng); break;
    case DepthKind::file:
        if (!depth.map) throw ContractError("sample_params: file depth requested without a map");
        p.depth = normalize_depth(*depth.map);
        break;
    }
    return p;
}

Tensor<float> synthetic_scene(std::size_t h, std::size_t w, Xoshiro256& rng) {
    Tensor<double> img({1, 3, h, w});
    double top[3], bottom[3];
    for (int c = 0; c < 3; ++c) {
        top[c] = rng.uniform(0.3, 0.9);
        bottom[c] = rng.uniform(0.05, 0.6);
    }
    for (std::size_t y = 0; y < h; ++y) {
        const double f = h > 1 ? static_cast<double>(y) / static_cast<double>(h - 1) : 0.0;
        for (int c = 0; c < 3; ++c)
            for (std::size_t x = 0; x < w; ++x) img.at(0, c, y, x) = top[c] * (1 - f) + bottom[c] * f;
    }
    const int shapes = 4 + static_cast<int>(rng.below(5));
    for (int s = 0; s < shapes; ++s) {
        double color[3];
        for (auto& c : color) c = rng.uniform(0.0, 1.0);
        const double cy = rng.uniform(0, static_cast<double>(h));
        const double cx = rng.uniform(0, static_cast<double>(w));
        const double ry = rng.uniform(0.08, 0.3) * static_cast<double>(h);
        const double rx = rng.uniform(0.08, 0.3) * static_cast<double>(w);
        const bool disc = rng.uniform() < 0.5;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double dy = (static_cast<double>(y) - cy) / ry;
                const double dx = (static_cast<double>(x) - cx) / rx;
                const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
                if (inside)
                    for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = color[c];
            }
    }
    const double freq = rng.uniform(0.3, 1.2);
    const double angle = rng.uniform(0, 3.14159265358979);
    const double amp = rng.uniform(0.02, 0.08);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double s = amp * std::sin(freq * (std::cos(angle) * static_cast<double>(x) +
                                                    std::sin(angle) * static_cast<double>(y)));
            for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = std::clamp(img.at(0, c, y, x) + s, 0.0, 1.0);
        }
    return img.cast<float>();
}

Tensor<float> quantize8(const Tensor<float>& img) {
    Tensor<float> out(img.shape());
    for (std::size_t i = 0; i < img.numel(); ++i) {
        out[i] = static_cast<float>(std::lround(std::clamp(img[i], 0.0f, 1.0f) * 255.0f)) / 255.0f;
    }
    return out;
}

SynthPair synthesize_pair(std::uint64_t pair_seed, DepthSpec depth, const Tensor<float>* clean) {
    SynthPair out;
    if (clean) {
        check_nchw(clean->shape(), "synthesize_pair");
        out.clean = quantize8(*clean);
    } else {
        Xoshiro256 scene_rng(pair_seed ^ 0x9e3779b97f4a7c15ULL);
        out.clean = quantize8(synthetic_scene(depth.height, depth.width, scene_rng));
    }
    depth.height = out.clean.dim(2);
    depth.width = out.clean.dim(3);
    out.params = sample_params(pair_seed, depth);
    out.hazy = quantize8(apply_haze(out.clean, out.params));
    return out;
}

std::vector<std::uint64_t> pair_seeds(std::uint64_t seed, std::size_t count) {
    Xoshiro256 rng(seed);
    std::vector<std::uint64_t> out(count);
    for (auto& s : out) s = rng();
    return out;
}

template Tensor<float> apply_haze(const Tensor<float>&, const HazeParams&);
template Tensor<double> apply_haze(const Tensor<double>&, const HazeParams&);

} // namespace lpdh
