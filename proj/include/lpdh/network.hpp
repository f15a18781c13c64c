#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lpdh/autodiff.hpp"
#include "lpdh/random.hpp"
#include "lpdh/tucker.hpp"

namespace lpdh {

inline constexpr float kLeakySlope = 0.2f;

template <typename T>
struct NamedParam {
    std::string name;
    Var<T> var;
};

struct UNetConfig {
    std::size_t depth = 3;
    std::size_t base_channels = 16;
    std::size_t in_channels = 3;
    std::size_t out_channels = 3;
    // 3x3 convs factorized as 1x1 (C_in -> C/2), 3x3 (C/2 -> C/2), 1x1 (C/2 -> C).
    bool low_rank = false;
    // Zero the final conv so the net starts out as the constant 0.
    bool zero_head = false;

    void validate() const;
    bool operator==(const UNetConfig&) const = default;
};

// One 3x3 convolution stage, plain or low-rank factorized.
template <typename T>
class ConvBlock {
public:
    ConvBlock() = default;
    ConvBlock(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t stride, bool low_rank,
              Xoshiro256& rng, double gain);

    Var<T> forward(const Var<T>& x) const;
    void collect(std::vector<NamedParam<T>>& out) const;

private:
    std::string name_;
    std::size_t stride_ = 1;
    bool low_rank_ = false;
    Var<T> w_;      // plain: (Co, Ci, 3, 3); low-rank: (Co, m, 1, 1)
    Var<T> w_in_;   // low-rank: (m, Ci, 1, 1)
    Var<T> w_mid_;  // low-rank: (m, m, 3, 3)
    Var<T> b_;      // (Co)
};

/// Encoder/decoder with skip concatenation.
///
/// stem conv -> D x [stride-2 conv, conv] -> D x [bilinear upsample to the
/// skip's size, concat skip, conv] -> plain 3x3 head. Channels double per
/// level (C * 2^d); every stage but the head is followed by leaky_relu(0.2).
template <typename T>
class UNet {
public:
    UNet() = default;
    UNet(std::string name, const UNetConfig& cfg, Xoshiro256& rng);

    // Spatial dims must be divisible by 2^depth; output keeps them.
    Var<T> forward(const Var<T>& x) const;

    const UNetConfig& config() const noexcept { return cfg_; }
    std::vector<NamedParam<T>> parameters() const;

private:
    std::string name_;
    UNetConfig cfg_;
    ConvBlock<T> stem_;
    std::vector<ConvBlock<T>> down_;
    std::vector<ConvBlock<T>> enc_;
    std::vector<ConvBlock<T>> dec_;
    Var<T> head_w_;
    Var<T> head_b_;
};

template <typename T>
Var<T> unet_forward(const UNet<T>& net, const Var<T>& x) {
    return net.forward(x);
}

std::size_t unet_parameter_count(const UNetConfig& cfg);

struct ModelConfig {
    // Taylor terms n: n - 1 high bands plus the low band.
    std::size_t terms = 4;
    UNetConfig bottom{3, 16, 3, 3, false, false};
    UNetConfig k_net{2, 8, 9, 3, true, true};
    // Replace the K network by the parameter-free map
    // K = 1 + tanh(q_n'^ - q_n^ + q_{n-1}).
    bool single_unet = false;
    // Scale band q_l by 1/(n - l)! instead of letting K absorb the factor.
    bool explicit_factorials = false;
    bool tucker_enabled = true;
    TuckerConfig tucker;
    // Replace the bottom network by the identity map (diagnostics and tests).
    bool identity_bottom = false;
    std::uint64_t seed = 1;

    std::size_t levels() const { return terms - 1; }
    std::size_t k_channels() const { return k_net.out_channels; }
    void validate() const;
};

template <typename T>
class DehazeModel {
public:
    explicit DehazeModel(ModelConfig cfg);

    const ModelConfig& config() const noexcept { return cfg_; }
    const UNet<T>& bottom_net() const { return bottom_; }
    const UNet<T>& k_net() const { return k_; }

    bool has_bottom_net() const { return !cfg_.identity_bottom; }
    bool has_k_net() const { return !cfg_.single_unet; }

    std::vector<NamedParam<T>> parameters() const;
    std::size_t parameter_count() const;
    void set_requires_grad(bool on);
    void zero_grad();

private:
    ModelConfig cfg_;
    UNet<T> bottom_;
    UNet<T> k_;
};

std::size_t model_parameter_count(const ModelConfig& cfg);

enum class ForwardMode {
    // Tucker denoising is left to the loss; j_out is the raw branch output.
    train,
    // j_out is replaced by its Tucker reconstruction when tucker is enabled.
    infer,
};

// Wall-clock seconds per stage, accumulated across calls.
struct StageTimes {
    double decompose = 0;
    double bottom_net = 0;
    double tucker = 0;
    double k_net = 0;
    double modulate = 0;
    double reconstruct = 0;

    double total() const { return decompose + bottom_net + tucker + k_net + modulate + reconstruct; }
};

template <typename T>
struct FusionOutputs {
    Var<T> j_out;                    // processed low band, F(q_n)
    std::vector<Var<T>> taylor_terms; // J_out^k, finest band first
    Var<T> k_base;                   // K at the coarsest high-band resolution
    Var<T> output_raw;               // fused image before clamping
    Var<T> output;                   // clamped to [0, 1]
};

// K from the low band before (q_n) and after (q_n') processing and the
// coarsest high band q_{n-1}: upsample both low bands to q_{n-1}'s size,
// concat to 9 channels, run k_net, squash with 1 + tanh into (0, 2).
template <typename T>
Var<T> compute_K(const DehazeModel<T>& model, const Var<T>& q_n, const Var<T>& q_n_prime, const Var<T>& q_prev);

// J^k = upsample(K, band size) * band for every band. K must match the
// coarsest band's resolution and may have 1 or the bands' channel count.
template <typename T>
std::vector<Var<T>> modulate_bands(const Var<T>& k_base, std::span<const Var<T>> bands);

template <typename T>
FusionOutputs<T> dehaze_forward(const DehazeModel<T>& model, const Tensor<T>& img, ForwardMode mode,
                                StageTimes* times = nullptr);

// Convenience: inference-mode forward, returns the clamped image.
template <typename T>
Tensor<T> dehaze(const DehazeModel<T>& model, const Tensor<T>& img);

} // namespace lpdh
