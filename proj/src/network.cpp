#include "lpdh/network.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "lpdh/pyramid.hpp"

namespace lpdh {

void UNetConfig::validate() const {
    if (depth < 1) throw ContractError("unet: depth must be >= 1");
    if (base_channels < 2) throw ContractError("unet: base channels must be >= 2");
    if (in_channels < 1 || out_channels < 1) throw ContractError("unet: channel counts must be >= 1");
}

void ModelConfig::validate() const {
    if (terms < 2) throw ContractError("model: terms must be >= 2 (one high band plus the low band)");
    bottom.validate();
    k_net.validate();
    if (bottom.in_channels != 3 || bottom.out_channels != 3) throw ContractError("model: bottom net must map 3 -> 3");
    if (k_net.in_channels != 9) throw ContractError("model: k_net must take exactly 9 input channels");
    if (k_net.out_channels != 1 && k_net.out_channels != 3) throw ContractError("model: K must have 1 or 3 channels");
    tucker.validate();
}

namespace {

template <typename T>
Var<T> he_uniform(Shape shape, std::size_t fan_in, double gain, Xoshiro256& rng) {
    Tensor<T> t(std::move(shape));
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    return Var<T>(std::move(t), false);
}

const double kLeakyGain = std::sqrt(2.0 / (1.0 + 0.2 * 0.2));

template <typename T>
Var<T> lrelu(const Var<T>& x) {
    return leaky_relu(x, static_cast<T>(kLeakySlope));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

template <typename T>
ConvBlock<T>::ConvBlock(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t stride, bool low_rank,
                        Xoshiro256& rng, double gain)
    : name_(std::move(name)), stride_(stride), low_rank_(low_rank) {
    if (low_rank) {
        const std::size_t m = std::max<std::size_t>(1, out_ch / 2);
        w_in_ = he_uniform<T>({m, in_ch, 1, 1}, in_ch, 1.0, rng);
        w_mid_ = he_uniform<T>({m, m, 3, 3}, m * 9, 1.0, rng);
        w_ = he_uniform<T>({out_ch, m, 1, 1}, m, gain, rng);
    } else {
        w_ = he_uniform<T>({out_ch, in_ch, 3, 3}, in_ch * 9, gain, rng);
    }
    b_ = Var<T>(Tensor<T>::zeros({out_ch}), false);
}

template <typename T>
Var<T> ConvBlock<T>::forward(const Var<T>& x) const {
    if (!low_rank_) return conv2d(x, w_, b_, stride_, 1);
    Var<T> h = conv2d(x, w_in_, 1, 0);
    h = conv2d(h, w_mid_, stride_, 1);
    return conv2d(h, w_, b_, 1, 0);
}

template <typename T>
void ConvBlock<T>::collect(std::vector<NamedParam<T>>& out) const {
    if (low_rank_) {
        out.push_back({name_ + ".w_in", w_in_});
        out.push_back({name_ + ".w_mid", w_mid_});
        out.push_back({name_ + ".w_out", w_});
    } else {
        out.push_back({name_ + ".w", w_});
    }
    out.push_back({name_ + ".b", b_});
}

template <typename T>
UNet<T>::UNet(std::string name, const UNetConfig& cfg, Xoshiro256& rng) : name_(std::move(name)), cfg_(cfg) {
    cfg_.validate();
    const std::size_t c0 = cfg_.base_channels;
    stem_ = ConvBlock<T>(name_ + ".stem", cfg_.in_channels, c0, 1, cfg_.low_rank, rng, kLeakyGain);
    for (std::size_t d = 1; d <= cfg_.depth; ++d) {
        const std::size_t cin = c0 << (d - 1);
        const std::size_t cout = c0 << d;
        down_.emplace_back(name_ + ".down" + std::to_string(d), cin, cout, 2, cfg_.low_rank, rng, kLeakyGain);
        enc_.emplace_back(name_ + ".enc" + std::to_string(d), cout, cout, 1, cfg_.low_rank, rng, kLeakyGain);
    }
    for (std::size_t d = cfg_.depth; d >= 1; --d) {
        const std::size_t cin = (c0 << d) + (c0 << (d - 1));
        const std::size_t cout = c0 << (d - 1);
        dec_.emplace_back(name_ + ".dec" + std::to_string(d), cin, cout, 1, cfg_.low_rank, rng, kLeakyGain);
    }
    if (cfg_.zero_head) {
        head_w_ = Var<T>(Tensor<T>::zeros({cfg_.out_channels, c0, 3, 3}), false);
    } else {
        head_w_ = he_uniform<T>({cfg_.out_channels, c0, 3, 3}, c0 * 9, 1.0, rng);
    }
    head_b_ = Var<T>(Tensor<T>::zeros({cfg_.out_channels}), false);
}

template <typename T>
Var<T> UNet<T>::forward(const Var<T>& x) const {
    check_nchw(x.shape(), "unet_forward");
    const std::size_t factor = std::size_t{1} << cfg_.depth;
    if (x.shape()[2] % factor != 0 || x.shape()[3] % factor != 0) {
        throw ContractError("unet_forward: spatial dims " + shape_str(x.shape()) + " not divisible by 2^" +
                            std::to_string(cfg_.depth));
    }
    if (x.shape()[1] != cfg_.in_channels) {
        throw DimensionError(name_ + ": expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
                             std::to_string(x.shape()[1]));
    }
    std::vector<Var<T>> skips;
    Var<T> h = lrelu(stem_.forward(x));
    for (std::size_t d = 0; d < cfg_.depth; ++d) {
        skips.push_back(h);
        h = lrelu(down_[d].forward(h));
        h = lrelu(enc_[d].forward(h));
    }
    for (std::size_t i = 0; i < cfg_.depth; ++i) {
        const Var<T>& skip = skips[cfg_.depth - 1 - i];
        Var<T> up = upsample_bilinear(h, skip.shape()[2], skip.shape()[3]);
        const Var<T> parts[] = {up, skip};
        h = lrelu(dec_[i].forward(concat<T>(parts, 1)));
    }
    return conv2d(h, head_w_, head_b_, 1, 1);
}

template <typename T>
std::vector<NamedParam<T>> UNet<T>::parameters() const {
    std::vector<NamedParam<T>> out;
    stem_.collect(out);
    for (std::size_t d = 0; d < cfg_.depth; ++d) {
        down_[d].collect(out);
        enc_[d].collect(out);
    }
    for (const auto& b : dec_) b.collect(out);
    out.push_back({name_ + ".head.w", head_w_});
    out.push_back({name_ + ".head.b", head_b_});
    return out;
}

std::size_t unet_parameter_count(const UNetConfig& cfg) {
    const auto block = [&](std::size_t ci, std::size_t co) -> std::size_t {
        if (!cfg.low_rank) return co * ci * 9 + co;
        const std::size_t m = std::max<std::size_t>(1, co / 2);
        return m * ci + m * m * 9 + co * m + co;
    };
    const std::size_t c0 = cfg.base_channels;
    std::size_t n = block(cfg.in_channels, c0);
    for (std::size_t d = 1; d <= cfg.depth; ++d) {
        n += block(c0 << (d - 1), c0 << d) + block(c0 << d, c0 << d);
        n += block((c0 << d) + (c0 << (d - 1)), c0 << (d - 1));
    }
    return n + cfg.out_channels * c0 * 9 + cfg.out_channels;
}

std::size_t model_parameter_count(const ModelConfig& cfg) {
    std::size_t n = 0;
    if (!cfg.identity_bottom) n += unet_parameter_count(cfg.bottom);
    if (!cfg.single_unet) n += unet_parameter_count(cfg.k_net);
    return n;
}

template <typename T>
DehazeModel<T>::DehazeModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Xoshiro256 rng(cfg_.seed);
    if (!cfg_.identity_bottom) bottom_ = UNet<T>("bottom", cfg_.bottom, rng);
    if (!cfg_.single_unet) k_ = UNet<T>("knet", cfg_.k_net, rng);
}

template <typename T>
std::vector<NamedParam<T>> DehazeModel<T>::parameters() const {
    std::vector<NamedParam<T>> out;
    if (has_bottom_net()) out = bottom_.parameters();
    if (has_k_net()) {
        auto k = k_.parameters();
        out.insert(out.end(), k.begin(), k.end());
    }
    return out;
}

template <typename T>
std::size_t DehazeModel<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.var.value().numel();
    return n;
}

template <typename T>
void DehazeModel<T>::set_requires_grad(bool on) {
    for (auto& p : parameters()) p.var.set_requires_grad(on);
}

template <typename T>
void DehazeModel<T>::zero_grad() {
    for (auto& p : parameters()) p.var.zero_grad();
}

namespace {

// Runs `net` on x after replicate-padding to its divisibility requirement.
template <typename T>
Var<T> run_branch(const UNet<T>& net, const Var<T>& x) {
    const std::size_t factor = std::size_t{1} << net.config().depth;
    const std::size_t h = x.shape()[2];
    const std::size_t w = x.shape()[3];
    const std::size_t ph = round_up(h, factor);
    const std::size_t pw = round_up(w, factor);
    return crop(net.forward(pad_replicate(x, ph, pw)), h, w);
}

} // namespace

template <typename T>
Var<T> compute_K(const DehazeModel<T>& model, const Var<T>& q_n, const Var<T>& q_n_prime, const Var<T>& q_prev) {
    check_nchw(q_prev.shape(), "compute_K");
    check_same_shape(q_n.shape(), q_n_prime.shape(), "compute_K");
    if (q_n.shape()[1] != 3 || q_prev.shape()[1] != 3) throw DimensionError("compute_K: bands must have 3 channels");
    const std::size_t h = q_prev.shape()[2];
    const std::size_t w = q_prev.shape()[3];
    if (q_n.shape()[2] > h || q_n.shape()[3] > w) {
        throw DimensionError("compute_K: low band " + shape_str(q_n.shape()) + " larger than q_{n-1} " +
                             shape_str(q_prev.shape()));
    }
    Var<T> qp_up = upsample_bilinear(q_n_prime, h, w);
    Var<T> q_up = upsample_bilinear(q_n, h, w);
    if (!model.has_k_net()) {
        return add(tanh(add(sub(qp_up, q_up), q_prev)), T(1));
    }
    const Var<T> parts[] = {qp_up, q_up, q_prev};
    Var<T> raw = run_branch(model.k_net(), concat<T>(parts, 1));
    return add(tanh(raw), T(1));
}

template <typename T>
std::vector<Var<T>> modulate_bands(const Var<T>& k_base, std::span<const Var<T>> bands) {
    std::vector<Var<T>> out;
    out.reserve(bands.size());
    if (bands.empty()) return out;
    check_nchw(k_base.shape(), "modulate_bands");
    const Shape& coarsest = bands.back().shape();
    if (k_base.shape()[2] != coarsest[2] || k_base.shape()[3] != coarsest[3]) {
        throw DimensionError("modulate_bands: K " + shape_str(k_base.shape()) + " does not match coarsest band " +
                             shape_str(coarsest));
    }
    Var<T> k = k_base;
    const std::size_t ch = coarsest[1];
    if (k.shape()[1] != ch) {
        if (k.shape()[1] != 1) throw DimensionError("modulate_bands: K channel count must be 1 or " + std::to_string(ch));
        std::vector<Var<T>> reps(ch, k);
        k = concat<T>(reps, 1);
    }
    for (const auto& band : bands) {
        check_nchw(band.shape(), "modulate_bands");
        out.push_back(mul(upsample_bilinear(k, band.shape()[2], band.shape()[3]), band));
    }
    return out;
}

template <typename T>
FusionOutputs<T> dehaze_forward(const DehazeModel<T>& model, const Tensor<T>& img, ForwardMode mode,
                                StageTimes* times) {
    check_nchw(img.shape(), "dehaze_forward");
    if (img.dim(1) != 3) throw DimensionError("dehaze_forward: expected an RGB image, got " + shape_str(img.shape()));
    const ModelConfig& cfg = model.config();
    const std::size_t n = cfg.terms;
    using clock = std::chrono::steady_clock;

    auto t0 = clock::now();
    PaddedPyramid<T> pp = decompose_padded(img, cfg.levels());
    std::vector<Var<T>> bands;
    bands.reserve(pp.pyramid.high_bands.size());
    for (auto& b : pp.pyramid.high_bands) bands.emplace_back(std::move(b), false);
    Var<T> q_n(std::move(pp.pyramid.low_band), false);
    if (times) times->decompose += seconds_since(t0);

    FusionOutputs<T> out;
    t0 = clock::now();
    out.j_out = model.has_bottom_net() ? run_branch(model.bottom_net(), q_n) : q_n;
    if (times) times->bottom_net += seconds_since(t0);

    if (mode == ForwardMode::infer && cfg.tucker_enabled) {
        t0 = clock::now();
        out.j_out = Var<T>(tucker_denoise_image(out.j_out.value(), cfg.tucker), false);
        if (times) times->tucker += seconds_since(t0);
    }

    t0 = clock::now();
    out.k_base = compute_K(model, q_n, out.j_out, bands.back());
    if (times) times->k_net += seconds_since(t0);

    t0 = clock::now();
    out.taylor_terms = modulate_bands<T>(out.k_base, bands);
    if (cfg.explicit_factorials) {
        // taylor_terms[i] holds band q_{i+1}, i.e. Taylor order k = n - 1 - i.
        for (std::size_t i = 0; i < out.taylor_terms.size(); ++i) {
            const double k = static_cast<double>(n - 1 - i);
            out.taylor_terms[i] = scale(out.taylor_terms[i], static_cast<T>(1.0 / std::tgamma(k + 1.0)));
        }
    }
    if (times) times->modulate += seconds_since(t0);

    t0 = clock::now();
    Var<T> fused = collapse_bands<Var<T>>(out.j_out, out.taylor_terms);
    out.output_raw = crop(fused, pp.height, pp.width);
    out.output = clamp(out.output_raw, T(0), T(1));
    if (times) times->reconstruct += seconds_since(t0);
    return out;
}

template <typename T>
Tensor<T> dehaze(const DehazeModel<T>& model, const Tensor<T>& img) {
    return dehaze_forward(model, img, ForwardMode::infer).output.value();
}

#define LPDH_INSTANTIATE(T)                                                                                 \
    template class ConvBlock<T>;                                                                            \
    template class UNet<T>;                                                                                 \
    template class DehazeModel<T>;                                                                          \
    template Var<T> compute_K(const DehazeModel<T>&, const Var<T>&, const Var<T>&, const Var<T>&);          \
    template std::vector<Var<T>> modulate_bands(const Var<T>&, std::span<const Var<T>>);                    \
    template FusionOutputs<T> dehaze_forward(const DehazeModel<T>&, const Tensor<T>&, ForwardMode, StageTimes*); \
    template Tensor<T> dehaze(const DehazeModel<T>&, const Tensor<T>&);

LPDH_INSTANTIATE(float)
LPDH_INSTANTIATE(double)

} // namespace lpdh
