#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lpdh/autodiff.hpp"
#include "lpdh/network.hpp"

namespace lpdh {

struct TrainConfig {
    double lr = 2e-4;
    std::size_t batch = 1;
    std::size_t steps = 500;
    double eps_charb = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    // Weight of the Tucker term; only used when the model has tucker enabled.
    double tucker_lambda = 0.1;
    // Also regularize K toward its own low-rank reconstruction.
    bool tucker_on_k = false;
    std::uint64_t seed = 1;
    // 0 disables periodic checkpoints; the final one is written whenever
    // checkpoint_path is set.
    std::size_t checkpoint_every = 0;
    std::string checkpoint_path;

    void validate() const;
};

// mean(sqrt((pred - target)^2 + eps^2)) over every element.
template <typename T>
Var<T> charbonnier(const Var<T>& pred, const Var<T>& target, T eps);

template <typename T>
Var<T> charbonnier(const Var<T>& pred, const Tensor<T>& target, T eps) {
    return charbonnier(pred, Var<T>(target, false), eps);
}

template <typename T>
struct LossParts {
    Var<T> total;
    double data = 0;
    double reg = 0;
};

// charbonnier(output, clean) + lambda * charbonnier(j_out, sg(tucker(j_out)))
// when the model has tucker enabled; the data term alone otherwise. The data
// term uses the fused image before clamping so saturated pixels still pass
// gradient.
template <typename T>
LossParts<T> total_loss(const DehazeModel<T>& model, const Tensor<T>& hazy, const Tensor<T>& clean,
                        const TrainConfig& cfg);

struct AdamHyper {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    std::uint64_t step = 0;
};

// One bias-corrected Adam update over params, reading each Var's grad (a
// missing grad counts as zero). Throws NumericError naming the first
// parameter whose gradient is not finite; no parameter is modified then.
template <typename T>
void adam_step(std::span<const NamedParam<T>> params, AdamState<T>& state, const AdamHyper& hyper);

template <typename T>
struct ImagePair {
    std::string name;
    Tensor<T> hazy;
    Tensor<T> clean;
};

struct LossRecord {
    std::size_t step = 0;
    double data_loss = 0;
    double reg_loss = 0;
    double total = 0;
};

template <typename T>
struct TrainResult {
    std::vector<LossRecord> curve;
    AdamState<T> optimizer;
};

// Runs cfg.steps Adam steps on pairs drawn with Xoshiro256(cfg.seed).
// `on_step` (optional) sees each record as it is produced.
template <typename T>
TrainResult<T> train(DehazeModel<T>& model, std::span<const ImagePair<T>> data, const TrainConfig& cfg,
                     const std::function<void(const LossRecord&)>& on_step = {});

void write_loss_csv(const std::string& path, std::span<const LossRecord> curve);

} // namespace lpdh
