#include "lpdh/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "lpdh/checkpoint.hpp"

namespace lpdh {

void TrainConfig::validate() const {
    if (!(lr > 0)) throw ContractError("train: lr must be > 0");
    if (steps < 1) throw ContractError("train: steps must be >= 1");
    if (batch < 1) throw ContractError("train: batch must be >= 1");
    if (!(eps_charb > 0)) throw ContractError("train: charbonnier eps must be > 0");
    if (!(tucker_lambda >= 0)) throw ContractError("train: tucker lambda must be >= 0");
}

template <typename T>
Var<T> charbonnier(const Var<T>& pred, const Var<T>& target, T eps) {
    check_same_shape(pred.shape(), target.shape(), "charbonnier");
    const std::size_t n = pred.value().numel();
    const T eps2 = eps * eps;
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T d = pred.value()[i] - target.value()[i];
        acc += std::sqrt(d * d + eps2);
    }
    const T inv = T(1) / static_cast<T>(n);
    return make_op<T>(Tensor<T>::scalar(acc * inv), {pred, target}, [eps2, inv](Node<T>& node) {
        const auto& p = node.inputs[0]->value;
        const auto& t = node.inputs[1]->value;
        const T g = node.grad[0] * inv;
        Tensor<T> grad(p.shape());
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const T d = p[i] - t[i];
            grad[i] = g * d / std::sqrt(d * d + eps2);
        }
        if (node.inputs[0]->requires_grad) node.inputs[0]->accumulate(grad);
        if (node.inputs[1]->requires_grad) node.inputs[1]->accumulate(grad * T(-1));
    });
}

template <typename T>
LossParts<T> total_loss(const DehazeModel<T>& model, const Tensor<T>& hazy, const Tensor<T>& clean,
                        const TrainConfig& cfg) {
    check_same_shape(hazy.shape(), clean.shape(), "total_loss");
    const T eps = static_cast<T>(cfg.eps_charb);
    FusionOutputs<T> f = dehaze_forward(model, hazy, ForwardMode::train);
    LossParts<T> parts;
    Var<T> data = charbonnier(f.output_raw, clean, eps);
    parts.data = static_cast<double>(data.value()[0]);
    parts.total = data;
    if (model.config().tucker_enabled) {
        const TuckerConfig& tc = model.config().tucker;
        Var<T> reg = charbonnier(f.j_out, tucker_denoise_image(f.j_out.value(), tc), eps);
        if (cfg.tucker_on_k) reg = add(reg, charbonnier(f.k_base, tucker_denoise_image(f.k_base.value(), tc), eps));
        parts.reg = static_cast<double>(reg.value()[0]);
        parts.total = add(data, scale(reg, static_cast<T>(cfg.tucker_lambda)));
    }
    return parts;
}

template <typename T>
void adam_step(std::span<const NamedParam<T>> params, AdamState<T>& state, const AdamHyper& hyper) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.push_back(Tensor<T>::zeros(p.var.shape()));
            state.v.push_back(Tensor<T>::zeros(p.var.shape()));
        }
    }
    if (state.m.size() != params.size()) throw ContractError("adam: optimizer state does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        check_same_shape(state.m[i].shape(), params[i].var.shape(), "adam");
        if (params[i].var.has_grad() && !params[i].var.grad().all_finite()) {
            throw NumericError("adam: non-finite gradient in parameter " + params[i].name);
        }
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(hyper.beta1, t);
    const double bc2 = 1.0 - std::pow(hyper.beta2, t);
    const T b1 = static_cast<T>(hyper.beta1);
    const T b2 = static_cast<T>(hyper.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Var<T> var = params[i].var;
        if (!var.has_grad()) {
            // Zero gradient: moments decay, parameters stay bitwise unchanged
            // while both moments are zero.
            for (auto& x : state.m[i].data()) x *= b1;
            for (auto& x : state.v[i].data()) x *= b2;
        } else {
            const Tensor<T>& g = var.grad();
            for (std::size_t k = 0; k < g.numel(); ++k) {
                state.m[i][k] = b1 * state.m[i][k] + (T(1) - b1) * g[k];
                state.v[i][k] = b2 * state.v[i][k] + (T(1) - b2) * g[k] * g[k];
            }
        }
        Tensor<T>& w = var.mutable_value();
        for (std::size_t k = 0; k < w.numel(); ++k) {
            const double mhat = static_cast<double>(state.m[i][k]) / bc1;
            const double vhat = static_cast<double>(state.v[i][k]) / bc2;
            if (mhat == 0.0) continue;
            w[k] = static_cast<T>(static_cast<double>(w[k]) - hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps));
        }
    }
}

template <typename T>
TrainResult<T> train(DehazeModel<T>& model, std::span<const ImagePair<T>> data, const TrainConfig& cfg,
                     const std::function<void(const LossRecord&)>& on_step) {
    cfg.validate();
    if (data.empty()) throw ContractError("train: dataset is empty");
    const AdamHyper hyper{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
    Xoshiro256 rng(cfg.seed);
    const auto params = model.parameters();
    model.set_requires_grad(true);

    TrainResult<T> result;
    result.curve.reserve(cfg.steps);
    const T inv_batch = T(1) / static_cast<T>(cfg.batch);
    std::size_t saved_step = 0;
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        model.zero_grad();
        LossRecord rec;
        rec.step = step;
        for (std::size_t b = 0; b < cfg.batch; ++b) {
            const ImagePair<T>& pair = data[rng.below(data.size())];
            LossParts<T> loss = total_loss(model, pair.hazy, pair.clean, cfg);
            const double total = static_cast<double>(loss.total.value()[0]);
            if (!std::isfinite(total)) {
                model.set_requires_grad(false);
                std::string msg = "train: non-finite loss at step " + std::to_string(step);
                if (saved_step > 0) {
                    msg += "; last good checkpoint (step " + std::to_string(saved_step) + ") kept at " +
                           cfg.checkpoint_path;
                } else {
                    msg += "; no checkpoint written yet";
                }
                throw NumericError(msg);
            }
            backward(cfg.batch == 1 ? loss.total : scale(loss.total, inv_batch));
            rec.data_loss += loss.data / static_cast<double>(cfg.batch);
            rec.reg_loss += loss.reg / static_cast<double>(cfg.batch);
            rec.total += total / static_cast<double>(cfg.batch);
        }
        adam_step<T>(params, result.optimizer, hyper);
        result.curve.push_back(rec);
        if (on_step) on_step(rec);
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            save_checkpoint(cfg.checkpoint_path, model, &result.optimizer);
            saved_step = step;
        }
    }
    model.zero_grad();
    model.set_requires_grad(false);
    if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, model, &result.optimizer);
    return result;
}

void write_loss_csv(const std::string& path, std::span<const LossRecord> curve) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write loss curve: " + path);
    os << "step,data_loss,reg_loss,total\n" << std::setprecision(9);
    for (const auto& r : curve) os << r.step << ',' << r.data_loss << ',' << r.reg_loss << ',' << r.total << '\n';
    if (!os) throw IoError("failed writing loss curve: " + path);
}

#define LPDH_INSTANTIATE(T)                                                                              \
    template Var<T> charbonnier(const Var<T>&, const Var<T>&, T);                                        \
    template LossParts<T> total_loss(const DehazeModel<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                     const TrainConfig&);                                                \
    template void adam_step(std::span<const NamedParam<T>>, AdamState<T>&, const AdamHyper&);           \
    template TrainResult<T> train(DehazeModel<T>&, std::span<const ImagePair<T>>, const TrainConfig&,    \
                                  const std::function<void(const LossRecord&)>&);

LPDH_INSTANTIATE(float)
LPDH_INSTANTIATE(double)

} // namespace lpdh
