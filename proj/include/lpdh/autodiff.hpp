#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "lpdh/tensor.hpp"

namespace lpdh {

template <typename T>
struct Node;

// Reads node.grad (the gradient w.r.t. node.value) and accumulates into the
// gradients of node.inputs that require grad.
template <typename T>
using BackwardRule = std::function<void(Node<T>& node)>;

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad; // empty until the first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardRule<T> rule;

    Tensor<T>& grad_buffer() {
        if (grad.empty()) grad = Tensor<T>::zeros(value.shape());
        return grad;
    }
    void accumulate(const Tensor<T>& g) { grad_buffer() += g; }
};

/// Handle to a value that may take part in reverse-mode differentiation.
///
/// Ops on Vars run eagerly. When any input requires grad, the result keeps
/// references to its inputs plus a backward rule; otherwise the result is a
/// plain constant and intermediates are released as soon as they go out of
/// scope, which keeps inference memory flat.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false);
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    // Parameter updates only; never mutate a value that is part of a live graph.
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const Tensor<T>& grad() const;
    void zero_grad() { node_->grad = Tensor<T>(); }

    const std::shared_ptr<Node<T>>& node() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

// Builds the result of a custom op. The rule is recorded only when at least
// one input requires grad.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, BackwardRule<T> rule);

/// Topologically ordered record of every op reachable from a loss.
template <typename T>
class Tape {
public:
    explicit Tape(const Var<T>& loss);

    std::size_t size() const noexcept { return order_.size(); }
    std::span<const std::shared_ptr<Node<T>>> nodes() const noexcept { return order_; }

    // Seeds d(loss)/d(loss) = 1, applies every rule in reverse order and then
    // releases the recorded graph.
    void run();

private:
    std::vector<std::shared_ptr<Node<T>>> order_;
    bool consumed_ = false;
};

// Populates grad on every requires_grad leaf reachable from `loss`.
template <typename T>
void backward(const Var<T>& loss);

// ---- elementwise ---------------------------------------------------------
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> add(const Var<T>& a, T s);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T> Var<T> relu(const Var<T>& x) { return leaky_relu(x, T(0)); }
template <typename T> Var<T> tanh(const Var<T>& x);
// Gradient passes only where lo <= x <= hi.
template <typename T> Var<T> clamp(const Var<T>& x, T lo, T hi);
template <typename T> Var<T> stop_gradient(const Var<T>& x);

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

// ---- reductions ----------------------------------------------------------
template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);

// ---- shape ops -----------------------------------------------------------
template <typename T> Var<T> concat(std::span<const Var<T>> parts, std::size_t axis);
template <typename T> Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length);
// Edge-replicating pad of NCHW bottom/right edges; gradient folds back onto the border.
template <typename T> Var<T> pad_replicate(const Var<T>& x, std::size_t out_h, std::size_t out_w);
template <typename T> Var<T> crop(const Var<T>& x, std::size_t h, std::size_t w);
template <typename T> Var<T> upsample_bilinear(const Var<T>& x, std::size_t out_h, std::size_t out_w);

// ---- convolution ---------------------------------------------------------
// Cross-correlation of NCHW input with OIHW kernel, zero padding.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, std::size_t stride, std::size_t padding);
// Same, plus a per-output-channel bias of shape (O).
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, std::size_t stride,
              std::size_t padding);

// Plain-tensor convolution, shared by the Var op and reference tests.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>* bias,
                         std::size_t stride, std::size_t padding);

} // namespace lpdh
