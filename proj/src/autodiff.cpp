#include "lpdh/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <utility>

#include "lpdh/resample.hpp"

namespace lpdh {

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

template <typename T>
const Tensor<T>& Var<T>::grad() const {
    if (!has_grad()) throw ContractError("grad requested on a value with no accumulated gradient");
    return node_->grad;
}

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, BackwardRule<T> rule) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    const bool track = std::any_of(inputs.begin(), inputs.end(), [](const Var<T>& v) { return v.requires_grad(); });
    if (track) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (auto& v : inputs) node->inputs.push_back(v.node());
        node->rule = std::move(rule);
    }
    return Var<T>(std::move(node));
}

template <typename T>
Tape<T>::Tape(const Var<T>& loss) {
    if (!loss.defined()) throw ContractError("backward: undefined loss");
    if (loss.value().numel() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS: a node is appended after all of its inputs.
    std::unordered_set<const Node<T>*> seen;
    std::vector<std::pair<std::shared_ptr<Node<T>>, std::size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            auto child = node->inputs[next++];
            if (child->requires_grad && seen.insert(child.get()).second) stack.emplace_back(child, 0);
        } else {
            order_.push_back(node);
            stack.pop_back();
        }
    }
}

template <typename T>
void Tape<T>::run() {
    if (consumed_) throw ContractError("backward: tape already consumed");
    consumed_ = true;
    if (order_.empty()) return;
    order_.back()->grad = Tensor<T>::ones(order_.back()->value.shape());
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node<T>& node = **it;
        if (node.rule && !node.grad.empty()) node.rule(node);
    }
    for (auto& node : order_) {
        if (node->rule) {
            node->rule = nullptr;
            node->inputs.clear();
            node->grad = Tensor<T>();
        }
    }
    order_.clear();
}

template <typename T>
void backward(const Var<T>& loss) {
    Tape<T> tape(loss);
    tape.run();
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
bool wants(const Node<T>& n, std::size_t i) {
    return n.inputs[i]->requires_grad;
}

} // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    return make_op<T>(a.value() + b.value(), {a, b}, [](Node<T>& n) {
        if (wants(n, 0)) n.inputs[0]->accumulate(n.grad);
        if (wants(n, 1)) n.inputs[1]->accumulate(n.grad);
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    return make_op<T>(a.value() - b.value(), {a, b}, [](Node<T>& n) {
        if (wants(n, 0)) n.inputs[0]->accumulate(n.grad);
        if (wants(n, 1)) n.inputs[1]->accumulate(n.grad * T(-1));
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    return make_op<T>(a.value() * b.value(), {a, b}, [](Node<T>& n) {
        if (wants(n, 0)) n.inputs[0]->accumulate(n.grad * n.inputs[1]->value);
        if (wants(n, 1)) n.inputs[1]->accumulate(n.grad * n.inputs[0]->value);
    });
}

template <typename T>
Var<T> add(const Var<T>& a, T s) {
    Tensor<T> out = a.value();
    for (auto& v : out.data()) v += s;
    return make_op<T>(std::move(out), {a}, [](Node<T>& n) { n.inputs[0]->accumulate(n.grad); });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    return make_op<T>(a.value() * s, {a}, [s](Node<T>& n) { n.inputs[0]->accumulate(n.grad * s); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = v >= T(0) ? v : slope * v;
    return make_op<T>(std::move(out), {x}, [slope](Node<T>& n) {
        const auto& in = n.inputs[0]->value;
        auto& g = n.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += in[i] >= T(0) ? n.grad[i] : slope * n.grad[i];
    });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = std::tanh(v);
    return make_op<T>(std::move(out), {x}, [](Node<T>& n) {
        auto& g = n.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * (T(1) - n.value[i] * n.value[i]);
    });
}

template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) v = std::clamp(v, lo, hi);
    return make_op<T>(std::move(out), {x}, [lo, hi](Node<T>& n) {
        const auto& in = n.inputs[0]->value;
        auto& g = n.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) {
            if (in[i] >= lo && in[i] <= hi) g[i] += n.grad[i];
        }
    });
}

template <typename T>
Var<T> stop_gradient(const Var<T>& x) {
    return Var<T>(x.value(), false);
}

template <typename T>
Var<T> sum(const Var<T>& x) {
    return make_op<T>(Tensor<T>::scalar(lpdh::sum(x.value())), {x}, [](Node<T>& n) {
        auto& g = n.inputs[0]->grad_buffer();
        const T s = n.grad[0];
        for (auto& v : g.data()) v += s;
    });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
    const T inv = T(1) / static_cast<T>(x.value().numel());
    return make_op<T>(Tensor<T>::scalar(lpdh::sum(x.value()) * inv), {x}, [inv](Node<T>& n) {
        auto& g = n.inputs[0]->grad_buffer();
        const T s = n.grad[0] * inv;
        for (auto& v : g.data()) v += s;
    });
}

// ---------------------------------------------------------------------------

namespace {

// View of a tensor as (outer, axis, inner) for concat/slice.
struct AxisView {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
    v.extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
    return v;
}

} // namespace

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != axis && s[i] != first[i]) {
                throw DimensionError("concat: mismatched extents " + shape_str(first) + " vs " + shape_str(s));
            }
        }
        out_shape[axis] += s[axis];
    }
    if (parts.size() == 1) return parts[0];

    Tensor<T> out(out_shape);
    const AxisView ov = axis_view(out_shape, axis);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const AxisView pv = axis_view(p.shape(), axis);
        const std::size_t block = pv.extent * pv.inner;
        for (std::size_t o = 0; o < pv.outer; ++o) {
            const T* src = p.value().data().data() + o * block;
            std::copy(src, src + block, out.data().data() + o * ov.extent * ov.inner + off * ov.inner);
        }
        off += pv.extent;
    }
    std::vector<Var<T>> inputs(parts.begin(), parts.end());
    return make_op<T>(std::move(out), std::move(inputs), [axis, offsets, ov](Node<T>& n) {
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            if (!wants(n, k)) continue;
            auto& g = n.inputs[k]->grad_buffer();
            const AxisView pv = axis_view(g.shape(), axis);
            const std::size_t block = pv.extent * pv.inner;
            for (std::size_t o = 0; o < pv.outer; ++o) {
                const T* src = n.grad.data().data() + o * ov.extent * ov.inner + offsets[k] * ov.inner;
                T* dst = g.data().data() + o * block;
                for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
            }
        }
    });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
    const Shape& s = x.shape();
    if (axis >= s.size()) throw DimensionError("slice: axis out of range for " + shape_str(s));
    if (length == 0 || start + length > s[axis]) throw DimensionError("slice: range outside " + shape_str(s));
    Shape out_shape = s;
    out_shape[axis] = length;
    const AxisView iv = axis_view(s, axis);
    Tensor<T> out(out_shape);
    const std::size_t block = length * iv.inner;
    for (std::size_t o = 0; o < iv.outer; ++o) {
        const T* src = x.value().data().data() + o * iv.extent * iv.inner + start * iv.inner;
        std::copy(src, src + block, out.data().data() + o * block);
    }
    return make_op<T>(std::move(out), {x}, [iv, start, block](Node<T>& n) {
        auto& g = n.inputs[0]->grad_buffer();
        for (std::size_t o = 0; o < iv.outer; ++o) {
            T* dst = g.data().data() + o * iv.extent * iv.inner + start * iv.inner;
            const T* src = n.grad.data().data() + o * block;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
    });
}

template <typename T>
Var<T> pad_replicate(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
    check_nchw(x.shape(), "pad_replicate");
    const std::size_t h = x.shape()[2];
    const std::size_t w = x.shape()[3];
    if (out_h < h || out_w < w) throw ContractError("pad_replicate: output smaller than input");
    if (out_h == h && out_w == w) return x;
    const std::size_t planes = x.shape()[0] * x.shape()[1];
    Tensor<T> out({x.shape()[0], x.shape()[1], out_h, out_w});
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = x.value().data().data() + p * h * w;
        T* dst = out.data().data() + p * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const std::size_t sy = std::min(y, h - 1);
            for (std::size_t xx = 0; xx < out_w; ++xx) dst[y * out_w + xx] = src[sy * w + std::min(xx, w - 1)];
        }
    }
    return make_op<T>(std::move(out), {x}, [planes, h, w, out_h, out_w](Node<T>& n) {
        auto& g = n.inputs[0]->grad_buffer();
        for (std::size_t p = 0; p < planes; ++p) {
            const T* src = n.grad.data().data() + p * out_h * out_w;
            T* dst = g.data().data() + p * h * w;
            for (std::size_t y = 0; y < out_h; ++y) {
                const std::size_t sy = std::min(y, h - 1);
                for (std::size_t xx = 0; xx < out_w; ++xx) dst[sy * w + std::min(xx, w - 1)] += src[y * out_w + xx];
            }
        }
    });
}

template <typename T>
Var<T> crop(const Var<T>& x, std::size_t h, std::size_t w) {
    check_nchw(x.shape(), "crop");
    if (h == x.shape()[2] && w == x.shape()[3]) return x;
    return slice(slice(x, 2, 0, h), 3, 0, w);
}

template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
    check_nchw(x.shape(), "upsample_bilinear");
    const std::size_t ih = x.shape()[2];
    const std::size_t iw = x.shape()[3];
    if (out_h == ih && out_w == iw) return x;
    return make_op<T>(upsample_bilinear(x.value(), out_h, out_w), {x}, [ih, iw](Node<T>& n) {
        n.inputs[0]->accumulate(upsample_bilinear_adjoint(n.grad, ih, iw));
    });
}

#define LPDH_INSTANTIATE(T)                                                                       \
    template class Var<T>;                                                                        \
    template class Tape<T>;                                                                       \
    template Var<T> make_op(Tensor<T>, std::vector<Var<T>>, BackwardRule<T>);                     \
    template void backward(const Var<T>&);                                                        \
    template Var<T> add(const Var<T>&, const Var<T>&);                                            \
    template Var<T> sub(const Var<T>&, const Var<T>&);                                            \
    template Var<T> mul(const Var<T>&, const Var<T>&);                                            \
    template Var<T> add(const Var<T>&, T);                                                        \
    template Var<T> scale(const Var<T>&, T);                                                      \
    template Var<T> leaky_relu(const Var<T>&, T);                                                 \
    template Var<T> tanh(const Var<T>&);                                                          \
    template Var<T> clamp(const Var<T>&, T, T);                                                   \
    template Var<T> stop_gradient(const Var<T>&);                                                 \
    template Var<T> sum(const Var<T>&);                                                           \
    template Var<T> mean(const Var<T>&);                                                          \
    template Var<T> concat(std::span<const Var<T>>, std::size_t);                                 \
    template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);                 \
    template Var<T> pad_replicate(const Var<T>&, std::size_t, std::size_t);                       \
    template Var<T> crop(const Var<T>&, std::size_t, std::size_t);                                \
    template Var<T> upsample_bilinear(const Var<T>&, std::size_t, std::size_t);

LPDH_INSTANTIATE(float)
LPDH_INSTANTIATE(double)

} // namespace lpdh
