#include <algorithm>
#include <string>
#include <vector>

#include "lpdh/autodiff.hpp"
#include "lpdh/parallel.hpp"

namespace lpdh {

namespace {

struct ConvGeom {
    std::size_t n, ci, h, w;
    std::size_t co, kh, kw;
    std::size_t stride, pad;
    std::size_t ho, wo;

    std::size_t k() const { return ci * kh * kw; }
};

ConvGeom conv_geometry(const Shape& in, const Shape& ker, std::size_t stride, std::size_t pad) {
    check_nchw(in, "conv2d input");
    if (ker.size() != 4) throw DimensionError("conv2d: kernel must be OIHW, got " + shape_str(ker));
    if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
    if (in[1] != ker[1]) {
        throw DimensionError("conv2d: input has " + std::to_string(in[1]) + " channels, kernel expects " +
                             std::to_string(ker[1]));
    }
    if (in[2] + 2 * pad < ker[2] || in[3] + 2 * pad < ker[3]) {
        throw DimensionError("conv2d: kernel " + shape_str(ker) + " larger than padded input " + shape_str(in));
    }
    ConvGeom g{in[0], in[1], in[2], in[3], ker[0], ker[2], ker[3], stride, pad, 0, 0};
    g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
    g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
    return g;
}

// Output rows per im2col block; keeps the column buffer near 1M elements.
std::size_t rows_per_block(const ConvGeom& g) {
    const std::size_t per_row = std::max<std::size_t>(1, g.k() * g.wo);
    return std::clamp<std::size_t>((1u << 20) / per_row, 1, g.ho);
}

// cols[k][p] for output rows [y0, y1) of image `img` (one batch element).
template <typename T>
void im2col(const ConvGeom& g, const T* img, std::size_t y0, std::size_t y1, std::vector<T>& cols) {
    const std::size_t p_count = (y1 - y0) * g.wo;
    cols.assign(g.k() * p_count, T{0});
    for (std::size_t c = 0; c < g.ci; ++c) {
        const T* plane = img + c * g.h * g.w;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                T* row = cols.data() + ((c * g.kh + ky) * g.kw + kx) * p_count;
                for (std::size_t y = y0; y < y1; ++y) {
                    const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    const T* src = plane + static_cast<std::size_t>(iy) * g.w;
                    T* dst = row + (y - y0) * g.wo;
                    for (std::size_t x = 0; x < g.wo; ++x) {
                        const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[x] = src[ix];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const ConvGeom& g, const std::vector<T>& cols, std::size_t y0, std::size_t y1, T* img) {
    const std::size_t p_count = (y1 - y0) * g.wo;
    for (std::size_t c = 0; c < g.ci; ++c) {
        T* plane = img + c * g.h * g.w;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const T* row = cols.data() + ((c * g.kh + ky) * g.kw + kx) * p_count;
                for (std::size_t y = y0; y < y1; ++y) {
                    const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    T* dst = plane + static_cast<std::size_t>(iy) * g.w;
                    const T* src = row + (y - y0) * g.wo;
                    for (std::size_t x = 0; x < g.wo; ++x) {
                        const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[x];
                    }
                }
            }
        }
    }
}

constexpr std::size_t kMinParallelWork = 1u << 16;

template <typename T>
void conv_backward(const ConvGeom& g, Node<T>& n, bool has_bias) {
    const Tensor<T>& x = n.inputs[0]->value;
    const Tensor<T>& wt = n.inputs[1]->value;
    const bool want_x = n.inputs[0]->requires_grad;
    const bool want_w = n.inputs[1]->requires_grad;
    const bool want_b = has_bias && n.inputs[2]->requires_grad;
    const std::size_t kdim = g.k();
    const std::size_t rows = rows_per_block(g);

    T* dx = want_x ? n.inputs[0]->grad_buffer().data().data() : nullptr;
    T* dw = want_w ? n.inputs[1]->grad_buffer().data().data() : nullptr;
    T* db = want_b ? n.inputs[2]->grad_buffer().data().data() : nullptr;

    std::vector<T> cols;
    std::vector<T> dcols;
    for (std::size_t b = 0; b < g.n; ++b) {
        const T* img = x.data().data() + b * g.ci * g.h * g.w;
        const T* gout = n.grad.data().data() + b * g.co * g.ho * g.wo;
        for (std::size_t y0 = 0; y0 < g.ho; y0 += rows) {
            const std::size_t y1 = std::min(g.ho, y0 + rows);
            const std::size_t pc = (y1 - y0) * g.wo;
            const std::size_t work = g.co * kdim * pc;
            if (want_w) im2col(g, img, y0, y1, cols);
            if (want_w || want_b) {
                parallel_for(g.co, work > kMinParallelWork ? 1 : g.co, [&](std::size_t cb, std::size_t ce) {
                    for (std::size_t co = cb; co < ce; ++co) {
                        const T* grow = gout + co * g.ho * g.wo + y0 * g.wo;
                        if (want_b) {
                            T s = 0;
                            for (std::size_t p = 0; p < pc; ++p) s += grow[p];
                            db[co] += s;
                        }
                        if (want_w) {
                            T* dwrow = dw + co * kdim;
                            for (std::size_t k = 0; k < kdim; ++k) {
                                const T* crow = cols.data() + k * pc;
                                T s = 0;
                                for (std::size_t p = 0; p < pc; ++p) s += grow[p] * crow[p];
                                dwrow[k] += s;
                            }
                        }
                    }
                });
            }
            if (want_x) {
                dcols.assign(kdim * pc, T{0});
                parallel_for(kdim, work > kMinParallelWork ? 1 : kdim, [&](std::size_t kb, std::size_t ke) {
                    for (std::size_t k = kb; k < ke; ++k) {
                        T* drow = dcols.data() + k * pc;
                        for (std::size_t co = 0; co < g.co; ++co) {
                            const T wv = wt[co * kdim + k];
                            if (wv == T{0}) continue;
                            const T* grow = gout + co * g.ho * g.wo + y0 * g.wo;
                            for (std::size_t p = 0; p < pc; ++p) drow[p] += wv * grow[p];
                        }
                    }
                });
                col2im_add(g, dcols, y0, y1, dx + b * g.ci * g.h * g.w);
            }
        }
    }
}

} // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>* bias,
                         std::size_t stride, std::size_t padding) {
    const ConvGeom g = conv_geometry(input.shape(), kernel.shape(), stride, padding);
    if (bias && (bias->ndim() != 1 || bias->dim(0) != g.co)) {
        throw DimensionError("conv2d: bias must have shape (" + std::to_string(g.co) + "), got " +
                             shape_str(bias->shape()));
    }
    Tensor<T> out({g.n, g.co, g.ho, g.wo}, T{0});
    const std::size_t kdim = g.k();
    const std::size_t rows = rows_per_block(g);
    std::vector<T> cols;
    for (std::size_t b = 0; b < g.n; ++b) {
        const T* img = input.data().data() + b * g.ci * g.h * g.w;
        T* obase = out.data().data() + b * g.co * g.ho * g.wo;
        for (std::size_t y0 = 0; y0 < g.ho; y0 += rows) {
            const std::size_t y1 = std::min(g.ho, y0 + rows);
            const std::size_t pc = (y1 - y0) * g.wo;
            im2col(g, img, y0, y1, cols);
            const std::size_t work = g.co * kdim * pc;
            parallel_for(g.co, work > kMinParallelWork ? 1 : g.co, [&](std::size_t cb, std::size_t ce) {
                for (std::size_t co = cb; co < ce; ++co) {
                    T* orow = obase + co * g.ho * g.wo + y0 * g.wo;
                    const T b0 = bias ? (*bias)[co] : T{0};
                    std::fill(orow, orow + pc, b0);
                    const T* wrow = kernel.data().data() + co * kdim;
                    for (std::size_t k = 0; k < kdim; ++k) {
                        const T wv = wrow[k];
                        if (wv == T{0}) continue;
                        const T* crow = cols.data() + k * pc;
                        for (std::size_t p = 0; p < pc; ++p) orow[p] += wv * crow[p];
                    }
                }
            });
        }
    }
    return out;
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, std::size_t stride, std::size_t padding) {
    const ConvGeom g = conv_geometry(input.shape(), kernel.shape(), stride, padding);
    return make_op<T>(conv2d_forward<T>(input.value(), kernel.value(), nullptr, stride, padding), {input, kernel},
                      [g](Node<T>& n) { conv_backward(g, n, false); });
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, const Var<T>& bias, std::size_t stride,
              std::size_t padding) {
    const ConvGeom g = conv_geometry(input.shape(), kernel.shape(), stride, padding);
    return make_op<T>(conv2d_forward(input.value(), kernel.value(), &bias.value(), stride, padding),
                      {input, kernel, bias}, [g](Node<T>& n) { conv_backward(g, n, true); });
}

#define LPDH_INSTANTIATE(T)                                                                                   \
    template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, std::size_t,      \
                                      std::size_t);                                                           \
    template Var<T> conv2d(const Var<T>&, const Var<T>&, std::size_t, std::size_t);                           \
    template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t);

LPDH_INSTANTIATE(float)
LPDH_INSTANTIATE(double)

} // namespace lpdh
