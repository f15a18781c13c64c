#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "lpdh/errors.hpp"

namespace lpdh {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major N-D array. Images and feature maps are NCHW.
///
/// `float` is used for training and inference; `double` backs every
/// finite-difference and reference-oracle comparison.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{});
    Tensor(Shape shape, std::vector<T> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), T{1}); }
    static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t ndim() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const;
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& vec() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // NCHW accessors; only valid on 4-D tensors.
    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    // Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const;
    // Throws NumericError naming `what` when any value is NaN/Inf.
    void ensure_finite(const std::string& what) const;

private:
    Shape shape_;
    std::vector<T> data_;
};

// Elementwise helpers on plain values. Shapes must match exactly.
template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> operator*(const Tensor<T>& a, T s);
template <typename T> Tensor<T> operator*(T s, const Tensor<T>& a) { return a * s; }
template <typename T> Tensor<T>& operator+=(Tensor<T>& a, const Tensor<T>& b);

template <typename T> T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> T sum(const Tensor<T>& a);

void check_same_shape(const Shape& a, const Shape& b, const char* op);

// Image helpers for (1,C,H,W) tensors.
inline std::size_t height(const Shape& s) { return s[2]; }
inline std::size_t width(const Shape& s) { return s[3]; }
void check_nchw(const Shape& s, const char* op);

} // namespace lpdh
