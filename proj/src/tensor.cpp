#include "lpdh/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lpdh {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

void check_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
}

void check_nchw(const Shape& s, const char* op) {
    if (s.size() != 4) {
        throw DimensionError(std::string(op) + ": expected NCHW tensor, got " + shape_str(s));
    }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    for (auto d : shape_) {
        if (d == 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape_));
    }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) {
        if (d == 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape_));
    }
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_str(shape_));
    }
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t i) const {
    if (i >= shape_.size()) throw DimensionError("axis " + std::to_string(i) + " out of range for " + shape_str(shape_));
    return shape_[i];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void Tensor<T>::ensure_finite(const std::string& what) const {
    if (!all_finite()) throw NumericError("non-finite value in " + what);
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out = a;
    auto o = out.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += y[i];
    return out;
}

template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "sub");
    Tensor<T> out = a;
    auto o = out.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= y[i];
    return out;
}

template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "mul");
    Tensor<T> out = a;
    auto o = out.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= y[i];
    return out;
}

template <typename T>
Tensor<T> operator*(const Tensor<T>& a, T s) {
    Tensor<T> out = a;
    for (auto& v : out.data()) v *= s;
    return out;
}

template <typename T>
Tensor<T>& operator+=(Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "add");
    auto o = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += y[i];
    return a;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a.shape(), b.shape(), "max_abs_diff");
    T m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <typename T>
T sum(const Tensor<T>& a) {
    T s = 0;
    for (auto v : a.data()) s += v;
    return s;
}

#define LPDH_INSTANTIATE(T)                                                 \
    template class Tensor<T>;                                               \
    template Tensor<T> operator+(const Tensor<T>&, const Tensor<T>&);       \
    template Tensor<T> operator-(const Tensor<T>&, const Tensor<T>&);       \
    template Tensor<T> operator*(const Tensor<T>&, const Tensor<T>&);       \
    template Tensor<T> operator*(const Tensor<T>&, T);                      \
    template Tensor<T>& operator+=(Tensor<T>&, const Tensor<T>&);           \
    template T max_abs_diff(const Tensor<T>&, const Tensor<T>&);            \
    template T sum(const Tensor<T>&);

LPDH_INSTANTIATE(float)
LPDH_INSTANTIATE(double)

} // namespace lpdh
