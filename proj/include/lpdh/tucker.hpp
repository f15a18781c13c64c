#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "lpdh/tensor.hpp"

namespace lpdh {

// Dense row-major matrix of doubles; the working type of the Tucker solver.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix identity(std::size_t n);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    Matrix transposed() const;
    // First `n` columns.
    Matrix leading_columns(std::size_t n) const;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

struct Svd {
    Matrix u;              // rows x k, orthonormal columns
    std::vector<double> s; // k singular values, descending
    Matrix vt;             // k x cols
};

/// Thin SVD by one-sided (Hestenes) Jacobi rotations, k = min(rows, cols).
///
/// Singular vectors are sign-normalized so the largest-magnitude entry of
/// every left singular vector is positive. Left vectors belonging to zero
/// singular values are completed to an orthonormal set. Throws NumericError
/// on non-finite input or when the sweep cap is reached.
Svd svd(const Matrix& m);

// Mode-n matricization of a 3-way tensor (I, J, K). Column order keeps the
// remaining modes in their natural order, last one fastest:
//   mode 0 -> (I, J*K), column j*K + k
//   mode 1 -> (J, I*K), column i*K + k
//   mode 2 -> (K, I*J), column i*J + j
Matrix mode_unfold(const Tensor<double>& t, std::size_t mode);
Tensor<double> mode_fold(const Matrix& m, std::size_t mode, const Shape& shape);

// t x_mode m, where m has shape (new_extent, t.dim(mode)).
Tensor<double> mode_product(const Tensor<double>& t, const Matrix& m, std::size_t mode);

using Ranks = std::array<std::size_t, 3>;

struct TuckerConfig {
    // Explicit per-mode ranks; when empty, rank_fraction of each mode, rounded up.
    std::optional<Ranks> ranks;
    double rank_fraction = 0.5;
    // Stop when one sweep improves the relative error by less than tol.
    double tol = 1e-4;
    int max_iter = 100;
    // Kept for reproducible configs. Initialization is the deterministic
    // HOSVD and the sign convention is fixed, so no draw depends on it.
    std::uint64_t seed = 1;

    void validate() const;
};

struct TuckerDecomp {
    Tensor<double> core;                // (P, Q, R)
    std::array<Matrix, 3> factors;      // (I x P), (J x Q), (K x R)

    Ranks ranks() const { return {factors[0].cols, factors[1].cols, factors[2].cols}; }
};

Ranks resolve_ranks(const Shape& shape, const TuckerConfig& cfg);

TuckerDecomp hosvd(const Tensor<double>& t, const Ranks& ranks);

struct HooiTrace {
    TuckerDecomp decomp;
    // errors[0] is the HOSVD initialization, then one entry per sweep.
    std::vector<double> errors;
    int iterations = 0;

    double final_error() const { return errors.back(); }
};

HooiTrace hooi_trace(const Tensor<double>& t, const TuckerConfig& cfg);
TuckerDecomp hooi(const Tensor<double>& t, const TuckerConfig& cfg);

Tensor<double> reconstruct(const TuckerDecomp& d);

// ||t - reconstruct(d)|| / ||t||, 0 for an all-zero t.
double relative_error(const Tensor<double>& t, const TuckerDecomp& d);

double frobenius_norm(const Tensor<double>& t);

// Low-rank reconstruction of a 3-way (H, W, C) feature. Plain values only:
// callers that hold autodiff values treat the result as a constant.
template <typename T>
Tensor<T> tucker_denoise(const Tensor<T>& feature_hwc, const TuckerConfig& cfg);

// (1, C, H, W) image <-> (H, W, C) 3-way view.
template <typename T>
Tensor<T> nchw_to_hwc(const Tensor<T>& img);
template <typename T>
Tensor<T> hwc_to_nchw(const Tensor<T>& t);

// tucker_denoise applied to a (1, C, H, W) image.
template <typename T>
Tensor<T> tucker_denoise_image(const Tensor<T>& img, const TuckerConfig& cfg);

} // namespace lpdh
