#include "lpdh/tucker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace lpdh {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols, rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix Matrix::leading_columns(std::size_t n) const {
    if (n > cols) throw DimensionError("leading_columns: requested " + std::to_string(n) + " of " + std::to_string(cols));
    Matrix out(rows, n);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < n; ++c) out(r, c) = (*this)(r, c);
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw DimensionError("matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* orow = &out.data[i * out.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double av = a(i, k);
            if (av == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw DimensionError("matmul_tn: row counts differ");
    Matrix out(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = &a.data[k * a.cols];
        const double* brow = &b.data[k * b.cols];
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* orow = &out.data[i * out.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

namespace {

constexpr int kMaxSweeps = 100;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Thin SVD for rows >= cols. Works on columns, accumulating rotations in V.
Svd svd_tall(const Matrix& m) {
    const std::size_t rows = m.rows;
    const std::size_t n = m.cols;
    std::vector<std::vector<double>> a(n, std::vector<double>(rows));
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t r = 0; r < rows; ++r) a[c][r] = m(r, c);
        v[c][c] = 1.0;
    }

    const double eps = std::numeric_limits<double>::epsilon();
    const double rot_tol = eps * static_cast<double>(rows);
    // Columns below this norm are rounding noise of a rank-deficient input;
    // rotating them against each other never settles.
    double frob2 = 0;
    for (const auto& col : a) frob2 += dot(col, col);
    const double negligible = eps * eps * frob2;
    bool converged = false;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double alpha = dot(a[i], a[i]);
                const double beta = dot(a[j], a[j]);
                const double gamma = dot(a[i], a[j]);
                if (gamma == 0.0 || alpha <= negligible || beta <= negligible ||
                    std::abs(gamma) <= rot_tol * std::sqrt(alpha * beta))
                    continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < rows; ++k) {
                    const double ai = a[i][k];
                    const double aj = a[j][k];
                    a[i][k] = c * ai - s * aj;
                    a[j][k] = s * ai + c * aj;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vi = v[i][k];
                    const double vj = v[j][k];
                    v[i][k] = c * vi - s * vj;
                    v[j][k] = s * vi + c * vj;
                }
            }
        }
    }
    if (!converged) throw NumericError("svd: Jacobi sweeps did not converge");

    std::vector<double> sigma(n);
    for (std::size_t c = 0; c < n; ++c) sigma[c] = std::sqrt(dot(a[c], a[c]));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    Svd out;
    out.u = Matrix(rows, n);
    out.vt = Matrix(n, n);
    out.s.resize(n);
    const double smax = n ? sigma[order[0]] : 0.0;
    const double tiny = std::max(smax * eps * static_cast<double>(std::max(rows, n)), std::numeric_limits<double>::min());

    std::vector<std::vector<double>> ucols;
    for (std::size_t idx = 0; idx < n; ++idx) {
        const std::size_t c = order[idx];
        out.s[idx] = sigma[c];
        std::vector<double> u(rows, 0.0);
        if (sigma[c] > tiny) {
            for (std::size_t r = 0; r < rows; ++r) u[r] = a[c][r] / sigma[c];
        } else {
            out.s[idx] = 0.0;
            // Complete with the first basis vector that survives Gram-Schmidt.
            for (std::size_t e = 0; e < rows; ++e) {
                std::fill(u.begin(), u.end(), 0.0);
                u[e] = 1.0;
                for (int pass = 0; pass < 2; ++pass) {
                    for (const auto& q : ucols) {
                        const double p = dot(u, q);
                        for (std::size_t r = 0; r < rows; ++r) u[r] -= p * q[r];
                    }
                }
                const double nrm = std::sqrt(dot(u, u));
                if (nrm > 0.5) {
                    for (auto& x : u) x /= nrm;
                    break;
                }
            }
        }
        // Largest-magnitude entry positive.
        std::size_t arg = 0;
        for (std::size_t r = 1; r < rows; ++r)
            if (std::abs(u[r]) > std::abs(u[arg])) arg = r;
        const double sign = u[arg] < 0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < rows; ++r) out.u(r, idx) = sign * u[r];
        for (std::size_t k = 0; k < n; ++k) out.vt(idx, k) = sign * v[c][k];
        ucols.push_back(std::move(u));
        for (auto& x : ucols.back()) x *= sign;
    }
    return out;
}

} // namespace

Svd svd(const Matrix& m) {
    if (m.rows == 0 || m.cols == 0) throw DimensionError("svd: empty matrix");
    for (double x : m.data) {
        if (!std::isfinite(x)) throw NumericError("svd: non-finite entry");
    }
    if (m.rows >= m.cols) return svd_tall(m);

    // M^T = U' S V'^T  =>  M = V' S U'^T.
    Svd t = svd_tall(m.transposed());
    Svd out;
    out.u = t.vt.transposed();
    out.s = std::move(t.s);
    out.vt = t.u.transposed();
    // Re-apply the sign convention to the new left vectors.
    for (std::size_t c = 0; c < out.u.cols; ++c) {
        std::size_t arg = 0;
        for (std::size_t r = 1; r < out.u.rows; ++r)
            if (std::abs(out.u(r, c)) > std::abs(out.u(arg, c))) arg = r;
        if (out.u(arg, c) < 0) {
            for (std::size_t r = 0; r < out.u.rows; ++r) out.u(r, c) = -out.u(r, c);
            for (std::size_t k = 0; k < out.vt.cols; ++k) out.vt(c, k) = -out.vt(c, k);
        }
    }
    return out;
}

namespace {

void check_three_way(const Shape& s, const char* op) {
    if (s.size() != 3) throw DimensionError(std::string(op) + ": expected 3-way tensor, got " + shape_str(s));
}

void check_mode(std::size_t mode, const char* op) {
    if (mode > 2) throw ContractError(std::string(op) + ": mode " + std::to_string(mode) + " out of range");
}

// (row, col) of element (i, j, k) in the mode-n unfolding.
inline std::pair<std::size_t, std::size_t> unfold_index(std::size_t mode, std::size_t i, std::size_t j, std::size_t k,
                                                        std::size_t J, std::size_t K) {
    switch (mode) {
    case 0: return {i, j * K + k};
    case 1: return {j, i * K + k};
    default: return {k, i * J + j};
    }
}

} // namespace

Matrix mode_unfold(const Tensor<double>& t, std::size_t mode) {
    check_three_way(t.shape(), "mode_unfold");
    check_mode(mode, "mode_unfold");
    const std::size_t I = t.dim(0), J = t.dim(1), K = t.dim(2);
    const std::size_t rows = t.dim(mode);
    Matrix m(rows, t.numel() / rows);
    for (std::size_t i = 0; i < I; ++i)
        for (std::size_t j = 0; j < J; ++j)
            for (std::size_t k = 0; k < K; ++k) {
                auto [r, c] = unfold_index(mode, i, j, k, J, K);
                m(r, c) = t[(i * J + j) * K + k];
            }
    return m;
}

Tensor<double> mode_fold(const Matrix& m, std::size_t mode, const Shape& shape) {
    check_three_way(shape, "mode_fold");
    check_mode(mode, "mode_fold");
    if (m.rows != shape[mode] || m.rows * m.cols != shape_numel(shape)) {
        throw DimensionError("mode_fold: matrix does not match " + shape_str(shape));
    }
    const std::size_t I = shape[0], J = shape[1], K = shape[2];
    Tensor<double> t(shape);
    for (std::size_t i = 0; i < I; ++i)
        for (std::size_t j = 0; j < J; ++j)
            for (std::size_t k = 0; k < K; ++k) {
                auto [r, c] = unfold_index(mode, i, j, k, J, K);
                t[(i * J + j) * K + k] = m(r, c);
            }
    return t;
}

Tensor<double> mode_product(const Tensor<double>& t, const Matrix& m, std::size_t mode) {
    check_three_way(t.shape(), "mode_product");
    check_mode(mode, "mode_product");
    if (m.cols != t.dim(mode)) {
        throw DimensionError("mode_product: matrix has " + std::to_string(m.cols) + " columns, mode extent is " +
                             std::to_string(t.dim(mode)));
    }
    Shape out_shape = t.shape();
    out_shape[mode] = m.rows;
    return mode_fold(matmul(m, mode_unfold(t, mode)), mode, out_shape);
}

void TuckerConfig::validate() const {
    if (!(tol > 0)) throw ContractError("tucker: tol must be > 0");
    if (max_iter < 1) throw ContractError("tucker: max_iter must be >= 1");
    if (!ranks && !(rank_fraction > 0 && rank_fraction <= 1)) {
        throw ContractError("tucker: rank fraction must lie in (0, 1]");
    }
}

Ranks resolve_ranks(const Shape& shape, const TuckerConfig& cfg) {
    check_three_way(shape, "tucker");
    cfg.validate();
    Ranks r{};
    for (std::size_t m = 0; m < 3; ++m) {
        if (cfg.ranks) {
            r[m] = (*cfg.ranks)[m];
        } else {
            const double want = std::ceil(cfg.rank_fraction * static_cast<double>(shape[m]) - 1e-9);
            r[m] = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, shape[m]);
        }
        if (r[m] < 1 || r[m] > shape[m]) {
            throw ContractError("tucker: rank " + std::to_string(r[m]) + " invalid for mode " + std::to_string(m) +
                                " of extent " + std::to_string(shape[m]));
        }
    }
    return r;
}

namespace {

Tensor<double> project_core(const Tensor<double>& t, const std::array<Matrix, 3>& f) {
    Tensor<double> c = t;
    for (std::size_t m = 0; m < 3; ++m) c = mode_product(c, f[m].transposed(), m);
    return c;
}

Matrix leading_left_vectors(const Matrix& unfolded, std::size_t rank) {
    if (unfolded.cols >= rank) return svd(unfolded).u.leading_columns(rank);
    // Fewer columns than the rank (the other modes' ranks multiply to less
    // than this one): zero columns make the SVD complete the basis.
    Matrix padded(unfolded.rows, rank);
    for (std::size_t r = 0; r < unfolded.rows; ++r)
        for (std::size_t c = 0; c < unfolded.cols; ++c) padded(r, c) = unfolded(r, c);
    return svd(padded).u.leading_columns(rank);
}

} // namespace

TuckerDecomp hosvd(const Tensor<double>& t, const Ranks& ranks) {
    check_three_way(t.shape(), "hosvd");
    for (std::size_t m = 0; m < 3; ++m) {
        if (ranks[m] < 1 || ranks[m] > t.dim(m)) {
            throw ContractError("hosvd: rank " + std::to_string(ranks[m]) + " outside [1, " +
                                std::to_string(t.dim(m)) + "] for mode " + std::to_string(m));
        }
    }
    TuckerDecomp d;
    for (std::size_t m = 0; m < 3; ++m) d.factors[m] = leading_left_vectors(mode_unfold(t, m), ranks[m]);
    d.core = project_core(t, d.factors);
    return d;
}

Tensor<double> reconstruct(const TuckerDecomp& d) {
    if (d.core.ndim() != 3) throw DimensionError("reconstruct: core must be 3-way");
    for (std::size_t m = 0; m < 3; ++m) {
        if (d.factors[m].cols != d.core.dim(m)) {
            throw DimensionError("reconstruct: factor " + std::to_string(m) + " has " +
                                 std::to_string(d.factors[m].cols) + " columns, core extent is " +
                                 std::to_string(d.core.dim(m)));
        }
    }
    Tensor<double> t = d.core;
    for (std::size_t m = 0; m < 3; ++m) t = mode_product(t, d.factors[m], m);
    return t;
}

double frobenius_norm(const Tensor<double>& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s);
}

double relative_error(const Tensor<double>& t, const TuckerDecomp& d) {
    const double nt = frobenius_norm(t);
    if (nt == 0.0) return 0.0;
    return frobenius_norm(t - reconstruct(d)) / nt;
}

HooiTrace hooi_trace(const Tensor<double>& t, const TuckerConfig& cfg) {
    const Ranks ranks = resolve_ranks(t.shape(), cfg);
    HooiTrace trace;
    trace.decomp = hosvd(t, ranks);
    trace.errors.push_back(relative_error(t, trace.decomp));

    auto& f = trace.decomp.factors;
    for (int it = 0; it < cfg.max_iter; ++it) {
        for (std::size_t m = 0; m < 3; ++m) {
            Tensor<double> y = t;
            for (std::size_t o = 0; o < 3; ++o) {
                if (o != m) y = mode_product(y, f[o].transposed(), o);
            }
            f[m] = leading_left_vectors(mode_unfold(y, m), ranks[m]);
        }
        trace.decomp.core = project_core(t, f);
        trace.errors.push_back(relative_error(t, trace.decomp));
        trace.iterations = it + 1;
        const double improvement = trace.errors[trace.errors.size() - 2] - trace.errors.back();
        if (improvement < cfg.tol) break;
    }
    return trace;
}

TuckerDecomp hooi(const Tensor<double>& t, const TuckerConfig& cfg) {
    return hooi_trace(t, cfg).decomp;
}

template <typename T>
Tensor<T> tucker_denoise(const Tensor<T>& feature_hwc, const TuckerConfig& cfg) {
    check_three_way(feature_hwc.shape(), "tucker_denoise");
    const Tensor<double> t = feature_hwc.template cast<double>();
    return reconstruct(hooi(t, cfg)).template cast<T>();
}

template <typename T>
Tensor<T> nchw_to_hwc(const Tensor<T>& img) {
    check_nchw(img.shape(), "nchw_to_hwc");
    if (img.dim(0) != 1) throw DimensionError("nchw_to_hwc: batch must be 1");
    const std::size_t C = img.dim(1), H = img.dim(2), W = img.dim(3);
    Tensor<T> out({H, W, C});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) out[(y * W + x) * C + c] = img.at(0, c, y, x);
    return out;
}

template <typename T>
Tensor<T> hwc_to_nchw(const Tensor<T>& t) {
    check_three_way(t.shape(), "hwc_to_nchw");
    const std::size_t H = t.dim(0), W = t.dim(1), C = t.dim(2);
    Tensor<T> out({1, C, H, W});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) out.at(0, c, y, x) = t[(y * W + x) * C + c];
    return out;
}

template <typename T>
Tensor<T> tucker_denoise_image(const Tensor<T>& img, const TuckerConfig& cfg) {
    return hwc_to_nchw(tucker_denoise(nchw_to_hwc(img), cfg));
}

#define LPDH_INSTANTIATE(T)                                                     \
    template Tensor<T> tucker_denoise(const Tensor<T>&, const TuckerConfig&);   \
    template Tensor<T> nchw_to_hwc(const Tensor<T>&);                           \
    template Tensor<T> hwc_to_nchw(const Tensor<T>&);                           \
    template Tensor<T> tucker_denoise_image(const Tensor<T>&, const TuckerConfig&);

LPDH_INSTANTIATE(float)
LPDH_INSTANTIATE(double)

} // namespace lpdh
