#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <unistd.h>

#include "lpdh/autodiff.hpp"
#include "lpdh/random.hpp"
#include "lpdh/tensor.hpp"

namespace lpdh::test {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Xoshiro256& rng, double lo = 0.0, double hi = 1.0) {
    Tensor<T> t(shape);
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        Xoshiro256 rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(::getpid()));
        path_ = std::filesystem::temp_directory_path() / ("lpdh_" + tag + "_" + std::to_string(rng() % 1000000007));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path_.string(); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline constexpr double kFdStep = 1e-3;
inline constexpr double kFdTolerance = 1e-3;

// |a - n| / max(|a|, |n|, floor): relative error, with an absolute floor so
// that gradients that are zero up to rounding do not blow up the ratio.
inline double grad_rel_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
    double max_rel_error = 0;
    std::size_t checked = 0;
};

// Compares backward() against central differences for every input Var of a
// scalar function. At most `max_coords` coordinates per input are perturbed
// (evenly strided).
// Networks with piecewise-linear activations: a step can straddle a kink,
// while a tiny step loses digits to rounding. Each coordinate then takes its
// best agreement over a short ladder of steps.
inline constexpr double kFdLadder[] = {1e-3, 1e-4, 1e-5, 1e-6};

inline GradCheckResult grad_check(const std::function<Var<double>(const std::vector<Var<double>>&)>& f,
                                  std::vector<Var<double>> inputs, std::size_t max_coords,
                                  std::span<const double> steps, double floor = 1e-6) {
    for (auto& v : inputs) v.set_requires_grad(true);
    backward(f(inputs));
    std::vector<Tensor<double>> analytic;
    for (const auto& v : inputs) analytic.push_back(v.has_grad() ? v.grad() : Tensor<double>::zeros(v.shape()));
    for (auto& v : inputs) {
        v.zero_grad();
        v.set_requires_grad(false);
    }

    GradCheckResult res;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        Tensor<double>& x = inputs[i].mutable_value();
        const std::size_t n = x.numel();
        const std::size_t stride = std::max<std::size_t>(1, n / max_coords);
        for (std::size_t k = 0; k < n; k += stride) {
            const double orig = x[k];
            double best = std::numeric_limits<double>::infinity();
            for (double step : steps) {
                x[k] = orig + step;
                const double up = f(inputs).value()[0];
                x[k] = orig - step;
                const double down = f(inputs).value()[0];
                x[k] = orig;
                best = std::min(best, grad_rel_error(analytic[i][k], (up - down) / (2 * step), floor));
            }
            res.max_rel_error = std::max(res.max_rel_error, best);
            ++res.checked;
        }
    }
    return res;
}

inline GradCheckResult grad_check(const std::function<Var<double>(const std::vector<Var<double>>&)>& f,
                                  std::vector<Var<double>> inputs, std::size_t max_coords = 64,
                                  double step = kFdStep, double floor = 1e-6) {
    const double one[] = {step};
    return grad_check(f, std::move(inputs), max_coords, one, floor);
}

// Scalar probe: sum(w * y) with fixed random weights, so every output element
// contributes a distinct gradient.
inline Var<double> probe(const Var<double>& y, std::uint64_t seed) {
    Xoshiro256 rng(seed * 7919 + 17);
    Var<double> w(random_tensor<double>(y.shape(), rng, -1.0, 1.0), false);
    return sum(mul(y, w));
}

} // namespace lpdh::test
