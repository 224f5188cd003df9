/*
 * Copyright 2026 The satl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "satl/errors.hpp"
#include "satl/kernels.hpp"
#include "satl/rng.hpp"

namespace satl {

/// Natural cubic spline through (grid, values). Grid must be strictly increasing.
class CubicSpline {
public:
    CubicSpline() = default;

    CubicSpline(std::vector<double> grid, std::vector<double> values) : x_(std::move(grid)), y_(std::move(values)) {
        const std::size_t n = x_.size();
        detail::require(n >= 2 && y_.size() == n, "CubicSpline: need at least two nodes with matching values");
        for (std::size_t i = 1; i < n; ++i) {
            detail::require(x_[i] > x_[i - 1], "CubicSpline: grid must be strictly increasing");
        }
        m_.assign(n, 0.0);
        if (n == 2) { return; }
        // Thomas algorithm on the interior second-derivative system; m_0 = m_{n-1} = 0.
        const std::size_t k = n - 2;
        std::vector<double> diag(k), upper(k), rhs(k);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = x_[i] - x_[i - 1];
            const double h1 = x_[i + 1] - x_[i];
            diag[i - 1] = 2.0 * (h0 + h1);
            upper[i - 1] = h1;
            rhs[i - 1] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
        }
        for (std::size_t i = 1; i < k; ++i) {
            const double lower = x_[i + 1] - x_[i];  // h_{i} couples row i to row i-1
            const double w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        m_[k] = rhs[k - 1] / diag[k - 1];
        for (std::size_t i = k - 1; i >= 1; --i) { m_[i] = (rhs[i - 1] - upper[i - 1] * m_[i + 1]) / diag[i - 1]; }
    }

    [[nodiscard]] double operator()(double x) const {
        if (!(x >= x_.front() && x <= x_.back())) {
            throw ContractError("CubicSpline: query " + std::to_string(x) + " outside the grid hull (extrapolation)");
        }
        auto it = std::upper_bound(x_.begin(), x_.end(), x);
        std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
        if (i >= x_.size() - 1) { i = x_.size() - 2; }
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - x) / h;
        const double b = (x - x_[i]) / h;
        if (b == 0.0) { return y_[i]; }
        if (a == 0.0) { return y_[i + 1]; }
        return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * (h * h) / 6.0;
    }

    [[nodiscard]] const std::vector<double> &grid() const noexcept { return x_; }
    [[nodiscard]] const std::vector<double> &values() const noexcept { return y_; }

private:
    std::vector<double> x_, y_, m_;
};

inline std::vector<double> uniform_grid(std::size_t size) {
    detail::require(size >= 2, "uniform_grid: need at least two points");
    std::vector<double> g(size);
    for (std::size_t i = 0; i < size; ++i) { g[i] = static_cast<double>(i) / static_cast<double>(size - 1); }
    g.back() = 1.0;
    return g;
}

/// A ground-truth function materialized on a grid of [0,1] and evaluated by natural cubic spline.
struct SampledFunction {
    CubicSpline spline;
    std::uint64_t seed = 0;
    MaternKernel generator{1.0, 1.0};
    std::string interpolation = "natural_cubic_spline";

    [[nodiscard]] double operator()(double x) const { return spline(x); }
    [[nodiscard]] const std::vector<double> &grid() const noexcept { return spline.grid(); }
    [[nodiscard]] const std::vector<double> &values() const noexcept { return spline.values(); }
};

inline double evaluate(const SampledFunction &f, double x) { return f(x); }

namespace detail {

/// Lower Cholesky factors of Matern Gram matrices on uniform grids, shared across trials.
class GridFactorCache {
public:
    static GridFactorCache &instance() {
        static GridFactorCache cache;
        return cache;
    }

    std::shared_ptr<const Matrix> get(const MaternKernel &k, std::size_t grid_size, double *jitter_out = nullptr) {
        const auto key = std::make_tuple(k.nu(), k.range(), grid_size);
        std::lock_guard lock(mutex_);
        auto it = entries_.find(key);
        if (it == entries_.end()) {
            const auto g = uniform_grid(grid_size);
            Points pts = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
            GramMatrix gm = gram(KernelSpec{k}, pts);
            Entry e{std::make_shared<const Matrix>(gm.cholesky.matrixL()), gm.jitter};
            it = entries_.emplace(key, std::move(e)).first;
        }
        if (jitter_out != nullptr) { *jitter_out = it->second.jitter; }
        return it->second.factor;
    }

private:
    struct Entry {
        std::shared_ptr<const Matrix> factor;
        double jitter;
    };
    std::mutex mutex_;
    std::map<std::tuple<double, double, std::size_t>, Entry> entries_;
};

inline Vector standard_normals(std::uint64_t seed, std::size_t n) {
    Engine eng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector z(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < z.size(); ++i) { z(i) = normal(eng); }
    return z;
}

}  // namespace detail

/// Diagonal jitter the cached grid factor needed (0 if none).
inline double gp_grid_jitter(const MaternKernel &kernel, std::size_t grid_size) {
    double jitter = 0.0;
    detail::GridFactorCache::instance().get(kernel, grid_size, &jitter);
    return jitter;
}

/// Draws a zero-mean GP path with Matern covariance on a uniform grid of [0,1].
inline SampledFunction sample_gp(const MaternKernel &kernel, std::size_t grid_size, std::uint64_t seed) {
    detail::require(grid_size >= 2, "sample_gp: grid_size must be at least 2");
    auto factor = detail::GridFactorCache::instance().get(kernel, grid_size);
    const Vector z = detail::standard_normals(seed, grid_size);
    const Vector v = factor->triangularView<Eigen::Lower>() * z;
    SampledFunction f;
    f.spline = CubicSpline(uniform_grid(grid_size), std::vector<double>(v.data(), v.data() + v.size()));
    f.seed = seed;
    f.generator = kernel;
    return f;
}

/// Values of the path sample_gp(kernel, grid_size, seed) at selected grid indices only.
inline std::vector<double> sample_gp_at(const MaternKernel &kernel, std::size_t grid_size, std::uint64_t seed,
                                        std::span<const std::size_t> indices) {
    auto factor = detail::GridFactorCache::instance().get(kernel, grid_size);
    const std::size_t max_index = indices.empty() ? 0 : *std::max_element(indices.begin(), indices.end());
    detail::require(max_index < grid_size, "sample_gp_at: index out of range");
    const Vector z = detail::standard_normals(seed, max_index + 1);
    std::vector<double> out;
    out.reserve(indices.size());
    for (auto i : indices) {
        const auto n = static_cast<Eigen::Index>(i) + 1;
        out.push_back(factor->row(static_cast<Eigen::Index>(i)).head(n).dot(z.head(n)));
    }
    return out;
}

enum class Domain { target, source };

inline const char *to_string(Domain d) { return d == Domain::target ? "target" : "source"; }

struct Dataset {
    Points x;
    Vector y;
    Domain domain = Domain::target;
    double sigma = 0.0;
    std::uint64_t seed = 0;

    [[nodiscard]] Eigen::Index size() const noexcept { return y.size(); }
    [[nodiscard]] Eigen::Index dim() const noexcept { return x.cols(); }

    void validate() const {
        detail::require(x.rows() == y.size() && y.size() >= 1, "Dataset: need n >= 1 matching covariates and responses");
        detail::require(x.allFinite() && y.allFinite(), "Dataset: values must be finite");
    }

    /// Rows [begin, begin + count).
    [[nodiscard]] Dataset slice(Eigen::Index begin, Eigen::Index count) const {
        Dataset d = *this;
        d.x = x.middleRows(begin, count);
        d.y = y.segment(begin, count);
        return d;
    }

    [[nodiscard]] Dataset with_responses(Vector responses) const {
        Dataset d = *this;
        d.y = std::move(responses);
        return d;
    }
};

/// x_i ~ U[0,1], y_i = f(x_i) + sigma * eps_i. Covariates and noise use separate substreams of `seed`,
/// so growing n extends both sequences without changing their prefixes.
template <typename F>
Dataset make_dataset(const F &f, Eigen::Index n, double sigma, std::uint64_t seed, Domain domain) {
    detail::require(n >= 1, "make_dataset: n must be >= 1");
    detail::require(sigma >= 0.0 && std::isfinite(sigma), "make_dataset: sigma must be >= 0");
    Engine cov_eng(seeds::derive(seed, {seeds::kCovariates}));
    Engine noise_eng(seeds::derive(seed, {seeds::kNoise}));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset d;
    d.x.resize(n, 1);
    d.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) { d.x(i, 0) = unif(cov_eng); }
    for (Eigen::Index i = 0; i < n; ++i) { d.y(i) = f(d.x(i, 0)) + sigma * normal(noise_eng); }
    d.domain = domain;
    d.sigma = sigma;
    d.seed = seed;
    return d;
}

/// Trapezoid-rule L2 norm of grid values over the grid's span.
inline double grid_l2_norm(const std::vector<double> &grid, const std::vector<double> &values) {
    double acc = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        acc += 0.5 * (grid[i] - grid[i - 1]) * (values[i] * values[i] + values[i - 1] * values[i - 1]);
    }
    return std::sqrt(acc);
}

/// Target path f_T, unit-norm offset path, and the source f_S = f_T + h * offset.
struct TransferScenario {
    SampledFunction target;
    SampledFunction offset;      // normalized to grid L2 norm 1 (unless identically zero)
    SampledFunction source;
    double h = 0.0;
    double offset_raw_norm = 0.0;
    double nu_target = 0.0;
    double nu_offset = 0.0;
};

inline TransferScenario make_transfer_scenario(double nu_target, double nu_offset, double h, double range,
                                               std::size_t grid_size, std::uint64_t target_seed,
                                               std::uint64_t offset_seed) {
    detail::require(h >= 0.0 && std::isfinite(h), "make_transfer_scenario: h must be >= 0");
    TransferScenario s;
    s.h = h;
    s.nu_target = nu_target;
    s.nu_offset = nu_offset;
    s.target = sample_gp(MaternKernel(nu_target, range), grid_size, target_seed);
    SampledFunction raw = sample_gp(MaternKernel(nu_offset, range), grid_size, offset_seed);
    s.offset_raw_norm = grid_l2_norm(raw.grid(), raw.values());
    std::vector<double> unit = raw.values();
    if (s.offset_raw_norm > 0.0) {
        for (auto &v : unit) { v /= s.offset_raw_norm; }
    }
    const auto &grid = s.target.grid();
    std::vector<double> src(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) { src[i] = s.target.values()[i] + h * unit[i]; }
    s.offset = raw;
    s.offset.spline = CubicSpline(grid, std::move(unit));
    s.source = s.target;
    s.source.spline = CubicSpline(grid, std::move(src));
    s.source.seed = offset_seed;
    return s;
}

}  // namespace satl
