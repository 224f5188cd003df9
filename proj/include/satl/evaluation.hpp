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

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "satl/errors.hpp"
#include "satl/kernels.hpp"

namespace satl {

inline constexpr int kDefaultQuadraturePoints = 1025;

/// Composite Simpson weights on a uniform odd-sized grid of [a, b].
inline std::vector<double> simpson_weights(int points, double a = 0.0, double b = 1.0) {
    detail::require(points >= 3 && points % 2 == 1, "simpson: grid_points must be odd and >= 3");
    const double h = (b - a) / (points - 1);
    std::vector<double> w(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        w[i] = (i == 0 || i == points - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        w[i] *= h / 3.0;
    }
    return w;
}

inline Points quadrature_nodes(int points, double a = 0.0, double b = 1.0) {
    Points x(points, 1);
    for (int i = 0; i < points; ++i) { x(i, 0) = a + (b - a) * static_cast<double>(i) / (points - 1); }
    x(points - 1, 0) = b;
    return x;
}

namespace detail {

template <typename F>
Vector values_on(const F &f, const Points &nodes) {
    if constexpr (requires { { f.predict(nodes) } -> std::convertible_to<Vector>; }) {
        return f.predict(nodes);
    } else {
        Vector v(nodes.rows());
        for (Eigen::Index i = 0; i < nodes.rows(); ++i) { v(i) = f(nodes(i, 0)); }
        return v;
    }
}

}  // namespace detail

/// Simpson quadrature of g over [0,1].
template <typename G>
double simpson_integral(const G &g, int points = kDefaultQuadraturePoints) {
    const auto w = simpson_weights(points);
    const Points nodes = quadrature_nodes(points);
    const Vector v = detail::values_on(g, nodes);
    double acc = 0.0;
    for (int i = 0; i < points; ++i) { acc += w[i] * v(i); }
    return acc;
}

struct ErrorReport {
    double l2 = 0.0;          // |f_hat - f|_{L2[0,1]}
    double squared = 0.0;     // |f_hat - f|^2
    int grid_points = 0;
    std::uint64_t seed = 0;
    std::string method;
    std::map<std::string, double> setting;  // n, nu, h, ...
};

/// L2 distance between two functions on [0,1] by composite Simpson; both are
/// evaluated at the nodes (batched when the callable offers predict(Points)).
template <typename Fhat, typename F>
ErrorReport simpson_l2_error(const Fhat &estimate, const F &truth, int grid_points = kDefaultQuadraturePoints) {
    const auto w = simpson_weights(grid_points);
    const Points nodes = quadrature_nodes(grid_points);
    const Vector diff = detail::values_on(estimate, nodes) - detail::values_on(truth, nodes);
    double acc = 0.0;
    for (int i = 0; i < grid_points; ++i) { acc += w[i] * diff(i) * diff(i); }
    ErrorReport r;
    r.squared = acc;
    r.l2 = std::sqrt(acc);
    r.grid_points = grid_points;
    return r;
}

/// xi(h, f_S) = h^2 / |f_S|^2 with an L2 proxy for the source norm.
inline double xi_factor(double h, double source_norm_proxy) {
    detail::require(h >= 0.0, "xi_factor: h must be >= 0");
    if (!(source_norm_proxy > 0.0)) { throw ContractError("xi_factor: source norm proxy must be positive"); }
    return (h * h) / (source_norm_proxy * source_norm_proxy);
}

enum class RateAbscissa { log_n, log_n_over_log_n };

inline const char *to_string(RateAbscissa a) { return a == RateAbscissa::log_n ? "log_n" : "log_n_over_log_n"; }

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    RateAbscissa abscissa = RateAbscissa::log_n;
    std::vector<std::pair<double, double>> points;  // (abscissa, log error)
    double theoretical_slope = 0.0;
};

inline double theoretical_slope(double alpha, int dim = 1) { return -2.0 * alpha / (2.0 * alpha + dim); }

/// OLS of log(error) on log(n) or log(n / log n).
inline RateFit fit_rate(const std::vector<std::pair<double, double>> &n_and_error, RateAbscissa abscissa = RateAbscissa::log_n) {
    detail::require(n_and_error.size() >= 2, "fit_rate: need at least two (n, error) pairs");
    RateFit r;
    r.abscissa = abscissa;
    for (auto [n, e] : n_and_error) {
        if (!(e > 0.0) || !std::isfinite(e)) { throw ContractError("fit_rate: errors must be positive and finite"); }
        detail::require(n > (abscissa == RateAbscissa::log_n ? 0.0 : 1.0), "fit_rate: sample sizes out of range");
        const double x = abscissa == RateAbscissa::log_n ? std::log(n) : std::log(n / std::log(n));
        r.points.emplace_back(x, std::log(e));
    }
    const double m = static_cast<double>(r.points.size());
    double sx = 0, sy = 0;
    for (auto [x, y] : r.points) { sx += x; sy += y; }
    const double mx = sx / m, my = sy / m;
    double sxx = 0, sxy = 0, syy = 0;
    for (auto [x, y] : r.points) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    detail::require(sxx > 0.0, "fit_rate: sample sizes must not all coincide");
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double sse = 0;
    for (auto [x, y] : r.points) {
        const double e = y - (r.intercept + r.slope * x);
        sse += e * e;
    }
    r.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    return r;
}

struct Summary {
    std::size_t count = 0;
    double mean = 0.0, sd = 0.0, se = 0.0;
};

inline Summary summarize(const std::vector<double> &v) {
    Summary s;
    s.count = v.size();
    if (v.empty()) { return s; }
    double acc = 0;
    for (double x : v) { acc += x; }
    s.mean = acc / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0;
        for (double x : v) { ss += (x - s.mean) * (x - s.mean); }
        s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
        s.se = s.sd / std::sqrt(static_cast<double>(v.size()));
    }
    return s;
}

struct TrialSummary {
    std::string method;
    std::map<std::string, double> setting;
    Summary l2;
    Summary squared;
};

/// Groups reports by (method, setting) and summarizes both error columns.
inline std::vector<TrialSummary> aggregate_trials(const std::vector<ErrorReport> &records) {
    std::map<std::pair<std::string, std::map<std::string, double>>, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto &r : records) {
        auto &g = groups[{r.method, r.setting}];
        g.first.push_back(r.l2);
        g.second.push_back(r.squared);
    }
    std::vector<TrialSummary> out;
    for (const auto &[key, vals] : groups) {
        out.push_back({key.first, key.second, summarize(vals.first), summarize(vals.second)});
    }
    return out;
}

}  // namespace satl
