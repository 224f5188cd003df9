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
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "satl/errors.hpp"

namespace satl {

/// Rows are points, columns are coordinates.
using Points = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// k(x, y) = exp(-|x - y|^2 / (2 l^2)) with a fixed bandwidth l.
class GaussianKernel {
public:
    explicit GaussianKernel(double bandwidth = 0.2) : bandwidth_(bandwidth) {
        detail::require(std::isfinite(bandwidth) && bandwidth > 0.0, "GaussianKernel: bandwidth must be positive and finite");
        inv_two_l2_ = 0.5 / (bandwidth * bandwidth);
    }

    [[nodiscard]] double bandwidth() const noexcept { return bandwidth_; }

    [[nodiscard]] double from_squared_distance(double r2) const noexcept { return std::exp(-r2 * inv_two_l2_); }

    [[nodiscard]] double operator()(const Eigen::Ref<const Eigen::RowVectorXd> &x,
                                    const Eigen::Ref<const Eigen::RowVectorXd> &y) const {
        detail::require(x.size() == y.size(), "GaussianKernel: dimension mismatch");
        return from_squared_distance((x - y).squaredNorm());
    }

    bool operator==(const GaussianKernel &) const = default;

private:
    double bandwidth_;
    double inv_two_l2_;
};

/// Isotropic Matern kernel with smoothness nu and range rho:
///   k(r) = 2^{1-nu} / Gamma(nu) * z^nu * K_nu(z),  z = sqrt(2 nu) r / rho.
/// Its RKHS is norm-equivalent to the Sobolev space of order nu + d/2.
class MaternKernel {
public:
    MaternKernel(double nu, double range) : nu_(nu), range_(range) {
        detail::require(std::isfinite(nu) && nu > 0.0, "MaternKernel: nu must be positive");
        detail::require(std::isfinite(range) && range > 0.0, "MaternKernel: range must be positive");
        scale_ = std::sqrt(2.0 * nu) / range;
        log_norm_ = (1.0 - nu) * std::log(2.0) - std::lgamma(nu);
    }

    [[nodiscard]] double nu() const noexcept { return nu_; }
    [[nodiscard]] double range() const noexcept { return range_; }

    /// Value at distance r; half-integer orders up to 5/2 use their closed forms.
    [[nodiscard]] double at_distance(double r) const {
        detail::require(r >= 0.0 && std::isfinite(r), "MaternKernel: distance must be finite and nonnegative");
        if (r == 0.0) { return 1.0; }
        const double z = scale_ * r;
        if (nu_ == 0.5) { return std::exp(-z); }
        if (nu_ == 1.5) { return (1.0 + z) * std::exp(-z); }
        if (nu_ == 2.5) { return (1.0 + z + z * z / 3.0) * std::exp(-z); }
        return bessel_form(z);
    }

    /// General Bessel-function path, valid for every nu (used to cross-check the closed forms).
    [[nodiscard]] double at_distance_bessel(double r) const {
        detail::require(r >= 0.0 && std::isfinite(r), "MaternKernel: distance must be finite and nonnegative");
        if (r == 0.0) { return 1.0; }
        return bessel_form(scale_ * r);
    }

    [[nodiscard]] double from_squared_distance(double r2) const { return at_distance(std::sqrt(r2)); }

    [[nodiscard]] double operator()(const Eigen::Ref<const Eigen::RowVectorXd> &x,
                                    const Eigen::Ref<const Eigen::RowVectorXd> &y) const {
        detail::require(x.size() == y.size(), "MaternKernel: dimension mismatch");
        return at_distance((x - y).norm());
    }

    bool operator==(const MaternKernel &o) const noexcept { return nu_ == o.nu_ && range_ == o.range_; }

private:
    [[nodiscard]] double bessel_form(double z) const {
        // K_nu underflows long before this; the product is below the smallest normal.
        if (z > 700.0) { return 0.0; }
        const double v = std::exp(log_norm_ + nu_ * std::log(z)) * std::cyl_bessel_k(nu_, z);
        return std::min(v, 1.0);
    }

    double nu_;
    double range_;
    double scale_;
    double log_norm_;
};

using KernelSpec = std::variant<GaussianKernel, MaternKernel>;

inline double eval_gaussian(const GaussianKernel &k, const Eigen::Ref<const Eigen::RowVectorXd> &x,
                            const Eigen::Ref<const Eigen::RowVectorXd> &y) {
    return k(x, y);
}

inline double eval_matern(const MaternKernel &k, double r) { return k.at_distance(r); }

inline std::string describe(const KernelSpec &spec) {
    std::ostringstream os;
    std::visit(
        [&](const auto &k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, GaussianKernel>) {
                os << "gaussian(bandwidth=" << k.bandwidth() << ")";
            } else {
                os << "matern(nu=" << k.nu() << ", range=" << k.range() << ")";
            }
        },
        spec);
    return os.str();
}

/// Escalating diagonal jitter tried when a Cholesky factorization fails.
struct JitterPolicy {
    std::vector<double> ladder{0.0, 1e-12, 1e-10, 1e-8};
};

/// FNV-1a over the sorted bit patterns of the rows, identifying a point multiset.
inline std::uint64_t points_hash(const Points &pts) {
    std::vector<std::vector<std::uint64_t>> rows(static_cast<std::size_t>(pts.rows()));
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        for (Eigen::Index j = 0; j < pts.cols(); ++j) { rows[i].push_back(std::bit_cast<std::uint64_t>(pts(i, j))); }
    }
    std::sort(rows.begin(), rows.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto &r : rows) {
        for (auto w : r) {
            for (int b = 0; b < 8; ++b) {
                h ^= (w >> (8 * b)) & 0xffU;
                h *= 0x100000001b3ULL;
            }
        }
    }
    return h;
}

struct CholeskyResult {
    Eigen::LLT<Matrix> llt;
    double jitter = 0.0;
};

/// Factorizes `a` (plus diagonal jitter from the ladder) until LLT succeeds.
inline CholeskyResult cholesky_with_jitter(const Matrix &a, const JitterPolicy &policy, const Points *points = nullptr) {
    detail::require(a.rows() == a.cols(), "cholesky_with_jitter: matrix must be square");
    CholeskyResult out;
    double last = 0.0;
    for (double jitter : policy.ladder) {
        last = jitter;
        if (jitter == 0.0) {
            out.llt.compute(a);
        } else {
            Matrix shifted = a;
            shifted.diagonal().array() += jitter;
            out.llt.compute(shifted);
        }
        if (out.llt.info() == Eigen::Success) {
            out.jitter = jitter;
            return out;
        }
    }
    const std::uint64_t hash = points != nullptr ? points_hash(*points) : 0;
    std::ostringstream os;
    os << "Cholesky failed at maximum jitter " << last << " (n=" << a.rows() << ", diag range ["
       << a.diagonal().minCoeff() << ", " << a.diagonal().maxCoeff() << "], points hash " << std::hex << hash << ")";
    throw NumericalError(os.str(), hash, last);
}

namespace detail {

template <typename K>
Matrix gram_impl(const K &k, const Points &pts) {
    const Eigen::Index n = pts.rows();
    Matrix g(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        g(j, j) = 1.0;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            g(i, j) = k.from_squared_distance((pts.row(i) - pts.row(j)).squaredNorm());
        }
    }
    g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
    return g;
}

template <typename K>
Matrix cross_gram_impl(const K &k, const Points &a, const Points &b) {
    Matrix g(a.rows(), b.rows());
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            g(i, j) = k.from_squared_distance((a.row(i) - b.row(j)).squaredNorm());
        }
    }
    return g;
}

}  // namespace detail

/// Symmetric kernel matrix of a point set without any factorization.
inline Matrix gram_matrix(const KernelSpec &kernel, const Points &pts) {
    detail::require(pts.rows() >= 1, "gram: need at least one point");
    detail::require(pts.allFinite(), "gram: points must be finite");
    return std::visit([&](const auto &k) { return detail::gram_impl(k, pts); }, kernel);
}

/// k(a_i, b_j) for every pair; rows follow `a`.
inline Matrix cross_gram(const KernelSpec &kernel, const Points &a, const Points &b) {
    detail::require(a.cols() == b.cols(), "cross_gram: dimension mismatch");
    return std::visit([&](const auto &k) { return detail::cross_gram_impl(k, a, b); }, kernel);
}

struct GramMatrix {
    Matrix values;                 // without jitter
    double jitter = 0.0;           // diagonal shift that made the factorization succeed
    Eigen::LLT<Matrix> cholesky;   // factor of values + jitter * I
};

/// Gram matrix plus a successful Cholesky factor, escalating jitter as needed.
inline GramMatrix gram(const KernelSpec &kernel, const Points &pts, const JitterPolicy &policy = {}) {
    GramMatrix out;
    out.values = gram_matrix(kernel, pts);
    auto chol = cholesky_with_jitter(out.values, policy, &pts);
    out.jitter = chol.jitter;
    out.cholesky = std::move(chol.llt);
    return out;
}

}  // namespace satl
