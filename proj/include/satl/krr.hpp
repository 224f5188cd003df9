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
#include <limits>
#include <string>

#include "satl/errors.hpp"
#include "satl/gp.hpp"
#include "satl/kernels.hpp"

namespace satl {

enum class ScheduleKind { gaussian_exponential, matern_polynomial, fixed };

inline const char *to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::gaussian_exponential: return "gaussian_exponential";
        case ScheduleKind::matern_polynomial: return "matern_polynomial";
        case ScheduleKind::fixed: return "fixed";
    }
    return "?";
}

/// Regularization schedule lambda(n).
///  - gaussian_exponential: exp(-C n^{2/(2 alpha + d)})
///  - matern_polynomial:    C n^{-2 alpha' / (2 alpha + d)}, alpha' = imposed smoothness
///  - fixed:                C
struct RegSchedule {
    ScheduleKind kind = ScheduleKind::gaussian_exponential;
    double C = 1.0;
    double smoothness = 2.0;          // alpha (true / candidate smoothness)
    double imposed_smoothness = 2.0;  // alpha', matern_polynomial only
    int dim = 1;
};

struct ScheduledLambda {
    double value;
    bool underflow = false;
};

inline ScheduledLambda schedule_lambda_checked(const RegSchedule &s, long long n) {
    detail::require(n >= 1, "schedule_lambda: n must be >= 1");
    detail::require(s.C > 0.0 && std::isfinite(s.C), "schedule_lambda: C must be positive");
    const double nd = static_cast<double>(n);
    switch (s.kind) {
        case ScheduleKind::gaussian_exponential: {
            detail::require(s.smoothness > 0.0 && s.dim >= 1, "schedule_lambda: smoothness and dim must be positive");
            const double arg = s.C * std::pow(nd, 2.0 / (2.0 * s.smoothness + s.dim));
            if (arg > 700.0) { return {std::numeric_limits<double>::min(), true}; }
            return {std::exp(-arg), false};
        }
        case ScheduleKind::matern_polynomial: {
            detail::require(s.smoothness > 0.0 && s.imposed_smoothness > 0.0, "schedule_lambda: smoothness must be positive");
            return {s.C * std::pow(nd, -2.0 * s.imposed_smoothness / (2.0 * s.smoothness + s.dim)), false};
        }
        case ScheduleKind::fixed: return {s.C, false};
    }
    return {s.C, false};
}

inline double schedule_lambda(const RegSchedule &s, long long n) { return schedule_lambda_checked(s, n).value; }

/// Immutable kernel ridge regression predictor f(x) = sum_i alpha_i k(x, x_i).
class FittedKrr {
public:
    FittedKrr(KernelSpec kernel, Points x, Vector coef, double lambda, double jitter = 0.0, bool underflow = false)
        : kernel_(std::move(kernel)), x_(std::move(x)), coef_(std::move(coef)), lambda_(lambda), jitter_(jitter),
          lambda_underflow_(underflow) {
        detail::require(x_.rows() == coef_.size(), "FittedKrr: coefficient count must match training points");
    }

    /// The identically-zero model over the given training points.
    static FittedKrr zero(KernelSpec kernel, Points x) {
        Vector c = Vector::Zero(x.rows());
        return {std::move(kernel), std::move(x), std::move(c), 0.0};
    }

    [[nodiscard]] double predict_point(const Eigen::Ref<const Eigen::RowVectorXd> &pt) const {
        detail::require(pt.size() == x_.cols(), "predict: dimension mismatch");
        return std::visit(
            [&](const auto &k) {
                double acc = 0.0;
                for (Eigen::Index i = 0; i < x_.rows(); ++i) {
                    acc += coef_(i) * k.from_squared_distance((x_.row(i) - pt).squaredNorm());
                }
                return acc;
            },
            kernel_);
    }

    [[nodiscard]] double predict(double x) const {
        Eigen::RowVectorXd p(1);
        p(0) = x;
        return predict_point(p);
    }

    [[nodiscard]] Vector predict(const Points &pts) const {
        detail::require(pts.cols() == x_.cols(), "predict: dimension mismatch");
        return cross_gram(kernel_, pts, x_) * coef_;
    }

    [[nodiscard]] double operator()(double x) const { return predict(x); }

    [[nodiscard]] const KernelSpec &kernel() const noexcept { return kernel_; }
    [[nodiscard]] const Points &training_points() const noexcept { return x_; }
    [[nodiscard]] const Vector &coefficients() const noexcept { return coef_; }
    [[nodiscard]] double lambda() const noexcept { return lambda_; }
    [[nodiscard]] double jitter() const noexcept { return jitter_; }
    [[nodiscard]] bool lambda_underflow() const noexcept { return lambda_underflow_; }
    [[nodiscard]] Eigen::Index size() const noexcept { return x_.rows(); }

private:
    KernelSpec kernel_;
    Points x_;
    Vector coef_;
    double lambda_;
    double jitter_;
    bool lambda_underflow_;
};

/// Same as fit() but with the training Gram matrix supplied (reused across lambdas).
inline FittedKrr fit_from_gram(const KernelSpec &kernel, const Dataset &data, const Matrix &gram, double lambda,
                               const JitterPolicy &policy = {}, bool lambda_underflow = false) {
    data.validate();
    detail::require(lambda >= 0.0 && std::isfinite(lambda), "fit: lambda must be finite and >= 0");
    const auto n = data.size();
    detail::require(gram.rows() == n && gram.cols() == n, "fit: Gram size does not match the data");
    Matrix a = gram;
    a.diagonal().array() += static_cast<double>(n) * lambda;
    auto chol = cholesky_with_jitter(a, policy, &data.x);
    Vector coef = chol.llt.solve(data.y);
    if (!coef.allFinite()) {
        throw NumericalError("fit: non-finite coefficients (n=" + std::to_string(n) + ", lambda=" + std::to_string(lambda) + ")");
    }
    return {kernel, data.x, std::move(coef), lambda, chol.jitter, lambda_underflow};
}

/// Minimizer of (1/n) sum (y_i - f(x_i))^2 + lambda |f|_H^2: alpha = (G + n lambda I)^{-1} y.
inline FittedKrr fit(const KernelSpec &kernel, const Dataset &data, double lambda, const JitterPolicy &policy = {},
                     bool lambda_underflow = false) {
    data.validate();
    return fit_from_gram(kernel, data, gram_matrix(kernel, data.x), lambda, policy, lambda_underflow);
}

inline FittedKrr fit(const KernelSpec &kernel, const Dataset &data, const RegSchedule &schedule,
                     const JitterPolicy &policy = {}) {
    const auto lam = schedule_lambda_checked(schedule, data.size());
    return fit(kernel, data, lam.value, policy, lam.underflow);
}

inline Vector predict(const FittedKrr &m, const Points &x) { return m.predict(x); }
inline double predict(const FittedKrr &m, double x) { return m.predict(x); }

}  // namespace satl
