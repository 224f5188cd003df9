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

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "satl/adaptivity.hpp"
#include "satl/errors.hpp"
#include "satl/krr.hpp"
#include "satl/satl.hpp"

namespace satl {

// ---------------------------------------------------------------------------
// Finite basis expansion
// ---------------------------------------------------------------------------

enum class BasisKind { fourier, bspline };

inline const char *to_string(BasisKind k) { return k == BasisKind::fourier ? "fourier" : "bspline"; }

/// sqrt(2) cos(pi j x), j >= 1.
inline double fourier_basis(int j, double x) {
    detail::require(j >= 1, "fourier_basis: j must be >= 1");
    return std::numbers::sqrt2 * std::cos(std::numbers::pi * j * x);
}

/// Cubic B-spline basis on [0,1] with `interior` uniformly spaced interior knots
/// (clamped ends); interior + 4 functions forming a partition of unity.
class CubicBSplineBasis {
public:
    static constexpr int kDegree = 3;

    explicit CubicBSplineBasis(int interior) : interior_(interior) {
        detail::require(interior >= 0, "CubicBSplineBasis: knot count must be >= 0");
        for (int i = 0; i <= kDegree; ++i) { knots_.push_back(0.0); }
        for (int i = 1; i <= interior; ++i) { knots_.push_back(static_cast<double>(i) / (interior + 1)); }
        for (int i = 0; i <= kDegree; ++i) { knots_.push_back(1.0); }
    }

    [[nodiscard]] int size() const noexcept { return interior_ + kDegree + 1; }

    /// Writes all basis values at x into row `out` (length size()).
    void evaluate(double x, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) const {
        detail::require(x >= 0.0 && x <= 1.0, "CubicBSplineBasis: x outside [0,1]");
        out.setZero();
        // Knot span index s with knots_[s] <= x < knots_[s+1]; x = 1 uses the last span.
        const int last_span = static_cast<int>(knots_.size()) - kDegree - 2;
        int s = kDegree + static_cast<int>(std::floor(x * (interior_ + 1)));
        if (s > last_span) { s = last_span; }
        while (s > kDegree && x < knots_[s]) { --s; }
        while (s < last_span && x >= knots_[s + 1]) { ++s; }
        std::array<double, kDegree + 1> n{}, left{}, right{};
        n[0] = 1.0;
        for (int j = 1; j <= kDegree; ++j) {
            left[j] = x - knots_[s + 1 - j];
            right[j] = knots_[s + j] - x;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                const double tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        for (int j = 0; j <= kDegree; ++j) { out(s - kDegree + j) = n[j]; }
    }

private:
    int interior_;
    std::vector<double> knots_;
};

/// f(x) = sum_j beta_j B_j(x). Fourier models carry a constant term B_0 = 1 first.
class FbeModel {
public:
    FbeModel(BasisKind kind, int m, Vector beta) : kind_(kind), m_(m), beta_(std::move(beta)) {
        detail::require(beta_.size() == basis_size(kind, m), "FbeModel: coefficient count mismatch");
    }

    static Eigen::Index basis_size(BasisKind kind, int m) { return kind == BasisKind::fourier ? m + 1 : m + 4; }

    static Matrix design(BasisKind kind, int m, const Points &x) {
        detail::require(x.cols() == 1, "FBE: one-dimensional covariates only");
        detail::require(m >= 1, "FBE: truncation M must be >= 1");
        Matrix d(x.rows(), basis_size(kind, m));
        if (kind == BasisKind::fourier) {
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                d(i, 0) = 1.0;
                for (int j = 1; j <= m; ++j) { d(i, j) = fourier_basis(j, x(i, 0)); }
            }
        } else {
            const CubicBSplineBasis basis(m);
            for (Eigen::Index i = 0; i < x.rows(); ++i) { basis.evaluate(x(i, 0), d.row(i)); }
        }
        return d;
    }

    [[nodiscard]] Vector predict(const Points &x) const { return design(kind_, m_, x) * beta_; }
    [[nodiscard]] double predict(double x) const {
        Points p(1, 1);
        p(0, 0) = x;
        return predict(p)(0);
    }
    [[nodiscard]] double operator()(double x) const { return predict(x); }

    [[nodiscard]] BasisKind kind() const noexcept { return kind_; }
    [[nodiscard]] int truncation() const noexcept { return m_; }
    [[nodiscard]] const Vector &coefficients() const noexcept { return beta_; }

private:
    BasisKind kind_;
    int m_;
    Vector beta_;
};

inline constexpr double kFbeRidgeFallback = 1e-10;

/// Least squares on the truncated basis; rank-deficient designs get a 1e-10 ridge.
inline FbeModel fit_fbe(const Dataset &data, BasisKind kind, int m) {
    data.validate();
    const Matrix x = FbeModel::design(kind, m, data.x);
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    Vector beta;
    if (qr.rank() == x.cols()) {
        beta = qr.solve(data.y);
    } else {
        Matrix gram = x.transpose() * x;
        gram.diagonal().array() += kFbeRidgeFallback;
        Eigen::LDLT<Matrix> ldlt(gram);
        if (ldlt.info() != Eigen::Success) { throw NumericalError("fit_fbe: rank-deficient design even with ridge fallback"); }
        beta = ldlt.solve(x.transpose() * data.y);
    }
    if (!beta.allFinite()) { throw NumericalError("fit_fbe: non-finite coefficients"); }
    return {kind, m, std::move(beta)};
}

inline std::vector<int> default_truncation_grid() {
    std::vector<int> g;
    for (int m = 2; m <= 30; m += 2) { g.push_back(m); }
    return g;
}

/// K-fold CV choice of the truncation level; ties go to the smaller M.
inline int select_truncation_cv(const Dataset &data, BasisKind kind, const std::vector<int> &grid, int folds = 5) {
    detail::require(!grid.empty(), "select_truncation_cv: empty grid");
    int best = grid.front();
    double best_mse = std::numeric_limits<double>::infinity();
    for (int m : grid) {
        double mse;
        try {
            mse = kfold_mse(data, folds, [&](const Dataset &train) { return fit_fbe(train, kind, m); });
        } catch (const NumericalError &) {
            continue;
        }
        if (mse < best_mse || (mse == best_mse && m < best)) {
            best_mse = mse;
            best = m;
        }
    }
    return best;
}

struct FbeTransferModel {
    FbeModel source;
    FbeModel offset;
    bool zero_source = false;

    [[nodiscard]] Vector predict(const Points &x) const {
        Vector v = offset.predict(x);
        if (!zero_source) { v += source.predict(x); }
        return v;
    }
    [[nodiscard]] double predict(double x) const { return (zero_source ? 0.0 : source.predict(x)) + offset.predict(x); }
    [[nodiscard]] double operator()(double x) const { return predict(x); }
};

struct FbeTransferOptions {
    std::optional<int> source_truncation;  // M1; CV-selected when empty
    std::optional<int> offset_truncation;  // M2; CV-selected when empty
    std::vector<int> truncation_grid = default_truncation_grid();
    int folds = 5;
    bool zero_source = false;
};

/// FBE on the source, FBE on the target residuals, summed.
inline FbeTransferModel fit_fbe_transfer(const Dataset &source, const Dataset &target, BasisKind kind,
                                         const FbeTransferOptions &opt = {}) {
    target.validate();
    const int m1 = opt.source_truncation ? *opt.source_truncation
                   : opt.zero_source     ? 1
                                         : select_truncation_cv(source, kind, opt.truncation_grid, opt.folds);
    FbeModel f_source = opt.zero_source ? FbeModel(kind, m1, Vector::Zero(FbeModel::basis_size(kind, m1)))
                                        : fit_fbe(source, kind, m1);
    const Dataset labels = target.with_responses(target.y - f_source.predict(target.x));
    const int folds = std::min<int>(opt.folds, static_cast<int>(target.size()));
    const int m2 = opt.offset_truncation ? *opt.offset_truncation
                                         : select_truncation_cv(labels, kind, opt.truncation_grid, folds);
    return {std::move(f_source), fit_fbe(labels, kind, m2), opt.zero_source};
}

// ---------------------------------------------------------------------------
// Kernel baselines
// ---------------------------------------------------------------------------

/// Matern(imposed_nu)-kernel KRR with lambda = C n^{-2 m0' / (2 m0 + d)}, m0' = imposed_nu + d/2.
inline FittedKrr fit_misspecified_matern(const Dataset &data, double imposed_nu, double true_smoothness, double C,
                                         double range = 1.0, const JitterPolicy &jitter = {}) {
    detail::require(imposed_nu > 0.0, "fit_misspecified_matern: imposed nu must be positive");
    const int d = static_cast<int>(data.dim());
    RegSchedule s;
    s.kind = ScheduleKind::matern_polynomial;
    s.C = C;
    s.smoothness = true_smoothness;
    s.imposed_smoothness = imposed_nu + 0.5 * d;
    s.dim = d;
    return fit(KernelSpec{MaternKernel(imposed_nu, range)}, data, s, jitter);
}

/// Adaptive Gaussian KRR on the target sample alone.
inline std::pair<AdaptiveSelection, FittedKrr> fit_target_only(const Dataset &target, const SmoothnessGrid &grid,
                                                                const KernelSpec &kernel,
                                                                const TrainValidateOptions &opt = {}) {
    return select_train_validate(target, grid, kernel, opt);
}

}  // namespace satl
