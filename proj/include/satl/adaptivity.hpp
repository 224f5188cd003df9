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
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "satl/errors.hpp"
#include "satl/evaluation.hpp"
#include "satl/gp.hpp"
#include "satl/krr.hpp"

namespace satl {

/// Candidate smoothness values plus the exponential lambda-schedule constant they share.
struct SmoothnessGrid {
    std::vector<double> candidates;  // strictly increasing
    double C = 1.0;
    int dim = 1;
    std::string spacing = "explicit";  // or "q_spaced"

    [[nodiscard]] bool theory_conformant() const {
        return std::all_of(candidates.begin(), candidates.end(), [&](double a) { return a > 0.5 * dim; });
    }

    [[nodiscard]] RegSchedule schedule(double alpha) const {
        RegSchedule s;
        s.kind = ScheduleKind::gaussian_exponential;
        s.C = C;
        s.smoothness = alpha;
        s.dim = dim;
        return s;
    }
};

inline SmoothnessGrid build_grid(std::vector<double> candidates, double C = 1.0, int dim = 1) {
    if (candidates.empty()) { throw ContractError("build_grid: candidate list is empty"); }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    for (double a : candidates) { detail::require(a > 0.0 && std::isfinite(a), "build_grid: candidates must be positive"); }
    return {std::move(candidates), C, dim, "explicit"};
}

/// {j Q / log n : j = 1..N}.
inline SmoothnessGrid build_grid_q_spaced(double n, double Q, int N, double C = 1.0, int dim = 1) {
    detail::require(n >= 3.0, "build_grid: n must be >= 3");
    detail::require(Q > 0.0 && N >= 1, "build_grid: need Q > 0 and N >= 1");
    SmoothnessGrid g;
    const double ln = std::log(n);
    for (int j = 1; j <= N; ++j) { g.candidates.push_back(j * Q / ln); }
    g.C = C;
    g.dim = dim;
    g.spacing = "q_spaced";
    return g;
}

enum class AdaptMethod { train_validate, lepski };

inline const char *to_string(AdaptMethod m) { return m == AdaptMethod::train_validate ? "train_validate" : "lepski"; }

struct CandidateScore {
    double alpha;
    double lambda;
    double validation_mse;  // NaN for Lepski
};

struct LepskiComparison {
    double alpha;        // candidate under test
    double alpha_lower;  // rougher candidate it is compared with
    double distance;
    double threshold;
    bool passed;
};

struct AdaptiveSelection {
    AdaptMethod method = AdaptMethod::train_validate;
    double alpha = 0.0;
    double lambda = 0.0;
    std::vector<CandidateScore> candidates;
    std::vector<LepskiComparison> comparisons;
    bool degenerate = false;
    Eigen::Index fit_size = 0;
};

struct TrainValidateOptions {
    double split_fraction = 0.5;
    bool refit_on_full = false;
    JitterPolicy jitter{};
};

/// Fits one KRR per candidate on the first split_fraction of the data (index order) and
/// keeps the candidate with the smallest validation MSE on the rest; ties go to the larger alpha.
inline std::pair<AdaptiveSelection, FittedKrr> select_train_validate(const Dataset &data, const SmoothnessGrid &grid,
                                                                     const KernelSpec &kernel,
                                                                     const TrainValidateOptions &opt = {}) {
    data.validate();
    if (grid.candidates.empty()) { throw ContractError("select_train_validate: empty grid"); }
    detail::require(opt.split_fraction > 0.0 && opt.split_fraction < 1.0, "select_train_validate: split fraction must be in (0,1)");
    const Eigen::Index n = data.size();
    const auto n_train = static_cast<Eigen::Index>(std::floor(opt.split_fraction * static_cast<double>(n)));
    if (n_train < 1 || n - n_train < 1) { throw ContractError("select_train_validate: split leaves an empty half"); }
    const Dataset train = data.slice(0, n_train);
    const Dataset valid = data.slice(n_train, n - n_train);

    AdaptiveSelection sel;
    sel.method = AdaptMethod::train_validate;
    sel.fit_size = n_train;
    std::optional<FittedKrr> best;
    double best_mse = std::numeric_limits<double>::infinity();
    const Matrix g_train = gram_matrix(kernel, train.x);
    const Matrix g_valid = cross_gram(kernel, valid.x, train.x);
    for (double alpha : grid.candidates) {
        const auto lam = schedule_lambda_checked(grid.schedule(alpha), n_train);
        FittedKrr m = fit_from_gram(kernel, train, g_train, lam.value, opt.jitter, lam.underflow);
        const double mse = (g_valid * m.coefficients() - valid.y).squaredNorm() / static_cast<double>(valid.size());
        sel.candidates.push_back({alpha, m.lambda(), mse});
        if (!best || mse < best_mse || (mse == best_mse && alpha > sel.alpha)) {
            best_mse = mse;
            sel.alpha = alpha;
            sel.lambda = m.lambda();
            best.emplace(std::move(m));
        }
    }
    if (opt.refit_on_full) {
        FittedKrr full = fit(kernel, data, grid.schedule(sel.alpha), opt.jitter);
        sel.lambda = full.lambda();
        sel.fit_size = n;
        return {std::move(sel), std::move(full)};
    }
    return {std::move(sel), std::move(*best)};
}

/// Distance between two fitted predictors in L2(mu).
using ErrorOracle = std::function<double(const FittedKrr &, const FittedKrr &)>;

/// L2[0,1] distance under the uniform law, by Simpson quadrature.
inline ErrorOracle uniform_l2_oracle(int grid_points = kDefaultQuadraturePoints) {
    return [grid_points](const FittedKrr &a, const FittedKrr &b) { return simpson_l2_error(a, b, grid_points).l2; };
}

/// Lepski rule: the largest candidate whose fit stays within c0 (n / log n)^{-a'/(2a'+d)}
/// of every rougher candidate a'. All fits use the full data.
inline std::pair<AdaptiveSelection, FittedKrr> select_lepski(const Dataset &data, const SmoothnessGrid &grid,
                                                             const KernelSpec &kernel, double c0 = 1.0,
                                                             const ErrorOracle &oracle = uniform_l2_oracle(),
                                                             const JitterPolicy &jitter = {}) {
    data.validate();
    if (grid.candidates.empty()) { throw ContractError("select_lepski: empty grid"); }
    detail::require(c0 > 0.0, "select_lepski: c0 must be positive");
    const double n = static_cast<double>(data.size());
    detail::require(n >= 3.0, "select_lepski: need n >= 3 so that log n > 1");
    const double effective = n / std::log(n);

    std::vector<FittedKrr> fits;
    AdaptiveSelection sel;
    sel.method = AdaptMethod::lepski;
    sel.fit_size = data.size();
    const Matrix g = gram_matrix(kernel, data.x);
    for (double alpha : grid.candidates) {
        const auto lam = schedule_lambda_checked(grid.schedule(alpha), data.size());
        fits.push_back(fit_from_gram(kernel, data, g, lam.value, jitter, lam.underflow));
        sel.candidates.push_back({alpha, fits.back().lambda(), std::numeric_limits<double>::quiet_NaN()});
    }
    std::size_t chosen = 0;
    for (std::size_t j = 1; j < fits.size(); ++j) {
        bool ok = true;
        for (std::size_t i = 0; i < j; ++i) {
            const double a_lo = grid.candidates[i];
            const double thr = c0 * std::pow(effective, -a_lo / (2.0 * a_lo + grid.dim));
            const double dist = oracle(fits[j], fits[i]);
            const bool pass = dist <= thr;
            sel.comparisons.push_back({grid.candidates[j], a_lo, dist, thr, pass});
            ok = ok && pass;
        }
        if (ok) { chosen = j; }
    }
    sel.alpha = grid.candidates[chosen];
    sel.lambda = fits[chosen].lambda();
    sel.degenerate = chosen == 0 && fits.size() > 1;
    return {std::move(sel), std::move(fits[chosen])};
}

/// Mean held-out MSE over K contiguous folds. `fit_fn(train)` returns a predictor with predict(Points).
template <typename FitFn>
double kfold_mse(const Dataset &data, int folds, const FitFn &fit_fn) {
    data.validate();
    detail::require(folds >= 2 && folds <= data.size(), "kfold_mse: need 2 <= K <= n");
    const Eigen::Index n = data.size();
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
        const Eigen::Index lo = n * f / folds;
        const Eigen::Index hi = n * (f + 1) / folds;
        Dataset train = data;
        train.x.resize(n - (hi - lo), data.dim());
        train.y.resize(n - (hi - lo));
        train.x << data.x.topRows(lo), data.x.bottomRows(n - hi);
        train.y << data.y.head(lo), data.y.tail(n - hi);
        const Dataset test = data.slice(lo, hi - lo);
        const auto model = fit_fn(train);
        total += (model.predict(test.x) - test.y).squaredNorm();
    }
    return total / static_cast<double>(n);
}

}  // namespace satl
