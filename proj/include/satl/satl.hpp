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

#include <optional>
#include <string>
#include <utility>

#include "satl/adaptivity.hpp"
#include "satl/errors.hpp"
#include "satl/krr.hpp"

namespace satl {

/// Target covariates with residual labels y_T - f_S(x_T).
struct PseudoLabelSet {
    Points x;
    Vector residuals;

    [[nodiscard]] Dataset as_dataset(const Dataset &target) const { return target.with_responses(residuals); }
};

template <typename SourceModel>
PseudoLabelSet make_pseudo_labels(const Dataset &target, const SourceModel &source_model) {
    target.validate();
    return {target.x, target.y - source_model.predict(target.x)};
}

/// Two-phase offset transfer model: f_T = f_S + f_delta.
struct SatlModel {
    FittedKrr source;
    FittedKrr offset;
    std::optional<AdaptiveSelection> source_selection;
    std::optional<AdaptiveSelection> offset_selection;
    PseudoLabelSet pseudo_labels;

    [[nodiscard]] double predict_point(const Eigen::Ref<const Eigen::RowVectorXd> &x) const {
        return source.predict_point(x) + offset.predict_point(x);
    }
    [[nodiscard]] double predict(double x) const { return source.predict(x) + offset.predict(x); }
    [[nodiscard]] Vector predict(const Points &x) const { return source.predict(x) + offset.predict(x); }
    [[nodiscard]] double operator()(double x) const { return predict(x); }
};

inline double predict_satl(const SatlModel &m, double x) { return m.predict(x); }
inline Vector predict_satl(const SatlModel &m, const Points &x) { return m.predict(x); }

struct SatlOptions {
    AdaptMethod source_method = AdaptMethod::train_validate;
    AdaptMethod offset_method = AdaptMethod::train_validate;
    TrainValidateOptions train_validate{};
    double lepski_c0 = 1.0;
    std::optional<KernelSpec> offset_kernel;  // defaults to the phase-1 kernel
    bool zero_source = false;                 // replace f_S by the zero model
};

namespace detail {

template <typename Fn>
auto tag_phase(const char *phase, Fn &&fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const NumericalError &e) {
        throw NumericalError(std::string(phase) + ": " + e.what(), e.points_hash(), e.max_jitter());
    } catch (const ContractError &e) {
        throw ContractError(std::string(phase) + ": " + e.what());
    }
}

inline std::pair<AdaptiveSelection, FittedKrr> adapt(const Dataset &data, const SmoothnessGrid &grid,
                                                     const KernelSpec &kernel, AdaptMethod method,
                                                     const SatlOptions &opt) {
    if (method == AdaptMethod::lepski) {
        return select_lepski(data, grid, kernel, opt.lepski_c0, uniform_l2_oracle(), opt.train_validate.jitter);
    }
    return select_train_validate(data, grid, kernel, opt.train_validate);
}

}  // namespace detail

/// Smoothness-adaptive transfer: adapt + fit f_S on the source, pseudo-label the target,
/// then adapt + fit the offset on the pseudo-labels.
inline SatlModel fit_satl(const Dataset &source, const Dataset &target, const SmoothnessGrid &source_grid,
                          const SmoothnessGrid &offset_grid, const KernelSpec &kernel, const SatlOptions &opt = {}) {
    std::optional<FittedKrr> f_source;
    std::optional<AdaptiveSelection> sel_source;
    if (opt.zero_source) {
        f_source.emplace(FittedKrr::zero(kernel, target.x.topRows(std::min<Eigen::Index>(1, target.x.rows()))));
    } else {
        auto [sel, model] = detail::tag_phase("phase 1 (source)", [&] {
            return detail::adapt(source, source_grid, kernel, opt.source_method, opt);
        });
        sel_source = std::move(sel);
        f_source.emplace(std::move(model));
    }
    PseudoLabelSet labels = make_pseudo_labels(target, *f_source);
    const KernelSpec &k2 = opt.offset_kernel ? *opt.offset_kernel : kernel;
    auto [sel_offset, f_offset] = detail::tag_phase("phase 2 (offset)", [&] {
        return detail::adapt(labels.as_dataset(target), offset_grid, k2, opt.offset_method, opt);
    });
    return {std::move(*f_source), std::move(f_offset), std::move(sel_source), std::move(sel_offset), std::move(labels)};
}

/// Non-adaptive offset transfer with fixed regularizers for the two phases.
inline SatlModel fit_otl_fixed(const Dataset &source, const Dataset &target, const KernelSpec &kernel, double lambda_source,
                               double lambda_offset, const JitterPolicy &jitter = {}) {
    detail::require(lambda_source > 0.0 && lambda_offset > 0.0, "fit_otl_fixed: regularizers must be positive");
    FittedKrr f_source = detail::tag_phase("phase 1 (source)", [&] { return fit(kernel, source, lambda_source, jitter); });
    PseudoLabelSet labels = make_pseudo_labels(target, f_source);
    FittedKrr f_offset = detail::tag_phase("phase 2 (offset)", [&] {
        return fit(kernel, labels.as_dataset(target), lambda_offset, jitter);
    });
    return {std::move(f_source), std::move(f_offset), std::nullopt, std::nullopt, std::move(labels)};
}

}  // namespace satl
