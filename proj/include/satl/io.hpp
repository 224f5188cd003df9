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

// JSON / CSV persistence for models, selections and datasets.

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "satl/adaptivity.hpp"
#include "satl/baselines.hpp"
#include "satl/evaluation.hpp"
#include "satl/gp.hpp"
#include "satl/krr.hpp"
#include "satl/satl.hpp"

namespace satl {

using json = nlohmann::json;

/// Shortest round-trip decimal form; "nan" / "inf" / "-inf" for non-finite values.
inline std::string format_double(double v) {
    if (std::isnan(v)) { return "nan"; }
    if (std::isinf(v)) { return v > 0 ? "inf" : "-inf"; }
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

inline double parse_double(const std::string &s) {
    if (s == "nan") { return std::numeric_limits<double>::quiet_NaN(); }
    if (s == "inf") { return std::numeric_limits<double>::infinity(); }
    if (s == "-inf") { return -std::numeric_limits<double>::infinity(); }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) { throw ContractError("parse_double: bad number '" + s + "'"); }
    return v;
}

/// JSON cannot carry NaN; non-finite values are written as null.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const KernelSpec &k) {
    return std::visit(
        [](const auto &kk) -> json {
            using K = std::decay_t<decltype(kk)>;
            if constexpr (std::is_same_v<K, GaussianKernel>) {
                return {{"type", "gaussian"}, {"bandwidth", kk.bandwidth()}};
            } else {
                return {{"type", "matern"}, {"nu", kk.nu()}, {"range", kk.range()}};
            }
        },
        k);
}

inline KernelSpec kernel_from_json(const json &j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "gaussian") { return GaussianKernel(j.at("bandwidth").get<double>()); }
    if (type == "matern") { return MaternKernel(j.at("nu").get<double>(), j.at("range").get<double>()); }
    throw ContractError("kernel_from_json: unknown kernel type '" + type + "'");
}

inline json to_json(const FittedKrr &m) {
    json x = json::array();
    for (Eigen::Index i = 0; i < m.training_points().rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.training_points().cols(); ++j) { row.push_back(m.training_points()(i, j)); }
        x.push_back(std::move(row));
    }
    std::vector<double> coef(m.coefficients().data(), m.coefficients().data() + m.coefficients().size());
    return {{"kernel", to_json(m.kernel())},
            {"lambda", m.lambda()},
            {"n", m.size()},
            {"x", std::move(x)},
            {"alpha", std::move(coef)},
            {"metadata", {{"jitter", m.jitter()}, {"lambda_underflow", m.lambda_underflow()}}}};
}

inline FittedKrr fitted_krr_from_json(const json &j) {
    const auto &xs = j.at("x");
    const auto coef = j.at("alpha").get<std::vector<double>>();
    const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
    const Eigen::Index d = n > 0 ? static_cast<Eigen::Index>(xs.at(0).size()) : 1;
    Points x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < d; ++k) { x(i, k) = xs.at(i).at(k).get<double>(); }
    }
    Vector a = Eigen::Map<const Vector>(coef.data(), static_cast<Eigen::Index>(coef.size()));
    const auto &meta = j.value("metadata", json::object());
    return {kernel_from_json(j.at("kernel")), std::move(x), std::move(a), j.at("lambda").get<double>(),
            meta.value("jitter", 0.0), meta.value("lambda_underflow", false)};
}

inline json to_json(const AdaptiveSelection &s) {
    json cands = json::array();
    for (const auto &c : s.candidates) {
        cands.push_back({{"alpha", c.alpha}, {"lambda", c.lambda}, {"validation_mse", number_or_null(c.validation_mse)}});
    }
    json cmp = json::array();
    for (const auto &c : s.comparisons) {
        cmp.push_back({{"alpha", c.alpha}, {"alpha_lower", c.alpha_lower}, {"distance", c.distance},
                       {"threshold", c.threshold}, {"passed", c.passed}});
    }
    return {{"method", to_string(s.method)}, {"alpha", s.alpha},       {"lambda", s.lambda},
            {"fit_size", s.fit_size},        {"degenerate", s.degenerate}, {"candidates", std::move(cands)},
            {"comparisons", std::move(cmp)}};
}

inline json to_json(const SatlModel &m) {
    json j{{"source", to_json(m.source)}, {"offset", to_json(m.offset)}};
    j["source_selection"] = m.source_selection ? to_json(*m.source_selection) : json(nullptr);
    j["offset_selection"] = m.offset_selection ? to_json(*m.offset_selection) : json(nullptr);
    return j;
}

inline json to_json(const FbeModel &m) {
    std::vector<double> beta(m.coefficients().data(), m.coefficients().data() + m.coefficients().size());
    return {{"basis", to_string(m.kind())},
            {"M", m.truncation()},
            {"constant_term", m.kind() == BasisKind::fourier},
            {"beta", std::move(beta)}};
}

inline FbeModel fbe_from_json(const json &j) {
    const auto kind = j.at("basis").get<std::string>() == "fourier" ? BasisKind::fourier : BasisKind::bspline;
    const auto beta = j.at("beta").get<std::vector<double>>();
    return {kind, j.at("M").get<int>(), Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(beta.size()))};
}

inline json to_json(const FbeTransferModel &m) {
    return {{"source", to_json(m.source)}, {"offset", to_json(m.offset)}, {"zero_source", m.zero_source}};
}

/// CSV layout: x0[,x1...],y,domain
inline void write_dataset_csv(std::ostream &os, const Dataset &d) {
    for (Eigen::Index j = 0; j < d.dim(); ++j) { os << 'x' << j << ','; }
    os << "y,domain\n";
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        for (Eigen::Index j = 0; j < d.dim(); ++j) { os << format_double(d.x(i, j)) << ','; }
        os << format_double(d.y(i)) << ',' << to_string(d.domain) << '\n';
    }
}

inline json dataset_metadata(const Dataset &d, const SampledFunction &f) {
    return {{"kernel", to_json(KernelSpec{f.generator})},
            {"function_seed", f.seed},
            {"grid_size", f.grid().size()},
            {"interpolation", f.interpolation},
            {"seed", d.seed},
            {"sigma", d.sigma},
            {"n", d.size()},
            {"domain", to_string(d.domain)}};
}

/// CSV layout: x,value  (the grid of a sampled function)
inline void write_function_csv(std::ostream &os, const SampledFunction &f) {
    os << "x,value\n";
    for (std::size_t i = 0; i < f.grid().size(); ++i) {
        os << format_double(f.grid()[i]) << ',' << format_double(f.values()[i]) << '\n';
    }
}

}  // namespace satl
