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

// Config-driven Monte-Carlo suites: settings x trials x methods, deterministic bundles.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "satl/adaptivity.hpp"
#include "satl/baselines.hpp"
#include "satl/errors.hpp"
#include "satl/evaluation.hpp"
#include "satl/gp.hpp"
#include "satl/io.hpp"
#include "satl/krr.hpp"
#include "satl/rng.hpp"
#include "satl/satl.hpp"

namespace satl::experiment {

inline constexpr const char *kVersion = "1.0.0";
inline constexpr const char *kRawSchema = "# satl-raw v1";
inline constexpr const char *kAggregateSchema = "# satl-aggregate v1";

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Suite { target_only_nonadaptive, target_only_adaptive, tl_fixed_target, tl_growing_target, saturation_demo };

inline const char *to_string(Suite s) {
    switch (s) {
        case Suite::target_only_nonadaptive: return "target_only_nonadaptive";
        case Suite::target_only_adaptive: return "target_only_adaptive";
        case Suite::tl_fixed_target: return "tl_fixed_target";
        case Suite::tl_growing_target: return "tl_growing_target";
        case Suite::saturation_demo: return "saturation_demo";
    }
    return "?";
}

inline Suite parse_suite(const std::string &s) {
    for (auto v : {Suite::target_only_nonadaptive, Suite::target_only_adaptive, Suite::tl_fixed_target,
                   Suite::tl_growing_target, Suite::saturation_demo}) {
        if (s == to_string(v)) { return v; }
    }
    throw ConfigError("unknown suite '" + s + "'");
}

inline bool is_transfer(Suite s) { return s == Suite::tl_fixed_target || s == Suite::tl_growing_target; }
inline bool is_target_only(Suite s) { return s == Suite::target_only_nonadaptive || s == Suite::target_only_adaptive; }

struct CSelection {
    std::string mode = "cv";  // cv | fixed | best_over_grid
    double value = 1.0;
    std::vector<double> grid{0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0};
    int folds = 5;
    int pilots = 3;
    bool operator==(const CSelection &) const = default;
};

struct TransferSettings {
    long n_target = 50;
    std::vector<long> n_source{100, 250, 500, 1000, 1500, 2000};
    std::vector<long> n_target_grid{50, 100, 150, 200, 300, 400};
    double source_exponent = 1.5;
    double nu_target = 1.01;
    std::vector<double> nu_delta{2.01, 3.01, 4.01};
    std::vector<double> h{0.5, 1.0, 2.0};
    std::vector<std::string> methods{"satl", "target_only", "fbe_bspline"};
    double q_source = 0.0;  // 0 = derived from the sample-size range
    double q_offset = 0.0;
    int n_source_candidates = 0;  // 0 = derived
    int n_offset_candidates = 0;
    std::vector<double> target_only_candidates{1, 2, 3, 4, 5};
    std::vector<int> truncation_grid = default_truncation_grid();
    bool operator==(const TransferSettings &) const = default;
};

struct SaturationSettings {
    double nu_true = 3.01;
    std::vector<double> imposed_nu{2.5, 0.5};
    double kernel_range = 0.2;
    bool operator==(const SaturationSettings &) const = default;
};

struct ExperimentConfig {
    Suite suite = Suite::target_only_nonadaptive;
    std::uint64_t seed = 20240601;
    int trials = 20;
    double sigma = 0.5;
    std::vector<long> n_grid{500, 750, 1000, 1250, 1500, 1750, 2000};
    std::vector<double> nu{2.01, 3.01};
    double bandwidth = 0.1;
    double gp_range = 0.2;
    int gp_grid = 2048;
    int quadrature = kDefaultQuadraturePoints;
    CSelection c{};
    std::vector<double> candidates{1, 2, 3, 4, 5};
    double split = 0.5;
    bool lepski = false;
    double lepski_c0 = 1.0;
    TransferSettings transfer{};
    SaturationSettings saturation{};
    std::string output_dir = "results";
    bool operator==(const ExperimentConfig &) const = default;
};

/// Sobolev order implied by a Matern generator: nu = k + 0.01 maps to k.
inline double implied_smoothness(double nu) {
    const double r = std::round(nu);
    return std::abs(nu - r) <= 0.05 && r >= 1.0 ? r : nu;
}

namespace detail {

template <typename T>
void read(const json &j, const char *key, T &out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception &e) {
            throw ConfigError(std::string("config key '") + key + "': " + e.what());
        }
    }
}

inline void read_range(const json &j, const char *key, std::vector<long> &out) {
    if (!j.contains(key)) { return; }
    const auto &v = j.at(key);
    if (v.is_object()) {
        long start = 0, stop = 0, step = 0;
        read(v, "start", start);
        read(v, "stop", stop);
        read(v, "step", step);
        if (step <= 0 || stop < start) { throw ConfigError(std::string("config key '") + key + "': bad range"); }
        out.clear();
        for (long n = start; n <= stop; n += step) { out.push_back(n); }
    } else {
        read(j, key, out);
    }
}

inline void check_keys(const json &j, std::initializer_list<const char *> allowed, const std::string &where) {
    if (!j.is_object()) { throw ConfigError(where + " must be an object"); }
    for (const auto &[k, v] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char *a) { return k == a; })) {
            throw ConfigError("unknown config key '" + k + "' in " + where);
        }
    }
}

}  // namespace detail

inline json to_json(const ExperimentConfig &c) {
    return {{"suite", to_string(c.suite)},
            {"seed", c.seed},
            {"trials", c.trials},
            {"sigma", c.sigma},
            {"n_grid", c.n_grid},
            {"nu", c.nu},
            {"bandwidth", c.bandwidth},
            {"gp_range", c.gp_range},
            {"gp_grid", c.gp_grid},
            {"quadrature", c.quadrature},
            {"C", {{"mode", c.c.mode}, {"value", c.c.value}, {"grid", c.c.grid}, {"folds", c.c.folds}, {"pilots", c.c.pilots}}},
            {"adaptive", {{"candidates", c.candidates}, {"split", c.split}, {"lepski", c.lepski}, {"lepski_c0", c.lepski_c0}}},
            {"transfer",
             {{"n_target", c.transfer.n_target},
              {"n_source", c.transfer.n_source},
              {"n_target_grid", c.transfer.n_target_grid},
              {"source_exponent", c.transfer.source_exponent},
              {"nu_target", c.transfer.nu_target},
              {"nu_delta", c.transfer.nu_delta},
              {"h", c.transfer.h},
              {"methods", c.transfer.methods},
              {"q_source", c.transfer.q_source},
              {"q_offset", c.transfer.q_offset},
              {"n_source_candidates", c.transfer.n_source_candidates},
              {"n_offset_candidates", c.transfer.n_offset_candidates},
              {"target_only_candidates", c.transfer.target_only_candidates},
              {"truncation_grid", c.transfer.truncation_grid}}},
            {"saturation",
             {{"nu_true", c.saturation.nu_true},
              {"imposed_nu", c.saturation.imposed_nu},
              {"kernel_range", c.saturation.kernel_range}}},
            {"output_dir", c.output_dir}};
}

inline void validate(const ExperimentConfig &c) {
    auto fail = [](const std::string &m) { throw ConfigError(m); };
    if (c.trials < 1) { fail("trials must be >= 1"); }
    if (!(c.sigma >= 0.0)) { fail("sigma must be >= 0"); }
    if (!(c.bandwidth > 0.0) || !(c.gp_range > 0.0)) { fail("bandwidth and gp_range must be positive"); }
    if (c.gp_grid < 2) { fail("gp_grid must be >= 2"); }
    if (c.quadrature < 3 || c.quadrature % 2 == 0) { fail("quadrature must be odd and >= 3"); }
    if (c.c.mode != "cv" && c.c.mode != "fixed" && c.c.mode != "best_over_grid") { fail("C.mode must be cv, fixed or best_over_grid"); }
    if (c.c.mode != "fixed" && c.c.grid.empty()) { fail("C.grid must be nonempty"); }
    for (double v : c.c.grid) { if (!(v > 0.0)) { fail("C.grid values must be positive"); } }
    if (!(c.c.value > 0.0)) { fail("C.value must be positive"); }
    if (c.c.folds < 2 || c.c.pilots < 1) { fail("C.folds must be >= 2 and C.pilots >= 1"); }
    if (c.c.mode == "best_over_grid" && is_transfer(c.suite)) { fail("best_over_grid is only supported for single-task suites"); }
    if (!(c.split > 0.0 && c.split < 1.0)) { fail("adaptive.split must be in (0,1)"); }
    if (c.candidates.empty()) { fail("adaptive.candidates must be nonempty"); }
    if (!(c.lepski_c0 > 0.0)) { fail("adaptive.lepski_c0 must be positive"); }
    if (is_target_only(c.suite) || c.suite == Suite::saturation_demo) {
        if (c.n_grid.empty()) { fail("n_grid must be nonempty"); }
        for (long n : c.n_grid) { if (n < 4) { fail("n_grid values must be >= 4"); } }
    }
    if (is_target_only(c.suite) && c.nu.empty()) { fail("nu must be nonempty"); }
    if (c.suite == Suite::saturation_demo && c.saturation.imposed_nu.empty()) { fail("saturation.imposed_nu must be nonempty"); }
    if (is_transfer(c.suite)) {
        const auto &t = c.transfer;
        if (t.nu_delta.empty() || t.h.empty() || t.methods.empty()) { fail("transfer.nu_delta, h and methods must be nonempty"); }
        for (double h : t.h) { if (!(h >= 0.0)) { fail("transfer.h values must be >= 0"); } }
        for (const auto &m : t.methods) {
            static const std::set<std::string> known{"satl", "satl_lepski", "target_only", "fbe_bspline", "fbe_fourier"};
            if (!known.count(m)) { fail("unknown transfer method '" + m + "'"); }
        }
        if (c.suite == Suite::tl_fixed_target && (t.n_source.empty() || t.n_target < 4)) { fail("transfer.n_source must be nonempty and n_target >= 4"); }
        if (c.suite == Suite::tl_growing_target && t.n_target_grid.empty()) { fail("transfer.n_target_grid must be nonempty"); }
        for (long n : t.n_source) { if (n < 4) { fail("transfer.n_source values must be >= 4"); } }
        for (long n : t.n_target_grid) { if (n < 4) { fail("transfer.n_target_grid values must be >= 4"); } }
        if (t.target_only_candidates.empty() || t.truncation_grid.empty()) { fail("transfer candidate grids must be nonempty"); }
    }
}

/// Transfer suites default to a wider kernel and smoother generating paths than the single-task suites.
inline ExperimentConfig default_config(Suite suite) {
    ExperimentConfig c;
    c.suite = suite;
    if (is_transfer(suite)) {
        c.bandwidth = 0.2;
        c.gp_range = 0.5;
    }
    if (suite == Suite::saturation_demo) {
        c.gp_range = 0.5;
        c.n_grid = {500, 750, 1000, 1250, 1500, 1750, 2000, 2250, 2500, 2750, 3000};
    }
    return c;
}

inline ExperimentConfig config_from_json(const json &j) {
    using detail::read;
    detail::check_keys(j, {"suite", "seed", "trials", "sigma", "n_grid", "nu", "bandwidth", "gp_range", "gp_grid", "quadrature",
                           "C", "adaptive", "transfer", "saturation", "output_dir"},
                       "config");
    if (!j.contains("suite")) { throw ConfigError("config: 'suite' is required"); }
    ExperimentConfig c = default_config(parse_suite(j.at("suite").get<std::string>()));
    read(j, "seed", c.seed);
    read(j, "trials", c.trials);
    read(j, "sigma", c.sigma);
    detail::read_range(j, "n_grid", c.n_grid);
    read(j, "nu", c.nu);
    read(j, "bandwidth", c.bandwidth);
    read(j, "gp_range", c.gp_range);
    read(j, "gp_grid", c.gp_grid);
    read(j, "quadrature", c.quadrature);
    read(j, "output_dir", c.output_dir);
    if (j.contains("C")) {
        const auto &k = j.at("C");
        detail::check_keys(k, {"mode", "value", "grid", "folds", "pilots"}, "C");
        read(k, "mode", c.c.mode);
        read(k, "value", c.c.value);
        read(k, "grid", c.c.grid);
        read(k, "folds", c.c.folds);
        read(k, "pilots", c.c.pilots);
    }
    if (j.contains("adaptive")) {
        const auto &a = j.at("adaptive");
        detail::check_keys(a, {"candidates", "split", "lepski", "lepski_c0"}, "adaptive");
        read(a, "candidates", c.candidates);
        read(a, "split", c.split);
        read(a, "lepski", c.lepski);
        read(a, "lepski_c0", c.lepski_c0);
    }
    if (j.contains("transfer")) {
        const auto &t = j.at("transfer");
        detail::check_keys(t, {"n_target", "n_source", "n_target_grid", "source_exponent", "nu_target", "nu_delta", "h", "methods",
                               "q_source", "q_offset", "n_source_candidates", "n_offset_candidates", "target_only_candidates",
                               "truncation_grid"},
                           "transfer");
        read(t, "n_target", c.transfer.n_target);
        detail::read_range(t, "n_source", c.transfer.n_source);
        detail::read_range(t, "n_target_grid", c.transfer.n_target_grid);
        read(t, "source_exponent", c.transfer.source_exponent);
        read(t, "nu_target", c.transfer.nu_target);
        read(t, "nu_delta", c.transfer.nu_delta);
        read(t, "h", c.transfer.h);
        read(t, "methods", c.transfer.methods);
        read(t, "q_source", c.transfer.q_source);
        read(t, "q_offset", c.transfer.q_offset);
        read(t, "n_source_candidates", c.transfer.n_source_candidates);
        read(t, "n_offset_candidates", c.transfer.n_offset_candidates);
        read(t, "target_only_candidates", c.transfer.target_only_candidates);
        read(t, "truncation_grid", c.transfer.truncation_grid);
    }
    if (j.contains("saturation")) {
        const auto &s = j.at("saturation");
        detail::check_keys(s, {"nu_true", "imposed_nu", "kernel_range"}, "saturation");
        read(s, "nu_true", c.saturation.nu_true);
        read(s, "imposed_nu", c.saturation.imposed_nu);
        read(s, "kernel_range", c.saturation.kernel_range);
    }
    validate(c);
    return c;
}

/// Parses a JSON config; // and /* */ comments are allowed.
inline ExperimentConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) { throw ConfigError("cannot open config " + path.string()); }
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error &e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

/// 100 trials and, for single-task suites, n from 1000 to 3000 in steps of 100.
inline void apply_full_scale(ExperimentConfig &c) {
    c.trials = 100;
    if (is_target_only(c.suite) || c.suite == Suite::saturation_demo) {
        c.n_grid.clear();
        for (long n = 1000; n <= 3000; n += 100) { c.n_grid.push_back(n); }
    }
}

// ---------------------------------------------------------------------------
// Seeds, settings, rows
// ---------------------------------------------------------------------------

/// Per-trial substreams. Everything in a trial derives from its trial seed, which in turn
/// depends only on (master seed, trial index); sample sizes and offsets share the streams.
struct TrialSeeds {
    std::uint64_t trial;
    std::uint64_t target_path;
    std::uint64_t offset_path;
    std::uint64_t target_data;
    std::uint64_t source_data;

    static TrialSeeds from_trial_seed(std::uint64_t s) {
        return {s, seeds::derive(s, {seeds::tag("target_path")}), seeds::derive(s, {seeds::tag("offset_path")}),
                seeds::derive(s, {seeds::tag("target_data")}), seeds::derive(s, {seeds::tag("source_data")})};
    }
    static TrialSeeds for_trial(std::uint64_t master, int trial) {
        return from_trial_seed(seeds::derive(master, {seeds::tag("trial"), static_cast<std::uint64_t>(trial)}));
    }
    static TrialSeeds for_pilot(std::uint64_t master, int pilot) {
        return from_trial_seed(seeds::derive(master, {seeds::tag("pilot"), static_cast<std::uint64_t>(pilot)}));
    }
};

inline const char *kSeedScheme =
    "trial_seed = derive(master, tag('trial'), t); pilot_seed = derive(master, tag('pilot'), p); "
    "path/data seeds = derive(trial_seed, tag(name)); covariates and noise = derive(data_seed, 1|2); "
    "derive = SplitMix64 chain, tag = FNV-1a";

struct Setting {
    double nu = std::numeric_limits<double>::quiet_NaN();
    double nu_delta = std::numeric_limits<double>::quiet_NaN();
    double h = std::numeric_limits<double>::quiet_NaN();
    long n_target = 0;
    long n_source = 0;
    double C = std::numeric_limits<double>::quiet_NaN();  // best_over_grid only
};

struct Row {
    std::size_t row_id = 0;
    std::string method;
    Setting setting;
    int trial = 0;
    std::uint64_t trial_seed = 0;
    double l2 = std::numeric_limits<double>::quiet_NaN();
    double squared = std::numeric_limits<double>::quiet_NaN();
    double xi = std::numeric_limits<double>::quiet_NaN();
    double selected_alpha = std::numeric_limits<double>::quiet_NaN();
    double selected_alpha_offset = std::numeric_limits<double>::quiet_NaN();
    double lambda = std::numeric_limits<double>::quiet_NaN();
    double C_used = std::numeric_limits<double>::quiet_NaN();
    std::string status = "ok";
    std::string error_tag;
};

inline const char *kRawHeader =
    "row_id,suite,method,nu,nu_delta,h,n_target,n_source,C,trial,trial_seed,l2_error,sq_error,xi,selected_alpha,"
    "selected_alpha_offset,lambda,status,error_tag";

inline std::string sanitize(std::string s) {
    for (auto &ch : s) {
        if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') { ch = ';'; }
    }
    return s;
}

inline std::string to_csv(const Row &r, Suite suite) {
    std::ostringstream os;
    const auto &s = r.setting;
    os << r.row_id << ',' << to_string(suite) << ',' << r.method << ',' << format_double(s.nu) << ','
       << format_double(s.nu_delta) << ',' << format_double(s.h) << ',' << s.n_target << ',' << s.n_source << ','
       << format_double(r.C_used) << ',' << r.trial << ',' << r.trial_seed << ',' << format_double(r.l2) << ','
       << format_double(r.squared) << ',' << format_double(r.xi) << ',' << format_double(r.selected_alpha) << ','
       << format_double(r.selected_alpha_offset) << ',' << format_double(r.lambda) << ',' << r.status << ','
       << sanitize(r.error_tag);
    return os.str();
}

inline std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

/// Header-keyed rows of a CSV file, skipping '#' comment lines.
inline std::vector<std::map<std::string, std::string>> read_csv(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) { throw ContractError("cannot open " + path.string()); }
    std::vector<std::string> header;
    std::vector<std::map<std::string, std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') { continue; }
        auto cells = split_csv_line(line);
        if (header.empty()) {
            header = std::move(cells);
            continue;
        }
        if (cells.size() != header.size()) { throw ContractError("malformed CSV row in " + path.string()); }
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < header.size(); ++i) { row[header[i]] = cells[i]; }
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Parallel execution
// ---------------------------------------------------------------------------

/// Worker count from SATL_WORKERS, else the hardware concurrency.
inline int default_workers() {
    if (const char *env = std::getenv("SATL_WORKERS")) {
        const int w = std::atoi(env);
        if (w >= 1) { return w; }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, count) on a bounded pool; results must be written by index.
template <typename Body>
void parallel_for(std::size_t count, int workers, const Body &body) {
    workers = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) { body(i); }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) { body(i); }
        });
    }
}

// ---------------------------------------------------------------------------
// Regularization-constant selection
// ---------------------------------------------------------------------------

struct CvOutcome {
    double C;
    std::vector<std::pair<double, double>> scores;  // (C, pooled CV MSE)
};

/// Pools K-fold held-out squared errors over pilot datasets for every C and returns the argmin
/// (ties to the smaller C). `fold_sse(train, test, grid)` returns one SSE per grid entry.
template <typename FoldSse>
CvOutcome select_C_cv(const std::vector<Dataset> &pilots, std::vector<double> grid, int folds, const FoldSse &fold_sse) {
    satl::detail::require(!grid.empty(), "select_C_cv: empty C grid");
    satl::detail::require(!pilots.empty(), "select_C_cv: need at least one pilot dataset");
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    std::vector<double> sse(grid.size(), 0.0);
    double count = 0.0;
    for (const auto &data : pilots) {
        const Eigen::Index n = data.size();
        const int k = static_cast<int>(std::min<Eigen::Index>(folds, n));
        satl::detail::require(k >= 2, "select_C_cv: pilot data too small for CV");
        for (int f = 0; f < k; ++f) {
            const Eigen::Index lo = n * f / k, hi = n * (f + 1) / k;
            Dataset train = data;
            train.x.resize(n - (hi - lo), data.dim());
            train.y.resize(n - (hi - lo));
            train.x << data.x.topRows(lo), data.x.bottomRows(n - hi);
            train.y << data.y.head(lo), data.y.tail(n - hi);
            const Dataset test = data.slice(lo, hi - lo);
            const std::vector<double> part = fold_sse(train, test, grid);
            for (std::size_t i = 0; i < grid.size(); ++i) { sse[i] += part[i]; }
        }
        count += static_cast<double>(n);
    }
    CvOutcome out{grid.front(), {}};
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double mse = sse[i] / count;
        out.scores.emplace_back(grid[i], mse);
        if (mse < best) {
            best = mse;
            out.C = grid[i];
        }
    }
    return out;
}

namespace detail {

inline double safe_sse(const std::function<Vector()> &predict, const Vector &y) {
    try {
        const Vector p = predict();
        return p.allFinite() ? (p - y).squaredNorm() : std::numeric_limits<double>::infinity();
    } catch (const NumericalError &) {
        return std::numeric_limits<double>::infinity();
    }
}

/// Fixed-schedule KRR: one Gram per fold, one solve per C.
inline auto fixed_schedule_sse(const KernelSpec &kernel, RegSchedule base) {
    return [kernel, base](const Dataset &train, const Dataset &test, const std::vector<double> &grid) {
        const Matrix g = gram_matrix(kernel, train.x);
        const Matrix cross = cross_gram(kernel, test.x, train.x);
        std::vector<double> out;
        for (double C : grid) {
            RegSchedule s = base;
            s.C = C;
            out.push_back(safe_sse(
                [&] {
                    const auto lam = schedule_lambda_checked(s, train.size());
                    return Vector(cross * fit_from_gram(kernel, train, g, lam.value, {}, lam.underflow).coefficients());
                },
                test.y));
        }
        return out;
    };
}

/// Train/validate-adaptive KRR; `make_grid(n, C)` builds the candidate grid for a fit of size n.
inline auto adaptive_sse(const KernelSpec &kernel, std::function<SmoothnessGrid(long, double)> make_grid, double split) {
    return [kernel, make_grid, split](const Dataset &train, const Dataset &test, const std::vector<double> &grid) {
        std::vector<double> out;
        for (double C : grid) {
            out.push_back(safe_sse(
                [&] {
                    TrainValidateOptions opt;
                    opt.split_fraction = split;
                    const auto g = make_grid(static_cast<long>(train.size()), C);
                    return select_train_validate(train, g, kernel, opt).second.predict(test.x);
                },
                test.y));
        }
        return out;
    };
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

struct ResultsBundle {
    ExperimentConfig config;
    std::vector<Row> rows;
    std::vector<TrialSummary> summaries;
    json rates = json::array();
    json metadata;
    std::size_t failed = 0;
    double wall_seconds = 0.0;
};

class Runner {
public:
    explicit Runner(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
        validate(cfg_);
        build_settings();
        build_methods();
    }

    [[nodiscard]] const ExperimentConfig &config() const noexcept { return cfg_; }
    [[nodiscard]] const std::vector<Setting> &settings() const noexcept { return settings_; }
    [[nodiscard]] const std::vector<std::string> &methods() const noexcept { return methods_; }
    [[nodiscard]] std::size_t row_count() const noexcept { return settings_.size() * cfg_.trials * methods_.size(); }
    [[nodiscard]] const std::map<std::string, double> &c_table() const noexcept { return c_table_; }
    [[nodiscard]] const json &c_log() const noexcept { return c_log_; }

    void set_c_table(std::map<std::string, double> table) {
        c_table_ = std::move(table);
        c_resolved_ = true;
    }

    /// Resolves every regularization constant the suite needs (CV on pilot data, or fixed).
    const std::map<std::string, double> &resolve_C() {
        if (c_resolved_) { return c_table_; }
        c_table_.clear();
        c_log_ = json::object();
        switch (cfg_.suite) {
            case Suite::target_only_nonadaptive:
            case Suite::target_only_adaptive: resolve_target_only_C(); break;
            case Suite::saturation_demo: resolve_saturation_C(); break;
            case Suite::tl_fixed_target:
            case Suite::tl_growing_target: resolve_transfer_C(); break;
        }
        c_resolved_ = true;
        return c_table_;
    }

    /// Every method's row for one (setting, trial) cell; failures become error rows.
    std::vector<Row> compute_cell(std::size_t setting_index, int trial) {
        resolve_C();
        const Setting &s = settings_.at(setting_index);
        const TrialSeeds ts = TrialSeeds::for_trial(cfg_.seed, trial);
        std::vector<Row> rows(methods_.size());
        for (std::size_t m = 0; m < methods_.size(); ++m) {
            Row &r = rows[m];
            r.row_id = (setting_index * static_cast<std::size_t>(cfg_.trials) + static_cast<std::size_t>(trial)) * methods_.size() + m;
            r.method = methods_[m];
            r.setting = s;
            r.trial = trial;
            r.trial_seed = ts.trial;
        }
        try {
            switch (cfg_.suite) {
                case Suite::target_only_nonadaptive:
                case Suite::target_only_adaptive: cell_target_only(s, ts, rows); break;
                case Suite::saturation_demo: cell_saturation(s, ts, rows); break;
                case Suite::tl_fixed_target:
                case Suite::tl_growing_target: cell_transfer(s, ts, rows); break;
            }
        } catch (const std::exception &e) {
            for (auto &r : rows) {
                if (r.status == "ok" && std::isnan(r.l2)) { mark_failed(r, e); }
            }
        }
        return rows;
    }

    ResultsBundle run(int workers = default_workers(), std::ostream *log = nullptr) {
        const auto t0 = std::chrono::steady_clock::now();
        resolve_C();
        const std::size_t cells = settings_.size() * static_cast<std::size_t>(cfg_.trials);
        std::vector<std::vector<Row>> results(cells);
        std::mutex log_mutex;
        std::atomic<std::size_t> done{0};
        parallel_for(cells, workers, [&](std::size_t i) {
            results[i] = compute_cell(i / cfg_.trials, static_cast<int>(i % cfg_.trials));
            const std::size_t d = ++done;
            if (log != nullptr && (d % std::max<std::size_t>(1, cells / 10) == 0 || d == cells)) {
                std::lock_guard lock(log_mutex);
                *log << "  [" << to_string(cfg_.suite) << "] " << d << "/" << cells << " cells\n";
            }
        });
        ResultsBundle b;
        b.config = cfg_;
        for (auto &cell : results) {
            for (auto &r : cell) {
                if (r.status != "ok") { ++b.failed; }
                b.rows.push_back(std::move(r));
            }
        }
        b.summaries = aggregate(b.rows);
        b.rates = rates(b.summaries);
        b.metadata = metadata();
        b.metadata["failed_rows"] = b.failed;
        b.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return b;
    }

    [[nodiscard]] json metadata() const {
        return {{"version", kVersion},
                {"suite", to_string(cfg_.suite)},
                {"config", to_json(cfg_)},
                {"seed_scheme", kSeedScheme},
                {"master_seed", cfg_.seed},
                {"methods", methods_},
                {"settings", settings_.size()},
                {"rows", row_count()},
                {"C_mode", cfg_.c.mode},
                {"selected_C", c_table_},
                {"C_selection", c_log_},
                {"error_columns", {"l2_error = |f_hat - f|_L2 (Simpson)", "sq_error = l2_error^2"}},
                {"rate_column", "mean sq_error (mean over trials, then log)"}};
    }

    /// Groups ok rows by (method, setting), in enumeration order. Grouping goes by row id
    /// because settings carry NaN for inapplicable fields.
    [[nodiscard]] std::vector<TrialSummary> aggregate(const std::vector<Row> &rows) const {
        const std::size_t per_setting = static_cast<std::size_t>(cfg_.trials) * methods_.size();
        std::vector<std::pair<std::vector<double>, std::vector<double>>> groups(settings_.size() * methods_.size());
        for (const auto &r : rows) {
            if (r.status != "ok") { continue; }
            auto &g = groups.at((r.row_id / per_setting) * methods_.size() + r.row_id % methods_.size());
            g.first.push_back(r.l2);
            g.second.push_back(r.squared);
        }
        std::vector<TrialSummary> out;
        for (std::size_t i = 0; i < groups.size(); ++i) {
            if (groups[i].first.empty()) { continue; }
            out.push_back({methods_[i % methods_.size()], setting_key(settings_[i / methods_.size()]),
                           summarize(groups[i].first), summarize(groups[i].second)});
        }
        return out;
    }

    [[nodiscard]] json rates(const std::vector<TrialSummary> &sums) const {
        json out = json::array();
        if (cfg_.suite == Suite::tl_fixed_target) { return out; }
        // series key -> (x, mean sq, mean l2)
        std::map<std::string, std::vector<std::tuple<double, double, double>>> series;
        std::map<std::string, TrialSummary> head;
        std::vector<std::string> order;
        for (const auto &s : sums) {
            std::map<std::string, double> key = s.setting;
            const double x = key.at("n_target");
            key.erase("n_target");
            key.erase("n_source");
            std::string id = s.method;
            for (const auto &[k, v] : key) {
                if (!std::isnan(v)) { id += "|" + k + "=" + format_double(v); }
            }
            if (!series.count(id)) {
                order.push_back(id);
                head[id] = s;
            }
            series[id].emplace_back(x, s.squared.mean, s.l2.mean);
        }
        for (const auto &id : order) {
            const auto &pts = series[id];
            const auto &h = head[id];
            const double theory = theoretical_for(h);
            std::vector<RateAbscissa> absc{RateAbscissa::log_n};
            if (cfg_.suite == Suite::target_only_adaptive) { absc.push_back(RateAbscissa::log_n_over_log_n); }
            for (auto a : absc) {
                for (const char *column : {"squared", "l2"}) {
                    std::vector<std::pair<double, double>> xy;
                    for (auto [x, sq, l2] : pts) {
                        const double v = std::string(column) == "squared" ? sq : l2;
                        if (v > 0.0 && std::isfinite(v)) { xy.emplace_back(x, v); }
                    }
                    if (xy.size() < 2) { continue; }
                    std::set<double> xs;
                    for (auto &p : xy) { xs.insert(p.first); }
                    if (xs.size() < 2) { continue; }
                    const RateFit fitres = fit_rate(xy, a);
                    json pj = json::array();
                    for (auto [px, py] : fitres.points) { pj.push_back({px, py}); }
                    json e{{"series", id},
                           {"method", h.method},
                           {"column", column},
                           {"abscissa", to_string(a)},
                           {"slope", fitres.slope},
                           {"intercept", fitres.intercept},
                           {"r_squared", fitres.r_squared},
                           {"theoretical_slope", std::string(column) == "squared" ? number_or_null(theory)
                                                                                  : number_or_null(theory / 2.0)},
                           {"points", std::move(pj)}};
                    for (const auto &[k, v] : h.setting) {
                        if (k != "n_target" && k != "n_source") { e[k] = number_or_null(v); }
                    }
                    out.push_back(std::move(e));
                }
            }
        }
        if (cfg_.c.mode == "best_over_grid") { mark_best(out, sums); }
        return out;
    }

private:
    // -- setup ---------------------------------------------------------------

    void build_settings() {
        settings_.clear();
        const auto &t = cfg_.transfer;
        std::vector<double> cs{std::numeric_limits<double>::quiet_NaN()};
        if (cfg_.c.mode == "best_over_grid") {
            cs = cfg_.c.grid;
            std::sort(cs.begin(), cs.end());
            cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
        }
        switch (cfg_.suite) {
            case Suite::target_only_nonadaptive:
            case Suite::target_only_adaptive:
                for (double nu : cfg_.nu) {
                    for (double C : cs) {
                        for (long n : cfg_.n_grid) {
                            Setting s;
                            s.nu = nu;
                            s.n_target = n;
                            s.C = C;
                            settings_.push_back(s);
                        }
                    }
                }
                break;
            case Suite::saturation_demo:
                for (double C : cs) {
                    for (long n : cfg_.n_grid) {
                        Setting s;
                        s.nu = cfg_.saturation.nu_true;
                        s.n_target = n;
                        s.C = C;
                        settings_.push_back(s);
                    }
                }
                break;
            case Suite::tl_fixed_target:
            case Suite::tl_growing_target:
                for (double nd : t.nu_delta) {
                    for (double h : t.h) {
                        const bool fixed = cfg_.suite == Suite::tl_fixed_target;
                        const auto &grid = fixed ? t.n_source : t.n_target_grid;
                        for (long n : grid) {
                            Setting s;
                            s.nu = t.nu_target;
                            s.nu_delta = nd;
                            s.h = h;
                            s.n_target = fixed ? t.n_target : n;
                            s.n_source = fixed ? n : std::lround(std::pow(static_cast<double>(n), t.source_exponent));
                            settings_.push_back(s);
                        }
                    }
                }
                break;
        }
    }

    void build_methods() {
        methods_.clear();
        switch (cfg_.suite) {
            case Suite::target_only_nonadaptive: methods_ = {"krr_fixed"}; break;
            case Suite::target_only_adaptive:
                methods_ = {"krr_train_validate"};
                if (cfg_.lepski) { methods_.push_back("krr_lepski"); }
                break;
            case Suite::saturation_demo:
                for (double nu : cfg_.saturation.imposed_nu) { methods_.push_back("matern_nu_" + format_double(nu)); }
                break;
            case Suite::tl_fixed_target:
            case Suite::tl_growing_target: methods_ = cfg_.transfer.methods; break;
        }
    }

    static std::map<std::string, double> setting_key(const Setting &s) {
        return {{"nu", s.nu}, {"nu_delta", s.nu_delta}, {"h", s.h}, {"n_target", static_cast<double>(s.n_target)},
                {"n_source", static_cast<double>(s.n_source)}, {"C", s.C}};
    }

    [[nodiscard]] double theoretical_for(const TrialSummary &s) const {
        switch (cfg_.suite) {
            case Suite::target_only_nonadaptive:
            case Suite::target_only_adaptive: return theoretical_slope(implied_smoothness(s.setting.at("nu")));
            case Suite::tl_growing_target: return theoretical_slope(implied_smoothness(s.setting.at("nu_delta")));
            case Suite::saturation_demo: {
                const double m0 = implied_smoothness(cfg_.saturation.nu_true);
                const double imposed = parse_double(s.method.substr(std::string("matern_nu_").size())) + 0.5;
                // Below half the true order the rate saturates at -4m'/(4m'+d).
                return imposed < m0 / 2.0 ? -4.0 * imposed / (4.0 * imposed + 1.0) : theoretical_slope(m0);
            }
            case Suite::tl_fixed_target: break;
        }
        return std::numeric_limits<double>::quiet_NaN();
    }

    static void mark_best(json &rates, const std::vector<TrialSummary> &sums) {
        // Best C per (method, nu): smallest mean squared error at the largest n.
        std::map<std::pair<std::string, double>, std::pair<double, double>> best;  // -> (n, err) with C
        std::map<std::pair<std::string, double>, double> best_c;
        for (const auto &s : sums) {
            const auto key = std::make_pair(s.method, s.setting.at("nu"));
            const double n = s.setting.at("n_target");
            auto it = best.find(key);
            if (it == best.end() || n > it->second.first || (n == it->second.first && s.squared.mean < it->second.second)) {
                best[key] = {n, s.squared.mean};
                best_c[key] = s.setting.at("C");
            }
        }
        for (auto &e : rates) {
            const auto key = std::make_pair(e["method"].get<std::string>(), e["nu"].is_null() ? std::nan("") : e["nu"].get<double>());
            e["best"] = best_c.count(key) && !e["C"].is_null() && e["C"].get<double>() == best_c[key];
        }
    }

    // -- data ----------------------------------------------------------------

    SampledFunction truth_path(double nu, std::uint64_t seed) const {
        return sample_gp(MaternKernel(nu, cfg_.gp_range), static_cast<std::size_t>(cfg_.gp_grid), seed);
    }

    TransferScenario scenario(const Setting &s, const TrialSeeds &ts) const {
        return make_transfer_scenario(s.nu, s.nu_delta, s.h, cfg_.gp_range, static_cast<std::size_t>(cfg_.gp_grid),
                                      ts.target_path, ts.offset_path);
    }

    [[nodiscard]] KernelSpec gaussian() const { return GaussianKernel(cfg_.bandwidth); }

    [[nodiscard]] SmoothnessGrid target_only_grid(double C) const { return build_grid(cfg_.candidates, C); }

    [[nodiscard]] long max_n() const { return *std::max_element(cfg_.n_grid.begin(), cfg_.n_grid.end()); }

    [[nodiscard]] std::pair<long, long> source_range() const {
        long lo = std::numeric_limits<long>::max(), hi = 0;
        for (const auto &s : settings_) {
            lo = std::min(lo, s.n_source);
            hi = std::max(hi, s.n_source);
        }
        return {lo, hi};
    }
    [[nodiscard]] std::pair<long, long> target_range() const {
        long lo = std::numeric_limits<long>::max(), hi = 0;
        for (const auto &s : settings_) {
            lo = std::min(lo, s.n_target);
            hi = std::max(hi, s.n_target);
        }
        return {lo, hi};
    }

    /// Q-spaced grid parameters spanning [0.75, 5] over the suite's sample-size range.
    static std::pair<double, int> q_params(double q, int count, std::pair<long, long> range) {
        const double lo = std::log(std::max<double>(3.0, static_cast<double>(range.first)));
        const double hi = std::log(std::max<double>(3.0, static_cast<double>(range.second)));
        if (!(q > 0.0)) { q = 0.75 * lo; }
        if (count <= 0) { count = static_cast<int>(std::ceil(5.0 * hi / q - 1e-9)); }
        return {q, std::max(1, count)};
    }

    [[nodiscard]] SmoothnessGrid source_grid(long n, double C) const {
        auto [q, count] = q_params(cfg_.transfer.q_source, cfg_.transfer.n_source_candidates, source_range());
        return build_grid_q_spaced(static_cast<double>(std::max(n, 3L)), q, count, C);
    }
    [[nodiscard]] SmoothnessGrid offset_grid(long n, double C) const {
        auto [q, count] = q_params(cfg_.transfer.q_offset, cfg_.transfer.n_offset_candidates, target_range());
        return build_grid_q_spaced(static_cast<double>(std::max(n, 3L)), q, count, C);
    }

    static std::string key_nu(const char *prefix, double nu) { return std::string(prefix) + "nu=" + format_double(nu); }
    static std::string key_transfer(const char *phase, double nu_delta, double h) {
        return std::string(phase) + "|nu_delta=" + format_double(nu_delta) + "|h=" + format_double(h);
    }

    double lookup_C(const std::string &key, const Setting &s) const {
        if (!std::isnan(s.C)) { return s.C; }
        auto it = c_table_.find(key);
        if (it == c_table_.end()) { throw ConfigError("no regularization constant resolved for '" + key + "'"); }
        return it->second;
    }

    // -- C resolution -----------------------------------------------------------

    template <typename FoldSse>
    double choose(const std::string &key, const std::vector<Dataset> &pilots, const FoldSse &sse) {
        if (cfg_.c.mode == "fixed") {
            c_table_[key] = cfg_.c.value;
            return cfg_.c.value;
        }
        const CvOutcome out = select_C_cv(pilots, cfg_.c.grid, cfg_.c.folds, sse);
        json scores = json::array();
        for (auto [c, mse] : out.scores) { scores.push_back({{"C", c}, {"cv_mse", number_or_null(mse)}}); }
        c_log_[key] = {{"selected", out.C}, {"scores", scores}, {"folds", cfg_.c.folds}, {"pilots", pilots.size()},
                       {"n", pilots.front().size()}};
        c_table_[key] = out.C;
        return out.C;
    }

    void resolve_target_only_C() {
        if (cfg_.c.mode == "best_over_grid") { return; }
        const long n = max_n();
        for (double nu : cfg_.nu) {
            std::vector<Dataset> pilots;
            if (cfg_.c.mode == "cv") {
                for (int p = 0; p < cfg_.c.pilots; ++p) {
                    const auto ts = TrialSeeds::for_pilot(cfg_.seed, p);
                    pilots.push_back(make_dataset(truth_path(nu, ts.target_path), n, cfg_.sigma, ts.target_data, Domain::target));
                }
            }
            if (cfg_.suite == Suite::target_only_nonadaptive) {
                RegSchedule base;
                base.smoothness = implied_smoothness(nu);
                choose(key_nu("", nu), pilots, detail::fixed_schedule_sse(gaussian(), base));
            } else {
                const auto cands = cfg_.candidates;
                choose(key_nu("", nu), pilots,
                       detail::adaptive_sse(gaussian(), [cands](long, double C) { return build_grid(cands, C); }, cfg_.split));
            }
        }
    }

    void resolve_saturation_C() {
        if (cfg_.c.mode == "best_over_grid") { return; }
        const auto &sat = cfg_.saturation;
        std::vector<Dataset> pilots;
        if (cfg_.c.mode == "cv") {
            for (int p = 0; p < cfg_.c.pilots; ++p) {
                const auto ts = TrialSeeds::for_pilot(cfg_.seed, p);
                pilots.push_back(make_dataset(truth_path(sat.nu_true, ts.target_path), max_n(), cfg_.sigma, ts.target_data, Domain::target));
            }
        }
        for (double nu : sat.imposed_nu) {
            RegSchedule base;
            base.kind = ScheduleKind::matern_polynomial;
            base.smoothness = implied_smoothness(sat.nu_true);
            base.imposed_smoothness = nu + 0.5;
            choose(key_nu("matern_", nu), pilots, detail::fixed_schedule_sse(MaternKernel(nu, sat.kernel_range), base));
        }
    }

    void resolve_transfer_C() {
        const auto &t = cfg_.transfer;
        const long ns_max = source_range().second;
        const long nt_max = target_range().second;
        const bool cv = cfg_.c.mode == "cv";
        const bool needs_satl = std::any_of(t.methods.begin(), t.methods.end(), [](const std::string &m) { return m.rfind("satl", 0) == 0; });
        const bool needs_target = std::count(t.methods.begin(), t.methods.end(), std::string("target_only")) > 0;
        if (needs_target) {
            std::vector<Dataset> pilots;
            if (cv) {
                for (int p = 0; p < cfg_.c.pilots; ++p) {
                    const auto ts = TrialSeeds::for_pilot(cfg_.seed, p);
                    pilots.push_back(make_dataset(truth_path(t.nu_target, ts.target_path), nt_max, cfg_.sigma, ts.target_data, Domain::target));
                }
            }
            const auto cands = t.target_only_candidates;
            choose("target_only", pilots,
                   detail::adaptive_sse(gaussian(), [cands](long, double C) { return build_grid(cands, C); }, cfg_.split));
        }
        if (!needs_satl) { return; }
        for (double nd : t.nu_delta) {
            for (double h : t.h) {
                Setting s;
                s.nu = t.nu_target;
                s.nu_delta = nd;
                s.h = h;
                std::vector<Dataset> src_pilots, tgt_pilots;
                if (cv) {
                    for (int p = 0; p < cfg_.c.pilots; ++p) {
                        const auto ts = TrialSeeds::for_pilot(cfg_.seed, p);
                        const auto sc = scenario(s, ts);
                        src_pilots.push_back(make_dataset(sc.source, ns_max, cfg_.sigma, ts.source_data, Domain::source));
                        tgt_pilots.push_back(make_dataset(sc.target, nt_max, cfg_.sigma, ts.target_data, Domain::target));
                    }
                }
                auto src_grid = [this](long n, double C) { return source_grid(n, C); };
                const double c_source = choose(key_transfer("source", nd, h), src_pilots, detail::adaptive_sse(gaussian(), src_grid, cfg_.split));
                // Offset constant: CV on pilot pseudo-labels from the phase-1 fit with the chosen source constant.
                std::vector<Dataset> label_pilots;
                for (std::size_t p = 0; p < tgt_pilots.size(); ++p) {
                    TrainValidateOptions opt;
                    opt.split_fraction = cfg_.split;
                    const auto f_s = select_train_validate(src_pilots[p], source_grid(ns_max, c_source), gaussian(), opt).second;
                    const auto labels = make_pseudo_labels(tgt_pilots[p], f_s);
                    label_pilots.push_back(labels.as_dataset(tgt_pilots[p]));
                }
                auto off_grid = [this](long n, double C) { return offset_grid(n, C); };
                choose(key_transfer("offset", nd, h), label_pilots, detail::adaptive_sse(gaussian(), off_grid, cfg_.split));
            }
        }
    }

    // -- cells -----------------------------------------------------------------

    static void mark_failed(Row &r, const std::exception &e) {
        r.status = "error";
        r.error_tag = sanitize(e.what());
        r.l2 = r.squared = std::numeric_limits<double>::quiet_NaN();
    }

    template <typename Fn>
    static void guarded(Row &r, Fn &&fn) {
        try {
            fn();
        } catch (const std::exception &e) {
            mark_failed(r, e);
        }
    }

    void record_error(Row &r, const ErrorReport &e) const {
        r.l2 = e.l2;
        r.squared = e.squared;
    }

    void cell_target_only(const Setting &s, const TrialSeeds &ts, std::vector<Row> &rows) const {
        const SampledFunction f = truth_path(s.nu, ts.target_path);
        const Dataset data = make_dataset(f, s.n_target, cfg_.sigma, ts.target_data, Domain::target);
        const double C = lookup_C(key_nu("", s.nu), s);
        for (auto &r : rows) {
            r.C_used = C;
            guarded(r, [&] {
                if (r.method == "krr_fixed") {
                    RegSchedule sched;
                    sched.C = C;
                    sched.smoothness = implied_smoothness(s.nu);
                    const FittedKrr m = fit(gaussian(), data, sched);
                    r.lambda = m.lambda();
                    r.selected_alpha = sched.smoothness;
                    record_error(r, simpson_l2_error(m, f, cfg_.quadrature));
                } else if (r.method == "krr_train_validate") {
                    TrainValidateOptions opt;
                    opt.split_fraction = cfg_.split;
                    const auto [sel, m] = select_train_validate(data, target_only_grid(C), gaussian(), opt);
                    r.lambda = sel.lambda;
                    r.selected_alpha = sel.alpha;
                    record_error(r, simpson_l2_error(m, f, cfg_.quadrature));
                } else if (r.method == "krr_lepski") {
                    const auto [sel, m] = select_lepski(data, target_only_grid(C), gaussian(), cfg_.lepski_c0,
                                                        uniform_l2_oracle(cfg_.quadrature));
                    r.lambda = sel.lambda;
                    r.selected_alpha = sel.alpha;
                    record_error(r, simpson_l2_error(m, f, cfg_.quadrature));
                }
            });
        }
    }

    void cell_saturation(const Setting &s, const TrialSeeds &ts, std::vector<Row> &rows) const {
        const auto &sat = cfg_.saturation;
        const SampledFunction f = truth_path(sat.nu_true, ts.target_path);
        const Dataset data = make_dataset(f, s.n_target, cfg_.sigma, ts.target_data, Domain::target);
        for (std::size_t m = 0; m < rows.size(); ++m) {
            auto &r = rows[m];
            const double nu = sat.imposed_nu[m];
            r.C_used = lookup_C(key_nu("matern_", nu), s);
            guarded(r, [&] {
                const FittedKrr model = fit_misspecified_matern(data, nu, implied_smoothness(sat.nu_true), r.C_used, sat.kernel_range);
                r.lambda = model.lambda();
                r.selected_alpha = nu + 0.5;
                record_error(r, simpson_l2_error(model, f, cfg_.quadrature));
            });
        }
    }

    void cell_transfer(const Setting &s, const TrialSeeds &ts, std::vector<Row> &rows) const {
        const TransferScenario sc = scenario(s, ts);
        const Dataset target = make_dataset(sc.target, s.n_target, cfg_.sigma, ts.target_data, Domain::target);
        const Dataset source = make_dataset(sc.source, s.n_source, cfg_.sigma, ts.source_data, Domain::source);
        const double xi = xi_factor(s.h, grid_l2_norm(sc.source.grid(), sc.source.values()));
        for (auto &r : rows) {
            r.xi = xi;
            guarded(r, [&] {
                if (r.method == "satl" || r.method == "satl_lepski") {
                    const double cs = lookup_C(key_transfer("source", s.nu_delta, s.h), s);
                    const double cd = lookup_C(key_transfer("offset", s.nu_delta, s.h), s);
                    SatlOptions opt;
                    opt.train_validate.split_fraction = cfg_.split;
                    opt.lepski_c0 = cfg_.lepski_c0;
                    if (r.method == "satl_lepski") { opt.source_method = opt.offset_method = AdaptMethod::lepski; }
                    const SatlModel m = fit_satl(source, target, source_grid(s.n_source, cs), offset_grid(s.n_target, cd), gaussian(), opt);
                    r.C_used = cs;
                    r.selected_alpha = m.source_selection->alpha;
                    r.selected_alpha_offset = m.offset_selection->alpha;
                    r.lambda = m.offset.lambda();
                    record_error(r, simpson_l2_error(m, sc.target, cfg_.quadrature));
                } else if (r.method == "target_only") {
                    const double ct = lookup_C("target_only", s);
                    TrainValidateOptions opt;
                    opt.split_fraction = cfg_.split;
                    const auto [sel, m] = fit_target_only(target, build_grid(cfg_.transfer.target_only_candidates, ct), gaussian(), opt);
                    r.C_used = ct;
                    r.selected_alpha = sel.alpha;
                    r.lambda = sel.lambda;
                    record_error(r, simpson_l2_error(m, sc.target, cfg_.quadrature));
                } else {
                    FbeTransferOptions opt;
                    opt.truncation_grid = cfg_.transfer.truncation_grid;
                    const auto kind = r.method == "fbe_fourier" ? BasisKind::fourier : BasisKind::bspline;
                    const FbeTransferModel m = fit_fbe_transfer(source, target, kind, opt);
                    r.selected_alpha = m.source.truncation();
                    r.selected_alpha_offset = m.offset.truncation();
                    record_error(r, simpson_l2_error(m, sc.target, cfg_.quadrature));
                }
            });
        }
    }

    ExperimentConfig cfg_;
    std::vector<Setting> settings_;
    std::vector<std::string> methods_;
    std::map<std::string, double> c_table_;
    json c_log_ = json::object();
    bool c_resolved_ = false;
};

inline ResultsBundle run_suite(const ExperimentConfig &cfg, int workers = default_workers(), std::ostream *log = nullptr) {
    Runner runner(cfg);
    return runner.run(workers, log);
}

// ---------------------------------------------------------------------------
// Bundle files
// ---------------------------------------------------------------------------

inline const char *kAggregateHeader =
    "suite,method,nu,nu_delta,h,n_target,n_source,C,count,mean_l2,sd_l2,se_l2,mean_sq,sd_sq,se_sq";

inline void write_bundle(const ResultsBundle &b, const std::filesystem::path &dir) {
    std::filesystem::create_directories(dir);
    const Suite suite = b.config.suite;
    {
        std::ofstream out(dir / "raw.csv", std::ios::binary);
        out << kRawSchema << '\n' << kRawHeader << '\n';
        for (const auto &r : b.rows) { out << to_csv(r, suite) << '\n'; }
    }
    {
        std::ofstream out(dir / "aggregated.csv", std::ios::binary);
        out << kAggregateSchema << '\n' << kAggregateHeader << '\n';
        for (const auto &s : b.summaries) {
            const auto &k = s.setting;
            out << to_string(suite) << ',' << s.method << ',' << format_double(k.at("nu")) << ','
                << format_double(k.at("nu_delta")) << ',' << format_double(k.at("h")) << ','
                << static_cast<long>(k.at("n_target")) << ',' << static_cast<long>(k.at("n_source")) << ','
                << format_double(k.at("C")) << ',' << s.l2.count << ',' << format_double(s.l2.mean) << ','
                << format_double(s.l2.sd) << ',' << format_double(s.l2.se) << ',' << format_double(s.squared.mean) << ','
                << format_double(s.squared.sd) << ',' << format_double(s.squared.se) << '\n';
        }
    }
    {
        std::ofstream out(dir / "rates.json", std::ios::binary);
        out << b.rates.dump(2) << '\n';
    }
    {
        std::ofstream out(dir / "metadata.json", std::ios::binary);
        out << b.metadata.dump(2) << '\n';
    }
    {
        std::ofstream out(dir / "timing.json", std::ios::binary);
        out << json{{"wall_seconds", b.wall_seconds}}.dump(2) << '\n';
    }
}

inline void print_summary(const ResultsBundle &b, std::ostream &os) {
    os << "suite " << to_string(b.config.suite) << ": " << b.rows.size() << " rows, " << b.failed << " failed, "
       << std::fixed << std::setprecision(1) << b.wall_seconds << " s\n";
    os << std::defaultfloat;
    os << std::left << std::setw(22) << "method" << std::setw(10) << "n_T" << std::setw(10) << "n_S" << std::setw(8) << "nu"
       << std::setw(10) << "nu_delta" << std::setw(6) << "h" << std::setw(14) << "mean_sq" << "se_sq\n";
    for (const auto &s : b.summaries) {
        const auto &k = s.setting;
        os << std::left << std::setw(22) << s.method << std::setw(10) << static_cast<long>(k.at("n_target")) << std::setw(10)
           << static_cast<long>(k.at("n_source")) << std::setw(8) << format_double(k.at("nu")) << std::setw(10)
           << format_double(k.at("nu_delta")) << std::setw(6) << format_double(k.at("h")) << std::setw(14)
           << std::setprecision(5) << s.squared.mean << s.squared.se << '\n';
    }
    for (const auto &r : b.rates) {
        if (r["column"] != "squared") { continue; }
        os << "rate " << r["series"].get<std::string>() << " [" << r["abscissa"].get<std::string>() << "]: slope "
           << std::setprecision(4) << r["slope"].get<double>() << " (theory "
           << (r["theoretical_slope"].is_null() ? std::string("n/a") : format_double(r["theoretical_slope"].get<double>()))
           << ")\n";
    }
}

/// Rebuilds a runner from a bundle's metadata (config echo plus resolved constants).
inline Runner runner_from_bundle(const std::filesystem::path &dir) {
    std::ifstream in(dir / "metadata.json");
    if (!in) { throw ContractError("no metadata.json in " + dir.string()); }
    const json meta = json::parse(in);
    Runner r(config_from_json(meta.at("config")));
    r.set_c_table(meta.at("selected_C").get<std::map<std::string, double>>());
    return r;
}

struct RerunResult {
    Row recomputed;
    std::string stored_l2;
    bool identical = false;
};

/// Recomputes one raw row in isolation and compares it with the stored value.
inline RerunResult rerun_cell(const std::filesystem::path &dir, std::size_t row_id) {
    Runner runner = runner_from_bundle(dir);
    const auto rows = read_csv(dir / "raw.csv");
    const std::size_t per_setting = static_cast<std::size_t>(runner.config().trials) * runner.methods().size();
    if (row_id >= runner.row_count()) { throw ContractError("row id " + std::to_string(row_id) + " out of range"); }
    const std::size_t setting = row_id / per_setting;
    const int trial = static_cast<int>((row_id % per_setting) / runner.methods().size());
    const std::size_t method = row_id % runner.methods().size();
    const auto cell = runner.compute_cell(setting, trial);
    RerunResult out{cell.at(method), "", false};
    for (const auto &r : rows) {
        if (r.at("row_id") == std::to_string(row_id)) {
            out.stored_l2 = r.at("l2_error");
            break;
        }
    }
    out.identical = !out.stored_l2.empty() && out.stored_l2 == format_double(out.recomputed.l2);
    return out;
}

enum class PlotKind { error_decay, tl_curves };

inline PlotKind parse_plot_kind(const std::string &s) {
    if (s == "error_decay") { return PlotKind::error_decay; }
    if (s == "tl_curves") { return PlotKind::tl_curves; }
    throw ContractError("unknown plot kind '" + s + "' (expected error_decay or tl_curves)");
}

/// Writes plot_<kind>.tsv (x, mean, se, series) from aggregated.csv; returns the data-row count.
/// `methods` filters series by method (an empty set yields a header-only file).
inline std::size_t emit_plot_data(const std::filesystem::path &dir, PlotKind kind,
                                  const std::optional<std::set<std::string>> &methods = std::nullopt,
                                  const std::string &column = "sq", std::filesystem::path out_path = {}) {
    const auto rows = read_csv(dir / "aggregated.csv");
    if (column != "sq" && column != "l2") { throw ContractError("plot column must be sq or l2"); }
    if (out_path.empty()) { out_path = dir / (std::string("plot_") + (kind == PlotKind::error_decay ? "error_decay" : "tl_curves") + ".tsv"); }
    std::ofstream out(out_path, std::ios::binary);
    out << "x\tmean\tse\tseries\n";
    std::size_t count = 0;
    for (const auto &r : rows) {
        if (methods && !methods->count(r.at("method"))) { continue; }
        const bool fixed_target = r.at("suite") == "tl_fixed_target";
        std::string label = r.at("method");
        std::string x;
        if (kind == PlotKind::error_decay) {
            x = r.at("n_target");
            label += " nu=" + r.at("nu");
            if (r.at("C") != "nan") { label += " C=" + r.at("C"); }
            if (r.at("nu_delta") != "nan") { label += " nu_delta=" + r.at("nu_delta") + " h=" + r.at("h"); }
        } else {
            x = fixed_target ? r.at("n_source") : r.at("n_target");
            label += " h=" + r.at("h") + " nu_delta=" + r.at("nu_delta");
        }
        out << x << '\t' << r.at("mean_" + column) << '\t' << r.at("se_" + column) << '\t' << label << '\n';
        ++count;
    }
    return count;
}

}  // namespace satl::experiment
