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

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "satl/experiment.hpp"

using namespace satl;
using namespace satl::experiment;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("satl_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

ExperimentConfig tiny_adaptive() {
    ExperimentConfig c = default_config(Suite::target_only_adaptive);
    c.trials = 2;
    c.n_grid = {60, 90};
    c.nu = {2.01};
    c.c.mode = "fixed";
    c.lepski = true;
    c.gp_grid = 256;
    c.quadrature = 257;
    return c;
}

ExperimentConfig tiny_transfer() {
    ExperimentConfig c = default_config(Suite::tl_fixed_target);
    c.trials = 2;
    c.transfer.n_target = 30;
    c.transfer.n_source = {60, 90};
    c.transfer.nu_delta = {2.01, 3.01};
    c.transfer.h = {0.5, 1.0};
    c.transfer.methods = {"satl", "target_only"};
    c.transfer.truncation_grid = {2, 4};
    c.c.mode = "fixed";
    c.gp_grid = 256;
    c.quadrature = 257;
    return c;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
    for (auto suite : {Suite::target_only_nonadaptive, Suite::target_only_adaptive, Suite::tl_fixed_target,
                       Suite::tl_growing_target, Suite::saturation_demo}) {
        const ExperimentConfig c = default_config(suite);
        EXPECT_EQ(config_from_json(json::parse(to_json(c).dump())), c) << to_string(suite);
    }
    ExperimentConfig c = tiny_transfer();
    c.seed = 123456789012345ULL;
    EXPECT_EQ(config_from_json(to_json(c)), c);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(config_from_json(json{{"suite", "saturation_demo"}, {"sigmaa", 0.5}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"suite", "target_only_adaptive"}, {"C", {{"mod", "cv"}}}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"suite", "nope"}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"seed", 1}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"suite", "target_only_adaptive"}, {"trials", 0}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"suite", "target_only_adaptive"}, {"trials", "ten"}}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"suite", "tl_fixed_target"}, {"transfer", {{"methods", {"magic"}}}}}), ConfigError);
}

TEST(Config, RangeSyntax) {
    const auto c = config_from_json(json{{"suite", "target_only_nonadaptive"}, {"n_grid", {{"start", 500}, {"stop", 2000}, {"step", 250}}}});
    EXPECT_EQ(c.n_grid, (std::vector<long>{500, 750, 1000, 1250, 1500, 1750, 2000}));
}

TEST(Config, ShippedConfigsLoad) {
    for (const auto &entry : fs::directory_iterator(fs::path(SATL_SOURCE_DIR) / "configs")) {
        if (entry.path().extension() != ".json") { continue; }
        EXPECT_NO_THROW(Runner(load_config(entry.path()))) << entry.path();
    }
}

TEST(Config, ImpliedSmoothness) {
    EXPECT_EQ(implied_smoothness(2.01), 2.0);
    EXPECT_EQ(implied_smoothness(3.01), 3.0);
    EXPECT_EQ(implied_smoothness(2.5), 2.5);
}

TEST(Runner, RowCountArithmetic) {
    EXPECT_EQ(Runner(tiny_adaptive()).row_count(), 2u * 2u * 2u);
    EXPECT_EQ(Runner(tiny_transfer()).row_count(), 2u * 2u * 2u * 2u * 2u);
    ExperimentConfig c = default_config(Suite::target_only_nonadaptive);
    c.c.mode = "best_over_grid";
    EXPECT_EQ(Runner(c).row_count(), c.n_grid.size() * c.nu.size() * c.c.grid.size() * 20u);
    ExperimentConfig g = default_config(Suite::tl_growing_target);
    const Runner rg(g);
    EXPECT_EQ(rg.row_count(), g.transfer.n_target_grid.size() * 3u * 3u * 20u * g.transfer.methods.size());
    for (const auto &s : rg.settings()) {
        EXPECT_EQ(s.n_source, static_cast<long>(std::llround(std::pow(static_cast<double>(s.n_target), 1.5))));
    }
}

TEST(SelectC, SingletonGridAndDuplicates) {
    Dataset d;
    d.x = Vector::LinSpaced(20, 0.0, 1.0);
    d.y = d.x.col(0).array().sin();
    int calls = 0;
    auto sse = [&](const Dataset &, const Dataset &test, const std::vector<double> &grid) {
        ++calls;
        std::vector<double> out;
        for (double c : grid) { out.push_back((c - 1.0) * (c - 1.0) * test.size()); }
        return out;
    };
    EXPECT_EQ(select_C_cv({d}, {0.3}, 4, sse).C, 0.3);
    EXPECT_EQ(calls, 4);
    const auto out = select_C_cv({d, d}, {2.0, 0.5, 1.0, 2.0, 1.0}, 5, sse);
    EXPECT_EQ(out.C, 1.0);
    EXPECT_EQ(out.scores.size(), 3u);
    EXPECT_THROW(select_C_cv({d}, {}, 5, sse), ContractError);
}

TEST(SelectC, TiesGoToSmallerConstant) {
    Dataset d;
    d.x = Vector::LinSpaced(10, 0.0, 1.0);
    d.y = Vector::Zero(10);
    auto flat = [](const Dataset &, const Dataset &, const std::vector<double> &grid) { return std::vector<double>(grid.size(), 1.0); };
    EXPECT_EQ(select_C_cv({d}, {4.0, 0.1, 2.0}, 5, flat).C, 0.1);
}

TEST(Seeds, TrialStreamsAreDistinctAndStable) {
    const auto a = TrialSeeds::for_trial(20240601, 3), b = TrialSeeds::for_trial(20240601, 3);
    EXPECT_EQ(a.target_data, b.target_data);
    std::set<std::uint64_t> s{a.target_path, a.offset_path, a.target_data, a.source_data};
    EXPECT_EQ(s.size(), 4u);
    EXPECT_NE(TrialSeeds::for_trial(20240601, 4).target_path, a.target_path);
    EXPECT_NE(TrialSeeds::for_pilot(20240601, 3).target_path, a.target_path);
}

TEST(Csv, SplitAndSanitize) {
    EXPECT_EQ(split_csv_line("a,b,,c"), (std::vector<std::string>{"a", "b", "", "c"}));
    EXPECT_EQ(sanitize("bad,value\nhere"), "bad;value;here");
}

TEST(Bundle, ByteIdenticalAcrossWorkerCounts) {
    const auto one = scratch("w1"), three = scratch("w3");
    write_bundle(run_suite(tiny_adaptive(), 1), one);
    write_bundle(run_suite(tiny_adaptive(), 3), three);
    for (const char *f : {"raw.csv", "aggregated.csv", "rates.json", "metadata.json"}) {
        EXPECT_EQ(slurp(one / f), slurp(three / f)) << f;
    }
    const std::string raw = slurp(one / "raw.csv");
    EXPECT_EQ(raw.rfind(std::string(kRawSchema) + "\n" + kRawHeader + "\n", 0), 0u);
    EXPECT_EQ(read_csv(one / "raw.csv").size(), 8u);
    fs::remove_all(one);
    fs::remove_all(three);
}

TEST(Bundle, RowsCarrySelectionsAndFiniteErrors) {
    const auto b = run_suite(tiny_adaptive(), 1);
    EXPECT_EQ(b.failed, 0u);
    for (const auto &r : b.rows) {
        EXPECT_EQ(r.status, "ok");
        EXPECT_GT(r.l2, 0.0);
        EXPECT_NEAR(r.squared, r.l2 * r.l2, 1e-15 * r.squared + 1e-300);
        if (r.method != "krr_fixed") { EXPECT_GE(r.selected_alpha, 1.0); }
    }
    ASSERT_EQ(b.summaries.size(), 2u * 2u);
    EXPECT_EQ(b.summaries[0].l2.count, 2u);
}

TEST(Bundle, RerunReproducesEveryRow) {
    const auto dir = scratch("rerun");
    const auto b = run_suite(tiny_transfer(), 1);
    write_bundle(b, dir);
    for (std::size_t id : {std::size_t{0}, std::size_t{5}, b.rows.size() - 1}) {
        const auto r = rerun_cell(dir, id);
        EXPECT_TRUE(r.identical) << id << " stored " << r.stored_l2 << " got " << format_double(r.recomputed.l2);
        EXPECT_EQ(r.recomputed.row_id, id);
    }
    EXPECT_THROW(rerun_cell(dir, b.rows.size()), ContractError);
    fs::remove_all(dir);
}

TEST(Bundle, TransferRowsReportXi) {
    const auto b = run_suite(tiny_transfer(), 1);
    for (const auto &r : b.rows) {
        if (r.method == "satl") {
            EXPECT_GT(r.xi, 0.0);
            EXPECT_GE(r.selected_alpha_offset, 0.0);
        }
    }
    EXPECT_TRUE(b.rates.empty());
}

TEST(PlotData, SeriesCountAndFilters) {
    const auto dir = scratch("plot");
    const ExperimentConfig c = tiny_transfer();
    write_bundle(run_suite(c, 1), dir);
    EXPECT_EQ(emit_plot_data(dir, PlotKind::tl_curves), 16u);
    std::set<std::string> series;
    std::ifstream in(dir / "plot_tl_curves.tsv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x\tmean\tse\tseries");
    while (std::getline(in, line)) { series.insert(line.substr(line.rfind('\t') + 1)); }
    EXPECT_EQ(series.size(), c.transfer.h.size() * c.transfer.nu_delta.size() * c.transfer.methods.size());

    EXPECT_EQ(emit_plot_data(dir, PlotKind::tl_curves, std::set<std::string>{}, "sq", dir / "empty.tsv"), 0u);
    EXPECT_EQ(slurp(dir / "empty.tsv"), "x\tmean\tse\tseries\n");
    EXPECT_THROW(parse_plot_kind("scatter"), ContractError);
    EXPECT_THROW(emit_plot_data(dir, PlotKind::tl_curves, std::nullopt, "abs"), ContractError);
    fs::remove_all(dir);
}

TEST(PlotData, SingleRow) {
    const auto dir = scratch("plot1");
    ExperimentConfig c = tiny_transfer();
    c.trials = 1;
    c.transfer.n_source = {60};
    c.transfer.nu_delta = {2.01};
    c.transfer.h = {1.0};
    write_bundle(run_suite(c, 1), dir);
    EXPECT_EQ(emit_plot_data(dir, PlotKind::error_decay, std::set<std::string>{"satl"}), 1u);
    fs::remove_all(dir);
}

TEST(Rates, SlopesPerSeries) {
    const auto b = run_suite(tiny_adaptive(), 1);
    // 2 methods x 2 columns x 2 abscissae
    EXPECT_EQ(b.rates.size(), 8u);
    for (const auto &r : b.rates) {
        const double th = r.at("theoretical_slope").get<double>();
        EXPECT_DOUBLE_EQ(th, r.at("column") == "squared" ? -0.8 : -0.4);
    }
}
