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

// satl: run simulation suites, select C, emit plot data, rerun single cells.
//
// Exit codes: 0 success, 1 partial cell failures, 2 config / usage error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "satl/experiment.hpp"

namespace fs = std::filesystem;
namespace ex = satl::experiment;

namespace {

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kConfigError = 2;

int cmd_run(const std::string &config_path, const std::string &out_override, bool full_scale, int workers) {
    ex::ExperimentConfig cfg = ex::load_config(config_path);
    if (full_scale) { ex::apply_full_scale(cfg); }
    if (!out_override.empty()) { cfg.output_dir = out_override; }
    const fs::path out = cfg.output_dir;
    std::cerr << "running " << ex::to_string(cfg.suite) << " with " << workers << " worker(s) -> " << out << "\n";
    const ex::ResultsBundle b = ex::run_suite(cfg, workers, &std::cerr);
    ex::write_bundle(b, out);
    ex::print_summary(b, std::cout);
    return b.failed > 0 ? kPartial : kOk;
}

int cmd_select_c(const std::string &config_path) {
    ex::ExperimentConfig cfg = ex::load_config(config_path);
    if (cfg.c.mode == "best_over_grid") {
        std::cout << "C.mode is best_over_grid: every grid value is run as its own series\n";
        return kOk;
    }
    ex::Runner runner(cfg);
    const auto &table = runner.resolve_C();
    for (const auto &[key, c] : table) { std::cout << key << "\t" << satl::format_double(c) << "\n"; }
    if (!runner.c_log().empty()) { std::cerr << runner.c_log().dump(2) << "\n"; }
    return kOk;
}

int cmd_plot(const std::string &bundle, const std::string &kind, const std::optional<std::string> &methods,
             const std::string &column, const std::string &out) {
    std::optional<std::set<std::string>> filter;
    if (methods) {
        filter.emplace();
        std::stringstream ss(*methods);
        std::string m;
        while (std::getline(ss, m, ',')) {
            if (!m.empty()) { filter->insert(m); }
        }
    }
    const std::size_t n = ex::emit_plot_data(bundle, ex::parse_plot_kind(kind), filter, column, out);
    std::cerr << n << " data rows written\n";
    return kOk;
}

int cmd_rerun(const std::string &bundle, std::size_t row_id) {
    const auto r = ex::rerun_cell(bundle, row_id);
    std::cout << "row " << row_id << " method " << r.recomputed.method << " trial " << r.recomputed.trial
              << " status " << r.recomputed.status << "\n"
              << "stored l2   " << r.stored_l2 << "\n"
              << "recomputed  " << satl::format_double(r.recomputed.l2) << "\n"
              << (r.identical ? "identical" : "MISMATCH") << "\n";
    return r.identical ? kOk : kPartial;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Smoothness-adaptive transfer learning simulations"};
    app.require_subcommand(1);
    int workers = ex::default_workers();
    app.add_option("-j,--workers", workers, "Worker threads (default: SATL_WORKERS or hardware concurrency)")
        ->check(CLI::PositiveNumber);

    std::string config_path, out_dir;
    bool full_scale = false;
    auto *run = app.add_subcommand("run", "Run a simulation suite and write a result bundle");
    run->add_option("config", config_path, "Suite config (JSON)")->required();
    run->add_option("-o,--out", out_dir, "Output directory (overrides output_dir)");
    run->add_flag("--full-scale", full_scale, "100 trials, n = 1000..3000 step 100");

    auto *select = app.add_subcommand("select-c", "Resolve the regularization constants for a config");
    select->add_option("config", config_path, "Suite config (JSON)")->required();

    std::string bundle, kind = "error_decay", column = "sq", plot_out;
    std::optional<std::string> methods;
    auto *plot = app.add_subcommand("plot-data", "Emit plot-ready TSV from a bundle");
    plot->add_option("bundle", bundle, "Result bundle directory")->required();
    plot->add_option("--kind", kind, "error_decay | tl_curves");
    plot->add_option("--methods", methods, "Comma-separated method filter");
    plot->add_option("--column", column, "sq | l2");
    plot->add_option("-o,--out", plot_out, "Output file (default: <bundle>/plot_<kind>.tsv)");

    std::size_t row_id = 0;
    auto *rerun = app.add_subcommand("rerun-cell", "Recompute one raw row and compare with the stored value");
    rerun->add_option("bundle", bundle, "Result bundle directory")->required();
    rerun->add_option("row-id", row_id, "Row id from raw.csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) { return cmd_run(config_path, out_dir, full_scale, workers); }
        if (*select) { return cmd_select_c(config_path); }
        if (*plot) { return cmd_plot(bundle, kind, methods, column, plot_out); }
        if (*rerun) { return cmd_rerun(bundle, row_id); }
    } catch (const satl::ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const satl::ContractError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kPartial;
    }
    return kOk;
}
