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

// Acceptance run: executes the desk-scale experiment suites and prints one
// PASS/FAIL line per criterion. Exit status is nonzero if any criterion fails.
//
// Usage: acceptance [output-dir]   (bundles are written below output-dir)

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "satl/experiment.hpp"

using namespace satl;
using namespace satl::experiment;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string &name, const std::string &detail) {
    std::cout << "criterion " << id << " [" << (pass ? "PASS" : "FAIL") << "] " << name << ": " << detail << std::endl;
    if (!pass) { ++failures; }
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

/// Mean squared error keyed by the chosen abscissa for one method and filter.
std::vector<std::pair<double, double>> curve(const ResultsBundle &b, const std::string &method,
                                             const std::function<bool(const std::map<std::string, double> &)> &keep,
                                             const std::string &x = "n_target") {
    std::vector<std::pair<double, double>> out;
    for (const auto &s : b.summaries) {
        if (s.method == method && keep(s.setting)) { out.emplace_back(s.setting.at(x), s.squared.mean); }
    }
    return out;
}

ResultsBundle run_and_save(const ExperimentConfig &cfg, const fs::path &root) {
    const auto t0 = std::chrono::steady_clock::now();
    ResultsBundle b = run_suite(cfg, default_workers());
    write_bundle(b, root / to_string(cfg.suite));
    std::cout << "  ran " << to_string(cfg.suite) << " (" << b.rows.size() << " rows, " << b.failed << " failed) in "
              << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 3) << " s" << std::endl;
    return b;
}

auto nu_is(double nu) {
    return [nu](const std::map<std::string, double> &k) { return k.at("nu") == nu; };
}

std::string selected_c(const ResultsBundle &b) {
    std::string s;
    for (const auto &[k, v] : b.metadata.at("selected_C").items()) { s += (s.empty() ? "" : ", ") + k + " C=" + fmt(v.get<double>()); }
    return s;
}

// -- 1, 2 -----------------------------------------------------------------------

ExperimentConfig single_task(Suite suite) {
    ExperimentConfig c = default_config(suite);
    c.trials = 20;
    c.sigma = 0.5;
    c.n_grid = {500, 750, 1000, 1250, 1500, 1750, 2000};
    c.nu = {2.01, 3.01};
    c.candidates = {1, 2, 3, 4, 5};
    c.split = 0.5;
    c.lepski = false;
    c.c.mode = "cv";
    return c;
}

void criterion_rates(int id, const ResultsBundle &b, const std::string &method, RateAbscissa absc, double tol) {
    bool pass = true;
    std::string detail;
    for (double nu : {2.01, 3.01}) {
        const auto pts = curve(b, method, nu_is(nu));
        const double slope = fit_rate(pts, absc).slope;
        const double theory = theoretical_slope(std::round(nu));
        const bool ok = std::abs(slope - theory) <= tol;
        pass = pass && ok;
        detail += "nu=" + fmt(nu) + " slope " + fmt(slope) + " vs " + fmt(theory) + " (tol " + fmt(tol) + ")" + (ok ? "" : " OUT") + "; ";
    }
    detail += selected_c(b);
    report(id, pass,
           id == 1 ? "non-adaptive Gaussian KRR rate vs log n" : "adaptive (train/validate) rate vs log(n/log n)", detail);
}

// -- 3, 5 -----------------------------------------------------------------------

void criteria_growing(const fs::path &root) {
    ExperimentConfig c = default_config(Suite::tl_growing_target);
    c.trials = 20;
    c.transfer.n_target_grid = {50, 100, 150, 200, 250, 300};
    c.transfer.source_exponent = 1.5;
    c.transfer.nu_target = 1.01;
    c.transfer.nu_delta = {3.01};
    c.transfer.h = {1.0};
    c.transfer.methods = {"satl", "target_only"};
    c.c.pilots = 1;
    const ResultsBundle b = run_and_save(c, root);
    auto all = [](const std::map<std::string, double> &) { return true; };
    const auto satl = curve(b, "satl", all), tonly = curve(b, "target_only", all);
    bool pass3 = true;
    std::string d3;
    for (std::size_t i = 0; i < satl.size(); ++i) {
        if (satl[i].first < 100) { continue; }
        const bool ok = satl[i].second < tonly[i].second;
        pass3 = pass3 && ok;
        d3 += "n_T=" + fmt(satl[i].first) + " " + fmt(satl[i].second) + (ok ? " < " : " >= ") + fmt(tonly[i].second) + "; ";
    }
    report(3, pass3, "SATL below target-only at every n_T >= 100", d3 + selected_c(b));
    const double slope = fit_rate(satl).slope;
    report(5, slope <= -0.7, "growing-suite SATL rate envelope",
           "slope " + fmt(slope) + " (required <= -0.7, envelope " + fmt(theoretical_slope(3.0)) + ")");
}

// -- 4 ----------------------------------------------------------------------------

void criterion_plateau(const fs::path &root) {
    ExperimentConfig c = default_config(Suite::tl_fixed_target);
    // The head difference is small next to its per-trial spread, so use the full trial count.
    c.trials = 100;
    c.transfer.n_target = 50;
    c.transfer.n_source = {100, 250, 500, 1000, 1500, 2000};
    c.transfer.nu_delta = {2.01};
    c.transfer.h = {1.0};
    c.transfer.methods = {"satl", "target_only"};
    c.c.pilots = 2;
    const ResultsBundle b = run_and_save(c, root);
    std::map<double, double> m;
    for (auto [ns, e] : curve(b, "satl", [](const auto &) { return true; }, "n_source")) { m[ns] = e; }
    const bool decrease = m.at(2000) < m.at(100);
    const double tail = std::abs(m.at(2000) - m.at(1500));
    const double head = std::abs(m.at(250) - m.at(100));
    const bool level = tail < 0.25 * head;
    std::string d;
    for (auto [ns, e] : m) { d += fmt(ns) + ":" + fmt(e) + " "; }
    d += "| decrease " + std::string(decrease ? "yes" : "no") + ", |e2000-e1500|=" + fmt(tail) + " vs 0.25*|e250-e100|=" +
         fmt(0.25 * head) + "; " + selected_c(b);
    report(4, decrease && level, "fixed-n_T decrease then plateau in n_S", d);
}

// -- 6 ----------------------------------------------------------------------------

void criterion_saturation(const fs::path &root) {
    ExperimentConfig c = default_config(Suite::saturation_demo);
    c.trials = 20;
    c.saturation.nu_true = 3.01;
    c.saturation.imposed_nu = {2.5, 0.5};
    const ResultsBundle b = run_and_save(c, root);
    auto all = [](const std::map<std::string, double> &) { return true; };
    const double well = fit_rate(curve(b, "matern_nu_2.5", all)).slope;
    const double rough = fit_rate(curve(b, "matern_nu_0.5", all)).slope;
    report(6, rough - well >= 0.1, "saturation: imposed nu'=0.5 slope shallower than well-specified by >= 0.1",
           "nu'=2.5 slope " + fmt(well) + ", nu'=0.5 slope " + fmt(rough) + ", gap " + fmt(rough - well) + "; " + selected_c(b));
}

// -- 7 ----------------------------------------------------------------------------

Dataset sample(Eigen::Index n, std::uint64_t seed) {
    return make_dataset(sample_gp(MaternKernel(2.01, 0.2), 512, seed), n, 0.5, seed + 1, Domain::target);
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void criterion_properties(const fs::path &root) {
    std::vector<std::string> bad;
    auto check = [&](bool ok, const std::string &what) {
        if (!ok) { bad.push_back(what); }
    };

    // Gram PSD and jitter
    for (std::uint64_t s = 1; s <= 5; ++s) {
        const Dataset d = sample(80, s);
        for (const KernelSpec &k : {KernelSpec{GaussianKernel(0.1)}, KernelSpec{MaternKernel(2.01, 0.2)}, KernelSpec{MaternKernel(0.5, 0.3)}}) {
            const Matrix g = gram_matrix(k, d.x);
            Eigen::SelfAdjointEigenSolver<Matrix> es(g);
            check((g - g.transpose()).isZero(0.0) && es.eigenvalues().minCoeff() >= -1e-10, "gram psd " + describe(k));
        }
    }
    {
        const Dataset d = sample(200, 9);
        const GramMatrix g = gram(GaussianKernel(5.0), d.x);
        check(g.jitter > 0.0 && g.cholesky.info() == Eigen::Success, "jitter escalation");
    }
    // Matern closed forms vs Bessel path
    for (double nu : {0.5, 1.5, 2.5}) {
        const MaternKernel k(nu, 0.4);
        for (int i = 0; i <= 200; ++i) {
            check(std::abs(k.at_distance(0.01 * i) - k.at_distance_bessel(0.01 * i)) <= 1e-8, "matern closed form nu=" + fmt(nu));
        }
    }
    // KRR interpolation, shrinkage, linearity, oracle solve
    {
        Dataset d;
        d.x.resize(15, 1);
        d.y.resize(15);
        for (int i = 0; i < 15; ++i) {
            d.x(i, 0) = (i + 0.5) / 15;
            d.y(i) = std::sin(7.0 * i);
        }
        const FittedKrr m = fit(GaussianKernel(0.03), d, 1e-14);
        check((m.predict(d.x) - d.y).cwiseAbs().maxCoeff() < 1e-8, "krr interpolation");
        const Dataset e = sample(60, 21), f = sample(60, 22);
        const KernelSpec k = GaussianKernel(0.1);
        const Matrix g = gram_matrix(k, e.x);
        double prev = std::numeric_limits<double>::infinity();
        for (double lam : {1e-6, 1e-3, 1.0, 1e3}) {
            const FittedKrr fm = fit_from_gram(k, e, g, lam);
            const double norm = fm.coefficients().dot(g * fm.coefficients());
            check(norm < prev, "krr shrinkage");
            prev = norm;
        }
        const FittedKrr fa = fit(k, e, 1e-3), fb = fit(k, e.with_responses(f.y), 1e-3);
        const FittedKrr fc = fit(k, e.with_responses(e.y + 3.0 * f.y), 1e-3);
        check((fc.coefficients() - fa.coefficients() - 3.0 * fb.coefficients()).cwiseAbs().maxCoeff() <=
                  1e-10 * fc.coefficients().cwiseAbs().maxCoeff(),
              "krr linearity");
        Matrix a = g;
        a.diagonal().array() += 60 * 1e-3;
        const Vector want = a.fullPivLu().solve(e.y);
        check((fa.coefficients() - want).norm() <= 1e-10 * want.norm(), "krr oracle solve");
    }
    // Simpson exactness on cubics
    check(std::abs(simpson_integral([](double x) { return 4 * x * x * x - 3 * x * x + x - 2; }, 3) + 1.5) < 1e-15, "simpson cubic");
    // FBE normal equations
    {
        const Dataset d = sample(200, 31);
        for (auto kind : {BasisKind::fourier, BasisKind::bspline}) {
            const FbeModel m = fit_fbe(d, kind, 10);
            const Matrix x = FbeModel::design(kind, 10, d.x);
            check((x.transpose() * (d.y - x * m.coefficients())).cwiseAbs().maxCoeff() < 1e-9, "fbe orthogonality");
        }
    }
    // SATL additivity and phase isolation
    {
        const auto sc = make_transfer_scenario(1.01, 3.01, 1.0, 0.5, 512, 41, 42);
        const Dataset src = make_dataset(sc.source, 300, 0.5, 43, Domain::source);
        const Dataset t1 = make_dataset(sc.target, 60, 0.5, 44, Domain::target);
        const Dataset t2 = make_dataset(sc.target, 70, 0.5, 45, Domain::target);
        const auto grid = build_grid({1, 2, 3, 4, 5});
        const SatlModel a = fit_satl(src, t1, grid, grid, GaussianKernel(0.2));
        const SatlModel b = fit_satl(src, t2, grid, grid, GaussianKernel(0.2));
        const Points q = quadrature_nodes(101);
        check((a.predict(q) - a.source.predict(q) - a.offset.predict(q)).cwiseAbs().maxCoeff() <= 1e-12, "satl additivity");
        check(a.source.coefficients() == b.source.coefficients(), "satl phase isolation");
        const auto [s1, fs1] = select_train_validate(src, grid, GaussianKernel(0.2));
        const auto [s2, fd] = select_train_validate(t1.with_responses(t1.y - fs1.predict(t1.x)), grid, GaussianKernel(0.2));
        check((a.predict(q) - fs1.predict(q) - fd.predict(q)).cwiseAbs().maxCoeff() <= 1e-12, "satl composition");
    }
    // Bundle byte determinism under different worker counts
    {
        ExperimentConfig c = default_config(Suite::tl_growing_target);
        c.trials = 3;
        c.transfer.n_target_grid = {40, 60};
        c.transfer.nu_delta = {2.01, 3.01};
        c.transfer.h = {1.0};
        c.transfer.methods = {"satl", "target_only", "fbe_bspline", "fbe_fourier"};
        c.c.pilots = 1;
        c.c.grid = {0.5, 1, 2};
        c.c.folds = 3;
        const fs::path d1 = root / "determinism_w1", d4 = root / "determinism_w4";
        write_bundle(Runner(c).run(1), d1);
        write_bundle(Runner(c).run(4), d4);
        for (const char *f : {"raw.csv", "aggregated.csv", "rates.json", "metadata.json"}) {
            check(slurp(d1 / f) == slurp(d4 / f), std::string("bundle determinism ") + f);
        }
    }
    std::string detail = bad.empty() ? "all property checks hold" : "";
    for (const auto &b : bad) { detail += b + "; "; }
    report(7, bad.empty(), "property suites and byte determinism", detail);
}

}  // namespace

int main(int argc, char **argv) {
    const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_results");
    fs::create_directories(root);
    std::cout << "satl acceptance " << kVersion << ", workers " << default_workers() << ", output " << root << std::endl;
    try {
        criterion_properties(root);
        const ResultsBundle nonadaptive = run_and_save(single_task(Suite::target_only_nonadaptive), root);
        criterion_rates(1, nonadaptive, "krr_fixed", RateAbscissa::log_n, 0.15);
        const ResultsBundle adaptive = run_and_save(single_task(Suite::target_only_adaptive), root);
        criterion_rates(2, adaptive, "krr_train_validate", RateAbscissa::log_n_over_log_n, 0.20);
        criteria_growing(root);
        criterion_plateau(root);
        criterion_saturation(root);
    } catch (const std::exception &e) {
        std::cout << "acceptance aborted: " << e.what() << std::endl;
        return 2;
    }
    std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
