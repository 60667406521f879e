// Command-line front end: hierarchy optimization tables, continuation runs
// across (tolerance, seed) grids, tolerance sweeps with complexity slopes,
// and a self-check suite. Exit codes: 0 success, 1 run failure, 2 config
// error.

#include "mlmc/engine.hpp"
#include "mlmc/geometric.hpp"
#include "mlmc/hierarchy.hpp"
#include "mlmc/presets.hpp"
#include "mlmc/stats.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using nlohmann::json;

struct ExperimentConfig {
    mlmc::Preset preset = mlmc::preset_by_name("ex2");
    mlmc::ModeSpec mode{mlmc::HierarchyMode::optimal_nongeometric, {}, {}};
    std::string mode_name = "optimal";
    std::vector<double> tolerances{0.02};
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir = "out";
    int workers = 0;
    bool write_traces = false;
};

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void parse_mode(ExperimentConfig& cfg, const std::string& name,
                std::optional<double> theta, std::optional<double> beta) {
    cfg.mode_name = name;
    if (name == "optimal") {
        cfg.mode.mode = mlmc::HierarchyMode::optimal_nongeometric;
    } else if (name == "geometric") {
        cfg.mode.mode = mlmc::HierarchyMode::geometric;
        cfg.mode.beta = beta;
    } else if (name == "fixed_theta") {
        cfg.mode.mode = mlmc::HierarchyMode::fixed_theta;
        if (!theta) throw CLI::ValidationError("mode", "fixed_theta requires --theta");
        cfg.mode.theta = theta;
    } else {
        throw CLI::ValidationError("mode", "unknown mode: " + name);
    }
}

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("config", "cannot open " + path);
    json j = json::parse(in);

    if (j.contains("preset")) cfg.preset = mlmc::preset_by_name(j["preset"].get<std::string>());
    if (j.contains("problem")) {
        const json& p = j["problem"];
        auto& rates = cfg.preset.rates;
        auto& k = cfg.preset.constants;
        rates.q1 = p.value("q1", rates.q1);
        rates.q2 = p.value("q2", rates.q2);
        rates.d = p.value("d", rates.d);
        rates.gamma = p.value("gamma", rates.gamma);
        k.qw = p.value("qw", k.qw);
        k.qs = p.value("qs", k.qs);
        k.v0 = p.value("v0", k.v0);
        k.c_alpha = p.value("c_alpha", k.c_alpha);
        cfg.preset.h_max = p.value("h_max", cfg.preset.h_max);
        if (p.contains("h_min")) cfg.preset.h_min = p["h_min"].get<double>();
        std::string sampler = p.value("sampler", std::string());
        double mean = p.value("mean", cfg.preset.reference_value);
        cfg.preset.reference_value = mean;
        if (sampler == "synthetic" || (sampler.empty() && p.contains("mean"))) {
            cfg.preset.sampler = std::make_shared<mlmc::SyntheticSampler>(
                mlmc::SyntheticParams{mean, k, rates});
        } else if (sampler == "gbm") {
            mlmc::GbmParams gbm;
            gbm.drift = p.value("drift", gbm.drift);
            gbm.vol = p.value("vol", gbm.vol);
            gbm.payoff_scale = p.value("payoff_scale", gbm.payoff_scale);
            gbm.strike = p.value("strike", gbm.strike);
            gbm.u0 = p.value("u0", gbm.u0);
            gbm.discount_rate = p.value("discount_rate", gbm.drift);
            auto ptr = std::make_shared<mlmc::GbmMilsteinSampler>(gbm);
            cfg.preset.reference_value = ptr->params().exact_value();
            cfg.preset.sampler = std::move(ptr);
        } else if (!sampler.empty()) {
            throw CLI::ValidationError("config", "unknown sampler: " + sampler);
        }
    }
    if (j.contains("continuation")) {
        const json& c = j["continuation"];
        auto& cc = cfg.preset.continuation;
        cc.tol_max = c.value("tol_max", cc.tol_max);
        cc.r1 = c.value("r1", cc.r1);
        cc.r2 = c.value("r2", cc.r2);
        cc.l_inc = c.value("l_inc", cc.l_inc);
        cc.calib_levels = c.value("calib_levels", cc.calib_levels);
        cc.kappa0 = c.value("kappa0", cc.kappa0);
        cc.kappa1 = c.value("kappa1", cc.kappa1);
        cc.max_iterations = c.value("max_iterations", cc.max_iterations);
        if (c.contains("initial_hierarchy"))
            cc.initial_hierarchy = c["initial_hierarchy"].get<mlmc::Hierarchy>();
    }
    if (j.contains("tolerances")) cfg.tolerances = j["tolerances"].get<std::vector<double>>();
    if (j.contains("seeds")) {
        if (j["seeds"].is_number_integer()) {
            std::uint64_t n = j["seeds"].get<std::uint64_t>();
            cfg.seeds.clear();
            for (std::uint64_t s = 0; s < n; ++s) cfg.seeds.push_back(s);
        } else {
            cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        }
    }
    if (j.contains("mode"))
        parse_mode(cfg, j["mode"].get<std::string>(),
                   j.contains("theta") ? std::optional<double>(j["theta"].get<double>())
                                       : std::nullopt,
                   j.contains("beta") ? std::optional<double>(j["beta"].get<double>())
                                      : std::nullopt);
    if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("workers")) cfg.workers = j["workers"].get<int>();
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.tolerances.empty()) throw CLI::ValidationError("tol", "needs at least one tolerance");
    for (std::size_t i = 0; i < cfg.tolerances.size(); ++i) {
        if (!(cfg.tolerances[i] > 0.0))
            throw CLI::ValidationError("tol", "tolerances must be positive");
        if (i > 0 && cfg.tolerances[i] >= cfg.tolerances[i - 1])
            throw CLI::ValidationError("tol", "tolerances must be sorted descending");
    }
    if (cfg.seeds.empty()) throw CLI::ValidationError("seeds", "needs at least one seed");
}

std::ofstream open_output(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + name + " in " + dir);
    return out;
}

// ---------------------------------------------------------------------------
// optimize

int cmd_optimize(const ExperimentConfig& cfg) {
    auto csv = open_output(cfg.output_dir, "optimize.csv");
    csv << "tol,feasible,L_opt,theta_opt,work_real,work_rounded,L_lo,L_hi,"
           "beta_geo,h0_geo,L_geo,theta_geo,work_geo\n";
    json hierarchies = json::array();

    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (double tol : cfg.tolerances) {
        mlmc::OptimalSetup setup = cfg.preset.setup(tol);
        json row{{"tol", tol}};
        try {
            auto [levels, best] = mlmc::optimal_L(setup);
            mlmc::Hierarchy rounded =
                mlmc::round_hierarchy(best.hierarchy, cfg.preset.mesh_rule());
            double work_rounded = mlmc::total_work(rounded, setup.rates);
            auto geo = mlmc::best_geometric_hierarchy(setup, cfg.mode.beta);
            double l_lo = nan, l_hi = nan;
            try {
                std::tie(l_lo, l_hi) = mlmc::l_bounds(setup);
            } catch (const mlmc::infeasible_error&) {
                // bounds undefined at this tolerance; leave the columns empty
            }
            csv << format_double(tol) << ",1," << levels << ','
                << format_double(best.theta) << ',' << format_double(best.predicted_work)
                << ',' << format_double(work_rounded) << ',' << format_double(l_lo) << ','
                << format_double(l_hi) << ','
                << format_double(cfg.mode.beta ? *cfg.mode.beta
                                               : mlmc::optimal_beta(setup.rates))
                << ',' << format_double(geo.hierarchy.mesh_sizes[0]) << ',' << geo.levels
                << ',' << format_double(geo.theta) << ','
                << format_double(geo.predicted_work) << '\n';
            row["real"] = best.hierarchy;
            row["rounded"] = rounded;
            row["geometric"] = geo.hierarchy;
            row["rounded_geometric"] =
                mlmc::round_hierarchy(geo.hierarchy, cfg.preset.mesh_rule());
        } catch (const mlmc::infeasible_error& e) {
            csv << format_double(tol) << ",0,,,,,,,,,,,\n";
            row["infeasible"] = e.what();
            std::cerr << "optimize: tol " << tol << " infeasible: " << e.what() << "\n";
        }
        hierarchies.push_back(std::move(row));
    }
    auto jout = open_output(cfg.output_dir, "hierarchies.json");
    jout << hierarchies.dump(2) << '\n';
    std::cout << "optimize: wrote " << cfg.output_dir << "/optimize.csv and hierarchies.json\n";
    return 0;
}

// ---------------------------------------------------------------------------
// run / sweep

struct RunOutcome {
    double tol = 0.0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    mlmc::RunReport report;
};

std::vector<RunOutcome> execute_grid(const ExperimentConfig& cfg) {
    std::vector<std::pair<double, std::uint64_t>> grid;
    for (double tol : cfg.tolerances)
        for (std::uint64_t seed : cfg.seeds) grid.emplace_back(tol, seed);

    std::vector<RunOutcome> outcomes(grid.size());
    auto run_one = [&](std::size_t i, int engine_workers) {
        auto [tol, seed] = grid[i];
        RunOutcome& out = outcomes[i];
        out.tol = tol;
        out.seed = seed;
        try {
            mlmc::OptimalSetup setup = cfg.preset.setup(tol);
            out.report = mlmc::cmlmc(cfg.preset.continuation, setup, *cfg.preset.sampler,
                                     cfg.mode, cfg.preset.mesh_rule(), seed, engine_workers);
        } catch (const mlmc::convergence_error& e) {
            out.failed = true;
            out.error = e.what();
            out.report = e.partial;
        } catch (const std::exception& e) {
            out.failed = true;
            out.error = e.what();
        }
    };

    if (grid.size() == 1) {
        run_one(0, cfg.workers);
    } else {
#ifdef _OPENMP
        int pool = cfg.workers > 0 ? cfg.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(pool)
#endif
        for (std::size_t i = 0; i < grid.size(); ++i) run_one(i, 1);
    }
    return outcomes;
}

struct TolSummary {
    double tol;
    std::size_t runs = 0, failures = 0;
    double work_median = 0, work_q05 = 0, work_q95 = 0;
    double err_median = 0, err_q05 = 0, err_q95 = 0;
    double exceed_fraction = 0;
};

std::vector<TolSummary> summarize(const ExperimentConfig& cfg,
                                  const std::vector<RunOutcome>& outcomes) {
    std::vector<TolSummary> summaries;
    for (double tol : cfg.tolerances) {
        TolSummary s;
        s.tol = tol;
        std::vector<double> works, errors;
        std::size_t exceed = 0;
        for (const auto& out : outcomes) {
            if (out.tol != tol) continue;
            ++s.runs;
            if (out.failed) {
                ++s.failures;
                continue;
            }
            double err = std::abs(out.report.estimate - cfg.preset.reference_value);
            works.push_back(out.report.total_work);
            errors.push_back(err);
            if (err > tol) ++exceed;
        }
        if (!works.empty()) {
            s.work_median = mlmc::median(works);
            s.work_q05 = mlmc::quantile(works, 0.05);
            s.work_q95 = mlmc::quantile(works, 0.95);
            s.err_median = mlmc::median(errors);
            s.err_q05 = mlmc::quantile(errors, 0.05);
            s.err_q95 = mlmc::quantile(errors, 0.95);
            s.exceed_fraction = static_cast<double>(exceed) / works.size();
        }
        summaries.push_back(s);
    }
    return summaries;
}

void write_summary_csv(const ExperimentConfig& cfg, const std::vector<TolSummary>& summaries,
                       const std::string& filename) {
    auto csv = open_output(cfg.output_dir, filename);
    csv << "tol,runs,failures,work_median,work_q05,work_q95,"
           "err_median,err_q05,err_q95,exceed_fraction\n";
    for (const auto& s : summaries) {
        csv << format_double(s.tol) << ',' << s.runs << ',' << s.failures << ','
            << format_double(s.work_median) << ',' << format_double(s.work_q05) << ','
            << format_double(s.work_q95) << ',' << format_double(s.err_median) << ','
            << format_double(s.err_q05) << ',' << format_double(s.err_q95) << ','
            << format_double(s.exceed_fraction) << '\n';
    }
}

int write_run_outputs(const ExperimentConfig& cfg, const std::vector<RunOutcome>& outcomes) {
    json runs = json::array();
    for (const auto& out : outcomes) {
        json entry{{"tol", out.tol}, {"seed", out.seed}, {"failed", out.failed}};
        if (out.failed)
            entry["error"] = out.error;
        else
            entry["report"] = out.report;
        entry["error_vs_reference"] =
            out.failed ? json() : json(std::abs(out.report.estimate - cfg.preset.reference_value));
        runs.push_back(std::move(entry));
        if (cfg.write_traces && !out.failed) {
            char name[64];
            std::snprintf(name, sizeof(name), "trace-%.6g-%llu.csv", out.tol,
                          static_cast<unsigned long long>(out.seed));
            auto trace = open_output(cfg.output_dir, name);
            trace << mlmc::iteration_trace_csv(out.report);
        }
    }
    auto jout = open_output(cfg.output_dir, "runs.json");
    jout << runs.dump(2) << '\n';

    auto summaries = summarize(cfg, outcomes);
    write_summary_csv(cfg, summaries, "summary.csv");

    int failures = 0;
    for (const auto& s : summaries) {
        failures += static_cast<int>(s.failures);
        std::printf("tol %-10g runs %-4zu exceed %5.1f%%  work median %.4g  "
                    "(~%.3g s at %.1e s/unit)\n",
                    s.tol, s.runs, 100.0 * s.exceed_fraction, s.work_median,
                    s.work_median * cfg.preset.work_to_seconds, cfg.preset.work_to_seconds);
    }
    if (failures > 0) {
        std::cerr << "run: " << failures << " run(s) failed\n";
        return 1;
    }
    return 0;
}

int cmd_run(const ExperimentConfig& cfg) {
    auto outcomes = execute_grid(cfg);
    return write_run_outputs(cfg, outcomes);
}

int cmd_sweep(const ExperimentConfig& cfg) {
    if (cfg.tolerances.size() < 2)
        throw CLI::ValidationError("tol", "sweep needs at least two tolerances");
    auto outcomes = execute_grid(cfg);
    auto summaries = summarize(cfg, outcomes);
    write_summary_csv(cfg, summaries, "sweep.csv");

    std::vector<double> lx, ly;
    int failures = 0;
    for (const auto& s : summaries) {
        failures += static_cast<int>(s.failures);
        if (s.runs > s.failures) {
            lx.push_back(std::log(s.tol));
            ly.push_back(std::log(s.work_median));
        }
    }
    if (lx.size() >= 2) {
        double slope = mlmc::fit_line(lx, ly).slope;
        std::printf("sweep: %zu tolerances, log-log work slope %.4f\n", lx.size(), slope);
        auto expected = mlmc::asymptotic_work_constants(cfg.preset.rates, cfg.preset.constants);
        std::printf("sweep: model complexity exponent %.4f%s\n", -expected.rate_exponent,
                    expected.regime == mlmc::ComplexityCase::chi_equal_one
                        ? " (times log(tol)^2)"
                        : "");
    }
    return failures > 0 ? 1 : 0;
}

// ---------------------------------------------------------------------------
// validate

int cmd_validate(double perturb) {
    struct Check {
        std::string name;
        bool pass;
        std::string detail;
    };
    std::vector<Check> checks;
    auto add = [&](const std::string& name, bool pass, const std::string& detail) {
        checks.push_back({name, pass, detail});
    };

    // Reference level separations.
    {
        double b1 = mlmc::optimal_beta(mlmc::ProblemRates{2, 4, 3, 1.0});
        double b2 = mlmc::optimal_beta(mlmc::ProblemRates{2, 4, 3, 1.5});
        double b3 = mlmc::optimal_beta(mlmc::ProblemRates{1, 2, 1, 1.0});
        char detail[96];
        std::snprintf(detail, sizeof(detail), "beta = %.4f / %.4f / %.4f", b1, b2, b3);
        add("beta-table", std::abs(b1 - 1.7778) < 5e-5 && std::abs(b2 - 1.6018) < 5e-5 &&
                              std::abs(b3 - 4.0) < 5e-5,
            detail);
    }

    // Closed-form split against golden-section minimization.
    {
        bool ok = true;
        double worst = 0.0;
        mlmc::RngStream rng(2718, 0, 0);
        for (int rep = 0; rep < 10; ++rep) {
            double chi;
            do {
                chi = 0.3 + 2.7 * rng.uniform();
            } while (std::abs(chi - 1.0) < 1e-3);
            double eta = 0.5 * chi * (1.0 + rng.uniform());
            int levels = static_cast<int>(rng.uniform() * 6);
            mlmc::ProblemRates rates{eta * 2.0, chi * 2.0, 2, 1.0};
            double exponent = (1.0 - chi) / (1.0 - std::pow(chi, levels + 1)) / eta;
            // golden section on theta^-2 (1-theta)^-exponent
            double lo = 1e-9, hi = 1.0 - 1e-9;
            const double inv_phi = 0.6180339887498948482;
            auto f = [&](double t) {
                return -2.0 * std::log(t) - exponent * std::log(1.0 - t);
            };
            double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
            double f1 = f(x1), f2 = f(x2);
            while (hi - lo > 1e-12) {
                if (f1 < f2) {
                    hi = x2; x2 = x1; f2 = f1;
                    x1 = hi - inv_phi * (hi - lo); f1 = f(x1);
                } else {
                    lo = x1; x1 = x2; f1 = f2;
                    x2 = lo + inv_phi * (hi - lo); f2 = f(x2);
                }
            }
            double brute = 0.5 * (lo + hi);
            worst = std::max(worst, std::abs(brute - mlmc::optimal_theta(rates, levels)));
            ok = ok && worst < 1e-8;
        }
        add("theta-brute-force", ok, "max |closed - brute| = " + format_double(worst));
    }

    // Difference-equation residuals of generated hierarchies.
    {
        bool ok = true;
        double worst = 0.0;
        for (const auto& name : mlmc::preset_names()) {
            mlmc::Preset p = mlmc::preset_by_name(name);
            for (double tol : {1e-2, 1e-3}) {
                auto [levels, oh] = mlmc::optimal_L(p.setup(tol));
                (void)levels;
                auto meshes = oh.hierarchy.mesh_sizes;
                for (std::size_t l = 1; l + 1 < meshes.size(); ++l) meshes[l] *= perturb;
                double chi = p.rates.chi();
                for (std::size_t l = 1; l + 1 < meshes.size(); ++l) {
                    double res = -std::log(meshes[l + 1]) +
                                 (1.0 + chi) * std::log(meshes[l]) -
                                 chi * std::log(meshes[l - 1]) +
                                 2.0 / p.rates.dgamma() * std::log(chi);
                    worst = std::max(worst, std::abs(res));
                }
            }
        }
        ok = worst < 1e-10;
        add("difference-equation", ok, "max residual = " + format_double(worst));
    }

    // chi -> 1 continuity.
    {
        bool ok = true;
        mlmc::ModelConstants k{1.1, 0.6, 1.9, 2.0};
        for (double eps : {1e-6, -1e-6}) {
            mlmc::OptimalSetup near, at;
            near.rates = mlmc::ProblemRates{1.5, 2.0 * (1.0 + eps), 2, 1.0};
            at.rates = mlmc::ProblemRates{1.5, 2.0, 2, 1.0};
            near.constants = at.constants = k;
            near.tol = at.tol = 1e-3;
            auto a = mlmc::optimal_hierarchy_fixed_L(near, 4);
            auto b = mlmc::optimal_hierarchy_fixed_L(at, 4);
            for (int l = 0; l <= 4; ++l)
                ok = ok && std::abs(a.hierarchy.mesh_sizes[l] / b.hierarchy.mesh_sizes[l] -
                                    1.0) < 1e-3;
            ok = ok && std::abs(a.theta - b.theta) < 1e-3;
        }
        add("chi-continuity", ok, "evaluated at chi = 1 +/- 1e-6");
    }

    // Milstein rate fit at reduced scale.
    {
        mlmc::GbmMilsteinSampler sampler;
        std::vector<double> lh, lm, lv;
        for (int k = 0; k < 4; ++k) {
            double h = 1.0 / (4 << k);
            auto acc = mlmc::sample_level_blocked(sampler, 1, h, 2.0 * h, 31415, 0, 20000);
            lh.push_back(std::log(h));
            lm.push_back(std::log(std::abs(acc.mean)));
            lv.push_back(std::log(acc.variance()));
        }
        double q1 = mlmc::fit_line(lh, lm).slope;
        double q2 = mlmc::fit_line(lh, lv).slope;
        char detail[64];
        std::snprintf(detail, sizeof(detail), "q1 = %.3f, q2 = %.3f", q1, q2);
        add("milstein-rates", std::abs(q1 - 1.0) < 0.3 && std::abs(q2 - 2.0) < 0.3, detail);
    }

    // Factored-work identity and geometric near-optimality.
    {
        bool ok = true;
        for (const auto& name : mlmc::preset_names()) {
            mlmc::Preset p = mlmc::preset_by_name(name);
            auto setup = p.setup(0.02);
            double theta = mlmc::optimal_theta(p.rates, 3);
            double direct = mlmc::predicted_work(setup, 3, theta);
            double factored = mlmc::predicted_work_factored(setup, 3, theta);
            ok = ok && std::abs(direct / factored - 1.0) < 1e-9;
            auto geo = mlmc::best_geometric_hierarchy(setup);
            auto [levels, opt] = mlmc::optimal_L(setup);
            (void)levels;
            ok = ok && geo.predicted_work <= 1.5 * opt.predicted_work;
        }
        add("work-forms-and-geometric", ok, "factored identity, ratio <= 1.5");
    }

    bool all = true;
    for (const auto& c : checks) {
        std::printf("[%s] %-26s %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                    c.detail.c_str());
        all = all && c.pass;
    }
    return all ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal multilevel Monte Carlo hierarchies: closed-form optimizers and a "
                 "continuation MLMC driver"};
    app.require_subcommand(1);

    ExperimentConfig cfg;
    std::string config_path, preset_name, mode_name;
    std::vector<double> tol_flags;
    std::optional<double> theta_flag, beta_flag;
    long long seeds_count = -1;
    std::uint64_t seed_base = 0;
    bool seed_given = false;
    std::string out_flag;
    int workers_flag = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON experiment description");
        cmd->add_option("--preset", preset_name, "problem preset (ex1-gmres, ex1-mumps, ex2)");
        cmd->add_option("--tol", tol_flags, "tolerances, descending");
        cmd->add_option("--mode", mode_name, "hierarchy mode: optimal, geometric, fixed_theta");
        cmd->add_option("--theta", [&theta_flag](const std::vector<std::string>& v) {
            theta_flag = std::stod(v[0]);
            return true;
        }, "split for fixed_theta mode")->expected(1);
        cmd->add_option("--beta", [&beta_flag](const std::vector<std::string>& v) {
            beta_flag = std::stod(v[0]);
            return true;
        }, "level separation override for geometric mode")->expected(1);
        cmd->add_option("--out", out_flag, "output directory");
        cmd->add_option("--workers", workers_flag, "worker threads (0 = all cores)");
        cmd->add_option("--seeds", seeds_count, "number of seeds (0..n-1)");
        cmd->add_option("--seed", [&](const std::vector<std::string>& v) {
            seed_base = std::stoull(v[0]);
            seed_given = true;
            return true;
        }, "single explicit seed")->expected(1);
    };

    auto* optimize = app.add_subcommand("optimize", "hierarchy tables per tolerance");
    add_common(optimize);
    auto* run = app.add_subcommand("run", "continuation MLMC over (tolerance, seed) grid");
    add_common(run);
    run->add_flag("--traces", cfg.write_traces, "write per-run iteration trace CSVs");
    auto* sweep = app.add_subcommand("sweep", "work-vs-tolerance sweep with slope fit");
    add_common(sweep);
    sweep->add_flag("--traces", cfg.write_traces, "write per-run iteration trace CSVs");
    auto* validate = app.add_subcommand("validate", "self-check matrix of the closed forms");
    double perturb = 1.0;
    validate->add_option("--perturb", perturb,
                         "test hook: scale interior meshes before the residual check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (validate->parsed()) return cmd_validate(perturb);

        if (!config_path.empty()) apply_config_file(cfg, config_path);
        if (!preset_name.empty()) cfg.preset = mlmc::preset_by_name(preset_name);
        if (!mode_name.empty()) parse_mode(cfg, mode_name, theta_flag, beta_flag);
        if (cfg.mode.mode == mlmc::HierarchyMode::geometric && beta_flag) cfg.mode.beta = beta_flag;
        if (!out_flag.empty()) cfg.output_dir = out_flag;
        if (workers_flag >= 0) cfg.workers = workers_flag;
        if (!tol_flags.empty()) cfg.tolerances = tol_flags;
        if (seeds_count >= 0) {
            cfg.seeds.clear();
            for (long long s = 0; s < seeds_count; ++s)
                cfg.seeds.push_back(static_cast<std::uint64_t>(s));
        }
        if (seed_given) cfg.seeds = {seed_base};
        validate_config(cfg);

        if (optimize->parsed()) return cmd_optimize(cfg);
        if (run->parsed()) return cmd_run(cfg);
        if (sweep->parsed()) return cmd_sweep(cfg);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
