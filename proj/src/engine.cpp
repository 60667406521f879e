#include "mlmc/engine.hpp"

#include "mlmc/geometric.hpp"
#include "mlmc/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mlmc {

namespace {

// Fixed accumulation block. Block boundaries depend only on the sample
// indices, so the blocked kernel's merge order, and therefore its result,
// is the same for every worker count.
constexpr std::int64_t kSampleBlock = 4096;

WelfordAccumulator accumulate_range(const Sampler& sampler, int level, double h_fine,
                                    double h_coarse, std::uint64_t seed, std::uint64_t first,
                                    std::int64_t count) {
    WelfordAccumulator acc;
    for (std::int64_t m = 0; m < count; ++m) {
        RngStream rng(seed, static_cast<std::uint64_t>(level), first + static_cast<std::uint64_t>(m));
        SamplePair pair = sampler.sample_pair(level, h_fine, h_coarse, rng);
        acc.add(pair.fine - pair.coarse, pair.work);
    }
    return acc;
}

} // namespace

WelfordAccumulator sample_level_serial(const Sampler& sampler, int level, double h_fine,
                                       double h_coarse, std::uint64_t seed,
                                       std::uint64_t first_index, std::int64_t count) {
    return accumulate_range(sampler, level, h_fine, h_coarse, seed, first_index, count);
}

WelfordAccumulator sample_level_blocked(const Sampler& sampler, int level, double h_fine,
                                        double h_coarse, std::uint64_t seed,
                                        std::uint64_t first_index, std::int64_t count,
                                        int workers) {
    if (count <= 0) return {};
    std::int64_t nblocks = (count + kSampleBlock - 1) / kSampleBlock;
    std::vector<WelfordAccumulator> parts(static_cast<std::size_t>(nblocks));
    std::string failure;
#ifdef _OPENMP
    int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#else
    (void)workers;
#endif
    for (std::int64_t b = 0; b < nblocks; ++b) {
        std::int64_t lo = b * kSampleBlock;
        std::int64_t n = std::min(kSampleBlock, count - lo);
        try {
            parts[static_cast<std::size_t>(b)] =
                accumulate_range(sampler, level, h_fine, h_coarse, seed,
                                 first_index + static_cast<std::uint64_t>(lo), n);
        } catch (const std::exception& e) {
            // Exceptions must not escape the parallel region; record and
            // rethrow with level context afterwards.
#ifdef _OPENMP
#pragma omp critical(mlmc_sample_failure)
#endif
            if (failure.empty()) failure = e.what();
        }
    }
    if (!failure.empty())
        throw std::runtime_error("sampling level " + std::to_string(level) + ": " + failure);
    WelfordAccumulator acc;
    for (const auto& part : parts) acc.merge(part);
    return acc;
}

std::pair<double, std::vector<LevelStats>> run_fixed_hierarchy(const Hierarchy& hierarchy,
                                                               const Sampler& sampler,
                                                               std::uint64_t seed, int workers) {
    hierarchy.validate();
    if (hierarchy.kind != HierarchyKind::integer_feasible)
        throw std::invalid_argument("run_fixed_hierarchy: hierarchy must be integer_feasible");
    std::vector<LevelStats> stats(hierarchy.size());
    double estimate = 0.0;
    for (int l = 0; l <= hierarchy.levels(); ++l) {
        std::int64_t m = static_cast<std::int64_t>(hierarchy.samples[l]);
        if (m < 2) throw std::invalid_argument("run_fixed_hierarchy: needs M >= 2 per level");
        double h_coarse = l > 0 ? hierarchy.mesh_sizes[l - 1] : 0.0;
        WelfordAccumulator acc = sample_level_blocked(sampler, l, hierarchy.mesh_sizes[l],
                                                      h_coarse, seed, 0, m, workers);
        estimate += acc.mean;
        stats[l] = {l, acc.count, acc.mean, acc.variance(), acc.work, hierarchy.mesh_sizes[l]};
    }
    return {estimate, std::move(stats)};
}

double computational_theta(double tol, double h_finest, double qw_hat,
                           const ProblemRates& rates) {
    if (!(tol > 0.0) || !(h_finest > 0.0) || !(qw_hat > 0.0))
        throw std::invalid_argument("computational_theta: needs positive tol, h, qw");
    double bias = qw_hat * std::pow(h_finest, rates.q1);
    if (bias >= tol)
        throw infeasible_error("computational_theta: expected bias exceeds the tolerance");
    return 1.0 - bias / tol;
}

ModelConstants calibrate_constants(const std::vector<LevelStats>& stats,
                                   const ProblemRates& rates, int calib_levels,
                                   double c_alpha) {
    if (calib_levels < 1) throw std::invalid_argument("calibrate_constants: calib_levels >= 1");
    int top = static_cast<int>(stats.size()) - 1;
    if (top < 2 || stats[0].count < 2)
        throw calibration_error("calibrate_constants: too few levels for a fit");

    int window = std::min(calib_levels, top);
    std::vector<double> x_bias, y_bias, x_var, y_var, w_var;
    std::vector<std::int64_t> counts;
    for (int l = top - window + 1; l <= top; ++l) {
        if (stats[l].count < 2) continue;
        double h_coarse = stats[l - 1].h;
        double h_fine = stats[l].h;
        x_bias.push_back(std::pow(h_coarse, rates.q1) - std::pow(h_fine, rates.q1));
        y_bias.push_back(std::abs(stats[l].mean_diff));
        counts.push_back(stats[l].count);
        double x = std::pow(h_coarse, rates.q2);
        x_var.push_back(x);
        y_var.push_back(stats[l].var_diff);
        // A sample variance has relative error ~sqrt(2/(n-1)); weighting by
        // (n-1)/x^2 makes the fit a count-weighted mean of the level ratios
        // var/x and keeps sparsely sampled levels from dominating.
        w_var.push_back(static_cast<double>(stats[l].count - 1) / (x * x));
    }
    if (x_bias.size() < 2)
        throw calibration_error("calibrate_constants: fewer than two usable difference levels");

    ModelConstants out;
    out.qs = std::max(fit_through_origin_weighted(x_var, y_var, w_var), 1e-12);
    // Inverse-variance weights count/var for the bias fit. A handful of
    // samples can realize an exactly zero variance (the difference
    // distribution may have an atom at zero), which would hand that level
    // unbounded weight; the fitted variance model is the floor instead.
    std::vector<double> w_bias(x_bias.size());
    for (std::size_t i = 0; i < x_bias.size(); ++i)
        w_bias[i] = static_cast<double>(counts[i]) /
                    std::max({y_var[i], out.qs * x_var[i], 1e-300});
    out.qw = std::max(fit_through_origin_weighted(x_bias, y_bias, w_bias), 1e-12);
    double max_var = 0.0;
    for (const auto& s : stats) max_var = std::max(max_var, s.var_diff);
    out.v0 = std::max({stats[0].var_diff, max_var * 1e-6, 1e-12});
    out.c_alpha = c_alpha;
    return out;
}

ErrorReport error_report(const std::vector<LevelStats>& stats, const ModelConstants& constants,
                         double theta, double tol, const ProblemRates& rates) {
    if (stats.empty()) throw std::invalid_argument("error_report: empty statistics");
    ErrorReport out;
    out.bias_estimate = constants.qw * std::pow(stats.back().h, rates.q1);
    double var_sum = 0.0;
    for (const auto& s : stats) {
        if (s.count > 0) var_sum += s.var_diff / static_cast<double>(s.count);
    }
    out.stat_error_estimate = constants.c_alpha * std::sqrt(var_sum);
    out.satisfied = out.bias_estimate <= (1.0 - theta) * tol &&
                    out.stat_error_estimate <= theta * tol;
    return out;
}

namespace {

struct LevelState {
    double h = 0.0;
    double h_coarse = 0.0;
    WelfordAccumulator acc;
    std::uint64_t next_index = 0;
};

std::vector<LevelStats> snapshot(const std::vector<LevelState>& state) {
    std::vector<LevelStats> stats(state.size());
    for (std::size_t l = 0; l < state.size(); ++l)
        stats[l] = {static_cast<int>(l), state[l].acc.count, state[l].acc.mean,
                    state[l].acc.variance(), state[l].acc.work, state[l].h};
    return stats;
}

std::vector<double> tolerance_schedule(const ContinuationConfig& config, double tol_target) {
    std::vector<double> schedule;
    for (double t = config.tol_max;
         t > config.r1 * tol_target && static_cast<int>(schedule.size()) < config.max_iterations;
         t /= config.r1)
        schedule.push_back(t);
    for (int m = config.refine_steps; m >= 1; --m) {
        double t = tol_target * std::pow(config.r2, m);
        double prev = schedule.empty() ? config.tol_max : schedule.back();
        if (t < prev) schedule.push_back(t);
    }
    schedule.push_back(tol_target);
    return schedule;
}

Hierarchy build_hierarchy(const OptimalSetup& setup, const ModeSpec& mode, int level_cap) {
    switch (mode.mode) {
    case HierarchyMode::optimal_nongeometric: {
        auto [levels, best] = optimal_L(setup);
        if (levels > level_cap) best = optimal_hierarchy_fixed_L(setup, level_cap);
        return best.hierarchy;
    }
    case HierarchyMode::geometric: {
        try {
            return best_geometric_hierarchy(setup, mode.beta, level_cap).hierarchy;
        } catch (const infeasible_error&) {
            // The level cap blocks the bias constraint this round. Sample a
            // capped hierarchy with an even split; the cap grows next round.
            double beta = mode.beta ? *mode.beta : optimal_beta(setup.rates);
            double h0 = setup.h_max ? *setup.h_max : 0.5;
            if (!chi_is_one(setup.rates.chi()) && setup.rates.chi() > 1.0)
                h0 = std::min(h0, geometric_optimal_h0(setup.rates, setup.constants));
            Hierarchy out;
            out.kind = HierarchyKind::real_valued;
            for (int l = 0; l <= level_cap; ++l)
                out.mesh_sizes.push_back(h0 * std::pow(beta, -static_cast<double>(l)));
            out.samples.assign(out.mesh_sizes.size(), 1.0);
            out.samples = optimal_samples(model_variances(out, setup.constants, setup.rates),
                                          model_works(out, setup.rates), 0.5, setup.tol,
                                          setup.constants.c_alpha);
            return out;
        }
    }
    case HierarchyMode::fixed_theta: {
        if (!mode.theta) throw std::invalid_argument("cmlmc: fixed_theta mode needs theta");
        bool found = false;
        OptimizedHierarchy best;
        for (int L = 0; L <= level_cap; ++L) {
            OptimizedHierarchy cand;
            try {
                cand = optimal_hierarchy_fixed_L(setup, L, *mode.theta);
            } catch (const infeasible_error&) {
                continue;
            }
            if (!cand.hierarchy.decreasing()) continue;
            if (!found || cand.predicted_work < best.predicted_work) {
                found = true;
                best = std::move(cand);
            }
        }
        if (!found) throw infeasible_error("cmlmc: no feasible fixed-theta hierarchy");
        return best.hierarchy;
    }
    }
    throw std::logic_error("cmlmc: unknown hierarchy mode");
}

} // namespace

RunReport cmlmc(const ContinuationConfig& config, const OptimalSetup& setup,
                const Sampler& sampler, const ModeSpec& mode, const MeshRule& rule,
                std::uint64_t seed, int workers) {
    config.validate();
    setup.validate();
    const double tol_target = setup.tol;
    const std::vector<double> schedule = tolerance_schedule(config, tol_target);

    RunReport report;
    report.tol = tol_target;
    report.seed = seed;

    std::vector<LevelState> state(config.initial_hierarchy.size());
    for (std::size_t l = 0; l < state.size(); ++l) {
        state[l].h = config.initial_hierarchy.mesh_sizes[l];
        state[l].h_coarse = l > 0 ? config.initial_hierarchy.mesh_sizes[l - 1] : 0.0;
    }

    auto top_up = [&](std::size_t level, std::int64_t target) -> double {
        auto& st = state[level];
        if (st.acc.count >= target) return 0.0;
        std::int64_t deficit = target - st.acc.count;
        WelfordAccumulator delta =
            sample_level_blocked(sampler, static_cast<int>(level), st.h, st.h_coarse, seed,
                                 st.next_index, deficit, workers);
        st.acc.merge(delta);
        st.next_index += static_cast<std::uint64_t>(deficit);
        return delta.work;
    };

    bool pilot_done = false;
    std::size_t sched_pos = 0;
    ModelConstants calibrated = setup.constants;

    for (int iteration = 0; iteration < config.max_iterations; ++iteration) {
        double tol_i = schedule[std::min(sched_pos, schedule.size() - 1)];
        double iter_work = 0.0;

        if (!pilot_done) {
            for (std::size_t l = 0; l < state.size(); ++l)
                iter_work += top_up(l, std::max<std::int64_t>(
                                           2, static_cast<std::int64_t>(
                                                  config.initial_hierarchy.samples[l])));
            pilot_done = true;
        }

        try {
            calibrated = calibrate_constants(snapshot(state), setup.rates, config.calib_levels,
                                             setup.constants.c_alpha);
        } catch (const calibration_error&) {
            calibrated = setup.constants; // keep priors
        }

        OptimalSetup setup_i = setup;
        setup_i.tol = tol_i;
        setup_i.constants = calibrated;
        int level_cap = static_cast<int>(state.size()) - 1 + config.l_inc;
        Hierarchy rounded = round_hierarchy(build_hierarchy(setup_i, mode, level_cap), rule);

        // Keep samples of levels whose coupled meshes are unchanged, drop
        // the rest. Stream indices keep advancing so no stream is reused.
        state.resize(rounded.size());
        for (std::size_t l = 0; l < state.size(); ++l) {
            double h_coarse = l > 0 ? rounded.mesh_sizes[l - 1] : 0.0;
            if (state[l].h != rounded.mesh_sizes[l] || state[l].h_coarse != h_coarse) {
                state[l].acc = WelfordAccumulator{};
                state[l].h = rounded.mesh_sizes[l];
                state[l].h_coarse = h_coarse;
            }
        }

        double theta_i;
        bool theta_feasible = true;
        try {
            theta_i = computational_theta(tol_i, rounded.mesh_sizes.back(), calibrated.qw,
                                          setup.rates);
        } catch (const infeasible_error&) {
            theta_i = 0.5; // hierarchy too shallow this round; the cap grows
            theta_feasible = false;
        }

        // Allocate against the model variances, inflated by the realized
        // level variances where those run higher. Sample variances carry
        // relative error ~sqrt(2/(n-1)); a two-sigma upper bound keeps the
        // realized estimator variance inside the budget, not merely the
        // estimated one, and lets a repeated pass at the target tolerance
        // make progress instead of re-requesting the same counts.
        std::vector<double> alloc_var(rounded.size()), alloc_work(rounded.size());
        for (std::size_t l = 0; l < rounded.size(); ++l) {
            double model = level_variance_model(static_cast<int>(l), rounded, calibrated,
                                                setup.rates);
            double realized = 0.0;
            if (state[l].acc.count >= 2) {
                double spread =
                    std::sqrt(2.0 / static_cast<double>(state[l].acc.count - 1));
                realized = state[l].acc.variance() * (1.0 + 2.0 * spread);
            }
            alloc_var[l] = std::max(model, realized);
            alloc_work[l] = level_work(rounded.mesh_sizes[l], setup.rates);
        }
        std::vector<double> empirical =
            optimal_samples(alloc_var, alloc_work, theta_i, tol_i, setup.constants.c_alpha);
        for (std::size_t l = 0; l < state.size(); ++l) {
            std::int64_t target = std::max<std::int64_t>(
                2, static_cast<std::int64_t>(std::llround(rounded.samples[l])));
            target = std::max(
                target, static_cast<std::int64_t>(std::ceil(empirical[l] - 1e-12)));
            iter_work += top_up(l, target);
        }

        auto stats = snapshot(state);
        ErrorReport err = error_report(stats, calibrated, theta_i, tol_i, setup.rates);
        report.total_work += iter_work;
        report.iterations.push_back({tol_i, theta_i, rounded, calibrated, err.bias_estimate,
                                     err.stat_error_estimate, iter_work, stats});

        bool at_target = tol_i == tol_target;
        if (at_target && theta_feasible &&
            err.bias_estimate + err.stat_error_estimate <= tol_target) {
            report.theta_used = theta_i;
            report.bias_estimate = err.bias_estimate;
            report.stat_error_estimate = err.stat_error_estimate;
            report.final_stats = std::move(stats);
            double estimate = 0.0;
            for (const auto& st : state) estimate += st.acc.mean;
            report.estimate = estimate;
            return report;
        }
        if (sched_pos + 1 < schedule.size()) ++sched_pos;
    }
    throw convergence_error("cmlmc: tolerance not met within the iteration budget",
                            std::move(report));
}

void to_json(nlohmann::json& j, const LevelStats& stats) {
    j = nlohmann::json{{"level", stats.level},   {"count", stats.count},
                       {"mean_diff", stats.mean_diff}, {"var_diff", stats.var_diff},
                       {"work_done", stats.work_done}, {"h", stats.h}};
}

void to_json(nlohmann::json& j, const RunReport& report) {
    nlohmann::json iterations = nlohmann::json::array();
    for (const auto& it : report.iterations) {
        nlohmann::json rec{{"tol", it.tol},
                           {"theta", it.theta},
                           {"hierarchy", it.hierarchy},
                           {"constants",
                            {{"qw", it.calibrated.qw},
                             {"qs", it.calibrated.qs},
                             {"v0", it.calibrated.v0},
                             {"c_alpha", it.calibrated.c_alpha}}},
                           {"bias", it.bias_estimate},
                           {"stat", it.stat_error_estimate},
                           {"work", it.work_increment},
                           {"stats", it.stats}};
        iterations.push_back(std::move(rec));
    }
    j = nlohmann::json{{"estimate", report.estimate},
                       {"tol", report.tol},
                       {"theta_used", report.theta_used},
                       {"bias_estimate", report.bias_estimate},
                       {"stat_error_estimate", report.stat_error_estimate},
                       {"total_work", report.total_work},
                       {"seed", report.seed},
                       {"iterations", std::move(iterations)},
                       {"final_stats", report.final_stats}};
}

std::string iteration_trace_csv(const RunReport& report) {
    std::string csv = "iteration,tol,L,theta,bias,stat,work\n";
    char line[200];
    for (std::size_t i = 0; i < report.iterations.size(); ++i) {
        const auto& it = report.iterations[i];
        std::snprintf(line, sizeof(line), "%zu,%.17g,%d,%.17g,%.17g,%.17g,%.17g\n", i, it.tol,
                      it.hierarchy.levels(), it.theta, it.bias_estimate, it.stat_error_estimate,
                      it.work_increment);
        csv += line;
    }
    return csv;
}

} // namespace mlmc
