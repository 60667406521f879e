#pragma once

#include "mlmc/optimizer.hpp"
#include "mlmc/samplers.hpp"
#include "mlmc/stats.hpp"
#include "mlmc/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mlmc {

/// Accumulated sample statistics of one level.
struct LevelStats {
    int level = 0;
    std::int64_t count = 0;
    double mean_diff = 0.0;
    double var_diff = 0.0;
    double work_done = 0.0;
    double h = 0.0;
};

/// Error split bookkeeping of one error check.
struct ErrorReport {
    double bias_estimate = 0.0;
    double stat_error_estimate = 0.0;
    bool satisfied = false;
};

/// One pass of the continuation loop.
struct IterationRecord {
    double tol = 0.0;
    double theta = 0.0;
    Hierarchy hierarchy;
    ModelConstants calibrated;
    double bias_estimate = 0.0;
    double stat_error_estimate = 0.0;
    double work_increment = 0.0;
    std::vector<LevelStats> stats;
};

/// Outcome of a (C)MLMC execution.
struct RunReport {
    double estimate = 0.0;
    double tol = 0.0;
    double theta_used = 0.0;
    double bias_estimate = 0.0;
    double stat_error_estimate = 0.0;
    double total_work = 0.0;
    std::uint64_t seed = 0;
    std::vector<IterationRecord> iterations;
    std::vector<LevelStats> final_stats;
};

/// Thrown when the continuation loop exhausts its iteration budget; carries
/// the partial report for diagnosis.
struct convergence_error : std::runtime_error {
    convergence_error(const std::string& what, RunReport partial_report)
        : std::runtime_error(what), partial(std::move(partial_report)) {}
    RunReport partial;
};

/// Continuation-loop parameters. kappa0/kappa1 belong to the Bayesian
/// calibration of the reference algorithm; they are accepted for config
/// compatibility and unused by the least-squares calibration here.
struct ContinuationConfig {
    double tol_max = 0.5;
    double r1 = 2.0;
    double r2 = 1.1;
    Hierarchy initial_hierarchy;
    int l_inc = 2;
    int calib_levels = 3;
    double kappa0 = 0.1;
    double kappa1 = 0.1;
    int max_iterations = 100;
    int refine_steps = 2;

    void validate() const {
        if (!(tol_max > 0.0)) throw std::invalid_argument("ContinuationConfig: tol_max > 0");
        if (!(r1 > r2) || !(r2 > 1.0))
            throw std::invalid_argument("ContinuationConfig: requires r1 > r2 > 1");
        if (l_inc < 1 || calib_levels < 1 || max_iterations < 1 || refine_steps < 0)
            throw std::invalid_argument("ContinuationConfig: bad loop limits");
        initial_hierarchy.validate();
    }
};

enum class HierarchyMode { optimal_nongeometric, geometric, fixed_theta };

/// Hierarchy construction policy for the continuation loop.
struct ModeSpec {
    HierarchyMode mode = HierarchyMode::optimal_nongeometric;
    std::optional<double> beta;  // geometric: level separation override
    std::optional<double> theta; // fixed_theta: the forced split
};

/// Per-level sampling kernels. Samples carry stream indices
/// [first_index, first_index + count); the blocked kernel accumulates
/// fixed-size blocks in parallel and merges them in block order, so its
/// result is bit-identical for every worker count. The serial kernel is the
/// plain sequential reference used for testing and benchmarking.
WelfordAccumulator sample_level_serial(const Sampler& sampler, int level, double h_fine,
                                       double h_coarse, std::uint64_t seed,
                                       std::uint64_t first_index, std::int64_t count);
WelfordAccumulator sample_level_blocked(const Sampler& sampler, int level, double h_fine,
                                        double h_coarse, std::uint64_t seed,
                                        std::uint64_t first_index, std::int64_t count,
                                        int workers = 0);

/// Runs a fixed integer hierarchy once: estimate = sum of level means.
std::pair<double, std::vector<LevelStats>> run_fixed_hierarchy(const Hierarchy& hierarchy,
                                                               const Sampler& sampler,
                                                               std::uint64_t seed,
                                                               int workers = 0);

/// Split chosen at run time from the expected bias: 1 - qw_hat*h_L^q1/tol.
/// Throws infeasible_error when the bias already exceeds the tolerance.
double computational_theta(double tol, double h_finest, double qw_hat,
                           const ProblemRates& rates);

/// Weighted least-squares estimates of qw, qs from the deepest
/// min(calib_levels, L) level differences and v0 from level 0. Throws
/// calibration_error when fewer than two usable difference levels exist.
ModelConstants calibrate_constants(const std::vector<LevelStats>& stats,
                                   const ProblemRates& rates, int calib_levels, double c_alpha);

/// Bias and statistical error estimates for accumulated statistics, checked
/// against the split (1-theta)*tol / theta*tol.
ErrorReport error_report(const std::vector<LevelStats>& stats, const ModelConstants& constants,
                         double theta, double tol, const ProblemRates& rates);

/// Continuation MLMC: solves a decreasing tolerance schedule, recalibrating
/// the model constants from all accumulated samples, rebuilding the
/// hierarchy in the requested mode, reusing samples of unchanged meshes and
/// topping up the rest, until the target tolerance is met.
RunReport cmlmc(const ContinuationConfig& config, const OptimalSetup& setup,
                const Sampler& sampler, const ModeSpec& mode, const MeshRule& rule,
                std::uint64_t seed, int workers = 0);

void to_json(nlohmann::json& j, const LevelStats& stats);
void to_json(nlohmann::json& j, const RunReport& report);

/// Per-iteration trace with columns iteration,tol,L,theta,bias,stat,work.
std::string iteration_trace_csv(const RunReport& report);

} // namespace mlmc
