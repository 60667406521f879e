#pragma once

// Monte Carlo experiments shared between the unit suites and the acceptance
// runner.

#include "mlmc/engine.hpp"
#include "mlmc/samplers.hpp"
#include "mlmc/stats.hpp"

#include <cmath>
#include <vector>

namespace experiments {

struct RateFit {
    double q1;
    double q2;
};

/// Fits weak/strong rates from coupled level statistics on meshes
/// h, 2h for h = 1/4 / 2^k, k = 0..level_count-1: log|mean| and log(var)
/// of the differences regressed on log h.
inline RateFit fit_gbm_rates(const mlmc::Sampler& sampler, int level_count,
                             std::int64_t samples_per_level, std::uint64_t seed) {
    std::vector<double> log_h_fine, log_h_coarse, log_mean, log_var;
    for (int k = 0; k < level_count; ++k) {
        double h_fine = 1.0 / (4 << k);
        double h_coarse = 2.0 * h_fine;
        auto acc = mlmc::sample_level_blocked(sampler, k + 1, h_fine, h_coarse, seed, 0,
                                              samples_per_level);
        log_h_fine.push_back(std::log(h_fine));
        log_h_coarse.push_back(std::log(h_coarse));
        log_mean.push_back(std::log(std::abs(acc.mean)));
        log_var.push_back(std::log(acc.variance()));
    }
    // E[diff] ~ qw*(h_coarse^q1 - h_fine^q1) = qw(2^q1 - 1) h_fine^q1,
    // Var[diff] ~ qs*h_coarse^q2; both are pure powers of the mesh.
    RateFit fit{};
    fit.q1 = mlmc::fit_line(log_h_fine, log_mean).slope;
    fit.q2 = mlmc::fit_line(log_h_coarse, log_var).slope;
    return fit;
}

/// Median total work of continuation runs per tolerance, regressed against
/// the tolerance in log-log; returns the slope.
inline double work_tolerance_slope(const std::vector<double>& tolerances,
                                   const std::vector<double>& median_works) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < tolerances.size(); ++i) {
        lx.push_back(std::log(tolerances[i]));
        ly.push_back(std::log(median_works[i]));
    }
    return mlmc::fit_line(lx, ly).slope;
}

} // namespace experiments
