#include "mlmc/samplers.hpp"

#include "mlmc/stats.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace mlmc {

namespace {

std::int64_t step_count(double h, double horizon) {
    double raw = horizon / h;
    std::int64_t n = static_cast<std::int64_t>(std::llround(raw));
    if (n < 1 || std::abs(raw - static_cast<double>(n)) > 1e-9 * raw)
        throw std::invalid_argument("gbm sampler: T/h must be a positive integer");
    return n;
}

// One Milstein step of GBM: b*b' reduces to vol^2 * u.
inline double milstein_step(double u, double dt, double dw, const GbmParams& p) {
    return u + p.drift * u * dt + p.vol * u * dw + 0.5 * p.vol * p.vol * u * (dw * dw - dt);
}

} // namespace

double GbmParams::exact_value() const {
    // E[(u(T) - K)^+] for lognormal u(T), discounted and scaled.
    double log_moneyness = std::log(u0 / strike) + (drift - 0.5 * vol * vol) * horizon;
    double sd = vol * std::sqrt(horizon);
    double z0 = -log_moneyness / sd;
    double undiscounted = u0 * std::exp(drift * horizon) * normal_cdf(sd - z0) -
                          strike * normal_cdf(-z0);
    return payoff_scale * std::exp(-discount_rate * horizon) * undiscounted;
}

double gbm_milstein_path(double h, const GbmParams& params, RngStream& rng) {
    std::int64_t n = step_count(h, params.horizon);
    double dt = params.horizon / static_cast<double>(n);
    double sqrt_dt = std::sqrt(dt);
    double u = params.u0;
    for (std::int64_t i = 0; i < n; ++i) u = milstein_step(u, dt, sqrt_dt * rng.normal(), params);
    return u;
}

double GbmMilsteinSampler::payoff(double u) const {
    double intrinsic = u - params_.strike;
    if (intrinsic < 0.0) intrinsic = 0.0;
    return params_.payoff_scale * std::exp(-params_.discount_rate * params_.horizon) * intrinsic;
}

SamplePair GbmMilsteinSampler::sample_pair(int level, double h_fine, double h_coarse,
                                           RngStream& rng) const {
    if (level == 0) {
        double u = gbm_milstein_path(h_fine, params_, rng);
        return {payoff(u), 0.0, 1.0 / h_fine};
    }
    if (!(h_coarse > h_fine))
        throw std::invalid_argument("gbm sampler: coupled pair needs h_coarse > h_fine");

    std::int64_t n_fine = step_count(h_fine, params_.horizon);
    std::int64_t n_coarse = step_count(h_coarse, params_.horizon);
    double dt_fine = params_.horizon / static_cast<double>(n_fine);
    double dt_coarse = params_.horizon / static_cast<double>(n_coarse);

    // Walk the common refinement of the two grids. Grid points are compared
    // as integer multiples of T/(n_fine*n_coarse), so coincidence is exact.
    // Each path aggregates the Brownian increments of its own step before
    // advancing; for nested grids this reduces to the usual increment sums.
    double u_fine = params_.u0, u_coarse = params_.u0;
    double dw_fine = 0.0, dw_coarse = 0.0;
    std::int64_t i = 1, j = 1;
    std::int64_t prev_units = 0;
    const double unit = params_.horizon / (static_cast<double>(n_fine) * static_cast<double>(n_coarse));
    while (i <= n_fine || j <= n_coarse) {
        std::int64_t fine_units = i <= n_fine ? i * n_coarse : INT64_MAX;
        std::int64_t coarse_units = j <= n_coarse ? j * n_fine : INT64_MAX;
        std::int64_t next_units = std::min(fine_units, coarse_units);
        double dt = static_cast<double>(next_units - prev_units) * unit;
        double dw = std::sqrt(dt) * rng.normal();
        dw_fine += dw;
        dw_coarse += dw;
        if (fine_units == next_units) {
            u_fine = milstein_step(u_fine, dt_fine, dw_fine, params_);
            dw_fine = 0.0;
            ++i;
        }
        if (coarse_units == next_units) {
            u_coarse = milstein_step(u_coarse, dt_coarse, dw_coarse, params_);
            dw_coarse = 0.0;
            ++j;
        }
        prev_units = next_units;
    }
    return {payoff(u_fine), payoff(u_coarse), 1.0 / h_fine};
}

SamplePair SyntheticSampler::sample_pair(int level, double h_fine, double h_coarse,
                                         RngStream& rng) const {
    const auto& k = params_.constants;
    const auto& r = params_.rates;
    double work = std::pow(h_fine, -r.dgamma());
    if (level == 0) {
        double value = params_.mean - k.qw * std::pow(h_fine, r.q1) +
                       std::sqrt(k.v0) * rng.normal();
        return {value, 0.0, work};
    }
    if (!(h_coarse > h_fine))
        throw std::invalid_argument("synthetic sampler: coupled pair needs h_coarse > h_fine");
    double mean_diff = k.qw * (std::pow(h_coarse, r.q1) - std::pow(h_fine, r.q1));
    double sd = std::sqrt(k.qs * std::pow(h_coarse, r.q2));
    // The difference is returned directly; the estimator only consumes the
    // fine-minus-coarse value, so telescoping is preserved.
    return {mean_diff + sd * rng.normal(), 0.0, work};
}

} // namespace mlmc
