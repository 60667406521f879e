#pragma once

#include "mlmc/rng.hpp"
#include "mlmc/types.hpp"

namespace mlmc {

/// One coupled draw: the fine- and coarse-mesh evaluations of the quantity
/// of interest on the same underlying randomness, plus the work charged for
/// generating it. Level 0 has no coarse member (coarse = 0).
struct SamplePair {
    double fine;
    double coarse;
    double work;
};

/// Generator of coupled level samples. Implementations must be stateless
/// with respect to the draw: the result is a function of (level, meshes,
/// stream) only, so disjoint streams can be sampled concurrently and the
/// outcome never depends on scheduling.
class Sampler {
public:
    virtual ~Sampler() = default;

    /// h_coarse is ignored on level 0.
    virtual SamplePair sample_pair(int level, double h_fine, double h_coarse,
                                   RngStream& rng) const = 0;
};

/// Geometric Brownian motion du = drift*u dt + vol*u dB on [0,T] with a
/// discounted call payoff; the defaults reproduce the reference setup whose
/// exact expectation is known in closed form.
struct GbmParams {
    double horizon = 1.0;       // T
    double drift = 0.05;
    double vol = 0.2;
    double payoff_scale = 10.0;
    double strike = 1.0;
    double u0 = 1.0;
    double discount_rate = 0.05; // payoff carries exp(-discount_rate*T)

    void validate() const {
        if (!(horizon > 0.0) || !(u0 > 0.0) || !(payoff_scale > 0.0))
            throw std::invalid_argument("GbmParams: horizon, u0, payoff_scale must be > 0");
        if (vol < 0.0) throw std::invalid_argument("GbmParams: vol must be >= 0");
    }

    /// Exact E[payoff] under these parameters (lognormal closed form).
    double exact_value() const;
};

/// Terminal value of one Milstein path with uniform steps of size h.
/// T/h must be an integer (time grids are h = T/N).
double gbm_milstein_path(double h, const GbmParams& params, RngStream& rng);

/// Milstein sampler for the GBM payoff. Fine and coarse paths are driven by
/// the same Brownian path; for non-nested step sizes both paths integrate on
/// the common refinement of their grids, each aggregating the increments of
/// its own steps.
class GbmMilsteinSampler final : public Sampler {
public:
    explicit GbmMilsteinSampler(GbmParams params = {}) : params_(params) { params_.validate(); }

    SamplePair sample_pair(int level, double h_fine, double h_coarse,
                           RngStream& rng) const override;

    const GbmParams& params() const { return params_; }

private:
    double payoff(double u) const;
    GbmParams params_;
};

/// Parameters of the model-exact synthetic sampler: a stand-in problem whose
/// level means and variances equal the bias/variance models with the given
/// constants, with known expectation `mean`.
struct SyntheticParams {
    double mean = 0.0;
    ModelConstants constants;
    ProblemRates rates;
};

/// Draws level differences directly from normal distributions chosen so the
/// model equalities hold exactly: level 0 ~ N(mean - qw*h0^q1, v0), level l
/// ~ N(qw*(h_{l-1}^q1 - h_l^q1), qs*h_{l-1}^q2). Work is accounted at the
/// model rate, not burned.
class SyntheticSampler final : public Sampler {
public:
    explicit SyntheticSampler(SyntheticParams params) : params_(params) {
        params_.constants.validate();
        params_.rates.validate();
    }

    SamplePair sample_pair(int level, double h_fine, double h_coarse,
                           RngStream& rng) const override;

    const SyntheticParams& params() const { return params_; }

private:
    SyntheticParams params_;
};

} // namespace mlmc
