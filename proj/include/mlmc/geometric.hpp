#pragma once

#include "mlmc/optimizer.hpp"
#include "mlmc/types.hpp"

#include <optional>

namespace mlmc {

/// A geometric mesh family h_l = h0 * beta^(-l), l = 0..L.
struct GeometricSpec {
    double h0;
    double beta;
    int levels;

    void validate() const {
        if (!(h0 > 0.0)) throw std::invalid_argument("GeometricSpec: h0 must be > 0");
        if (!(beta > 1.0)) throw std::invalid_argument("GeometricSpec: beta must be > 1");
        if (levels < 0) throw std::invalid_argument("GeometricSpec: levels must be >= 0");
    }
};

/// Near-optimal level separation: chi^(2/(d*gamma*(chi-1))) for chi != 1,
/// exp(2/q2) at chi = 1. Not restricted to integers.
double optimal_beta(const ProblemRates& rates);

/// Smallest level count whose finest mesh satisfies the bias constraint:
/// ceil((log h0 - log(((1-theta) tol)/qw)/q1) / log beta), floored at 0.
int geometric_levels(double h0, double beta, double theta, double tol,
                     const ModelConstants& constants, const ProblemRates& rates);

/// Geometric hierarchy with work-minimizing sample counts for the given
/// split. Throws infeasible_error when L is too small for the bias
/// constraint at this theta.
OptimizedHierarchy geometric_hierarchy(const GeometricSpec& spec, double theta, double tol,
                                       const ModelConstants& constants,
                                       const ProblemRates& rates);

/// Coarsest mesh that minimizes the asymptotic geometric work constant
/// (meaningful for chi > 1): (v0/qs)^(1/q2) * chi^(2/(d*gamma*(1-chi))).
double geometric_optimal_h0(const ProblemRates& rates, const ModelConstants& constants);

/// Asymptotic work constant of optimized geometric hierarchies with the
/// given coarsest mesh. Identical to the non-geometric constant except in
/// the chi > 1 case, where the h0-dependent form applies.
AsymptoticWork geometric_work_constant(const ProblemRates& rates,
                                       const ModelConstants& constants, double h0);

/// The split that makes the unconstrained optimal hierarchy geometric with
/// the given separation: 1 - qw/tol * beta^(-q1(L+1)) * (v0/qs)^(eta/chi).
/// Throws infeasible_error when L is too small for that split to be
/// positive.
double force_geometric_theta(int L, double beta, double tol, const ModelConstants& constants,
                             const ProblemRates& rates);

/// Closed-form total work of a geometric hierarchy with optimal sample
/// counts; the algebraic counterpart of summing sqrt(W_l V_l) directly.
double geometric_work_closed_form(double h0, double beta, int L, double theta, double tol,
                                  const ModelConstants& constants, const ProblemRates& rates);

/// Fully optimized geometric hierarchy for a tolerance: beta from
/// optimal_beta (or the override), h0 from geometric_optimal_h0 / the setup
/// bounds, then a 1-D search over the level count with the split pinned to
/// the exact bias of each candidate's finest mesh.
OptimizedHierarchy best_geometric_hierarchy(const OptimalSetup& setup,
                                            std::optional<double> beta_override = std::nullopt,
                                            std::optional<int> max_levels = std::nullopt);

} // namespace mlmc
