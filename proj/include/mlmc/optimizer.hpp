#pragma once

#include "mlmc/types.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace mlmc {

/// Inputs of the hierarchy optimization: problem rates, model constants, the
/// accuracy target, and optional bounds on the admissible mesh sizes.
struct OptimalSetup {
    ProblemRates rates;
    ModelConstants constants;
    double tol = 0.0;
    std::optional<double> h_min; // finest admissible mesh
    std::optional<double> h_max; // coarsest admissible mesh (bounds h_0)

    void validate() const {
        rates.validate();
        constants.validate();
        if (!(tol > 0.0)) throw std::invalid_argument("OptimalSetup: tol must be > 0");
        if (h_min && !(*h_min > 0.0))
            throw std::invalid_argument("OptimalSetup: h_min must be > 0");
        if (h_max && !(*h_max > 0.0))
            throw std::invalid_argument("OptimalSetup: h_max must be > 0");
        if (h_min && h_max && !(*h_min < *h_max))
            throw std::invalid_argument("OptimalSetup: requires h_min < h_max");
    }
};

/// A work-minimizing real-valued hierarchy together with the error split it
/// was built for. The bias constraint pins the finest mesh, the variance
/// budget pins the sample counts.
struct OptimizedHierarchy {
    Hierarchy hierarchy; // real_valued
    double theta = 0.5;
    double predicted_work = 0.0;
    int levels = 0;
    double bias = 0.0;            // qw * h_L^q1
    double variance_budget = 0.0; // (theta*tol/c_alpha)^2
};

/// True when chi is close enough to 1 that the removable-singularity
/// formulas must be replaced by their chi = 1 limits.
inline bool chi_is_one(double chi) { return std::abs(chi - 1.0) < 1e-9; }

/// Work-minimizing sample counts for given per-level variances and costs
/// under the variance budget (theta*tol/c_alpha)^2:
/// M_l = (c_alpha/(theta*tol))^2 * sqrt(V_l/W_l) * sum_k sqrt(W_k V_k).
std::vector<double> optimal_samples(const std::vector<double>& variances,
                                    const std::vector<double>& works, double theta, double tol,
                                    double c_alpha);

/// Finest mesh allowed by the bias constraint: ((1-theta)*tol/qw)^(1/q1).
double finest_mesh(double theta, double tol, const ModelConstants& constants,
                   const ProblemRates& rates);

/// Work-minimizing error split for the unconstrained hierarchy with L+1
/// levels. chi = 1: 1/(1 + 1/(2 eta (L+1))); otherwise
/// 1/(1 + (1-chi)/((1-chi^{L+1}) 2 eta)).
double optimal_theta(const ProblemRates& rates, int L);

/// Same, but capped at 1 - qw*h_min^q1/tol when the setup bounds the finest
/// mesh. Throws infeasible_error when that cap is not positive, i.e. the
/// tolerance is out of reach on the admissible meshes.
double optimal_theta(const OptimalSetup& setup, int L);

/// The mesh sequence solving the optimality difference equation through the
/// given endpoints. Geometric for chi = 1; otherwise the chi-weighted
/// interpolation with the chi^(...) correction term.
std::vector<double> inner_meshes_given_endpoints(double h0, double hL, int L,
                                                 const ProblemRates& rates);

/// Bounds on the optimal split when the coarsest mesh is pinned at h0
/// (chi != 1, L >= 1 only).
std::pair<double, double> theta_bounds_h0_constrained(const OptimalSetup& setup, double h0, int L);

/// Golden-section minimization of the pinned-h0 work over theta within the
/// bounds above; 1e-10 accuracy on theta.
double optimal_theta_h0_constrained(const OptimalSetup& setup, double h0, int L);

/// Real-valued interval containing the optimal number of levels.
/// chi = 1 requires tol < qw * (v0/qs)^eta and throws infeasible_error
/// otherwise.
std::pair<double, double> l_bounds(const OptimalSetup& setup);

/// The work-minimizing hierarchy for a fixed number of levels. theta
/// defaults to the optimal split (constrained variants included); pass an
/// override to force a specific split.
OptimizedHierarchy optimal_hierarchy_fixed_L(const OptimalSetup& setup, int L,
                                             std::optional<double> theta_override = std::nullopt);

/// Searches the integer window around l_bounds (widened by 2 on both sides,
/// clamped at 0) and returns the work-minimizing level count and hierarchy.
/// Ties break toward fewer levels.
std::pair<int, OptimizedHierarchy> optimal_L(const OptimalSetup& setup);

/// Modeled total work (c_alpha/(theta*tol))^2 (sum_l sqrt(W_l V_l))^2 of the
/// optimal hierarchy for the given L and split.
double predicted_work(const OptimalSetup& setup, int L, double theta);

/// The same total work evaluated through the factored closed form
/// w1 * w2 * f(L,theta) * ((1-chi^{L+1})/(1-chi))^2; chi != 1 only.
/// Kept as an independent algebraic route for validation.
double predicted_work_factored(const OptimalSetup& setup, int L, double theta);

enum class ComplexityCase { chi_below_one, chi_equal_one, chi_above_one };

/// Leading-order complexity work ~ constant * tol^(-rate_exponent), with a
/// (log tol)^2 factor understood in the chi = 1 case.
struct AsymptoticWork {
    ComplexityCase regime;
    double rate_exponent;
    double constant;
};

AsymptoticWork asymptotic_work_constants(const ProblemRates& rates,
                                         const ModelConstants& constants);

/// Ratio h_{l+1}/h_l of the optimal hierarchy. Constant (the level
/// separation of the geometric optimum) when chi = 1, otherwise the
/// level-dependent closed form.
double mesh_ratio(int level, const OptimalSetup& setup, int L, double theta);

namespace detail {

/// (1 - chi^a) / (1 - chi^b) for chi > 0, chi != 1, evaluated without
/// overflow for chi > 1 by rescaling with chi^(-b).
double one_minus_pow_ratio(double chi, double a, double b);

/// log((1 - chi^{n}) / (1 - chi)) = log(1 + chi + ... + chi^{n-1}).
double log_geometric_sum(double chi, int n);

/// Golden-section minimizer of a unimodal function on [lo, hi].
double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double x_tol);

} // namespace detail

} // namespace mlmc
