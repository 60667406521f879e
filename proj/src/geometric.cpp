#include "mlmc/geometric.hpp"

#include "mlmc/hierarchy.hpp"

#include <algorithm>
#include <cmath>

namespace mlmc {

double optimal_beta(const ProblemRates& rates) {
    rates.validate();
    double chi = rates.chi();
    if (chi_is_one(chi)) return std::exp(2.0 / rates.q2);
    return std::pow(chi, 2.0 / (rates.dgamma() * (chi - 1.0)));
}

int geometric_levels(double h0, double beta, double theta, double tol,
                     const ModelConstants& constants, const ProblemRates& rates) {
    if (!(beta > 1.0)) throw std::invalid_argument("geometric_levels: beta must be > 1");
    Tolerance{tol, theta}.validate();
    double log_hL = std::log((1.0 - theta) * tol / constants.qw) / rates.q1;
    double raw = (std::log(h0) - log_hL) / std::log(beta);
    double ceiled = std::ceil(raw - 1e-12);
    return ceiled < 0.0 ? 0 : static_cast<int>(ceiled);
}

namespace {

std::vector<double> geometric_meshes(double h0, double beta, int levels) {
    std::vector<double> meshes(levels + 1);
    double log_h0 = std::log(h0), log_beta = std::log(beta);
    for (int l = 0; l <= levels; ++l) meshes[l] = std::exp(log_h0 - l * log_beta);
    return meshes;
}

OptimizedHierarchy assemble(const std::vector<double>& meshes, double theta, double tol,
                            const ModelConstants& constants, const ProblemRates& rates) {
    OptimizedHierarchy out;
    out.hierarchy.kind = HierarchyKind::real_valued;
    out.hierarchy.mesh_sizes = meshes;
    Hierarchy probe{meshes, std::vector<double>(meshes.size(), 1.0), HierarchyKind::real_valued};
    auto variances = model_variances(probe, constants, rates);
    auto works = model_works(probe, rates);
    out.hierarchy.samples = optimal_samples(variances, works, theta, tol, constants.c_alpha);
    out.theta = theta;
    out.levels = static_cast<int>(meshes.size()) - 1;
    out.bias = constants.qw * std::pow(meshes.back(), rates.q1);
    out.variance_budget = std::pow(theta * tol / constants.c_alpha, 2.0);
    double cross = 0.0;
    for (std::size_t l = 0; l < meshes.size(); ++l) cross += std::sqrt(works[l] * variances[l]);
    out.predicted_work = std::pow(constants.c_alpha / (theta * tol) * cross, 2.0);
    return out;
}

} // namespace

OptimizedHierarchy geometric_hierarchy(const GeometricSpec& spec, double theta, double tol,
                                       const ModelConstants& constants,
                                       const ProblemRates& rates) {
    spec.validate();
    Tolerance{tol, theta}.validate();
    rates.validate();
    constants.validate();
    auto meshes = geometric_meshes(spec.h0, spec.beta, spec.levels);
    double bias = constants.qw * std::pow(meshes.back(), rates.q1);
    if (bias > (1.0 - theta) * tol * (1.0 + 1e-9))
        throw infeasible_error("geometric_hierarchy: L too small for the bias constraint");
    return assemble(meshes, theta, tol, constants, rates);
}

double geometric_optimal_h0(const ProblemRates& rates, const ModelConstants& constants) {
    rates.validate();
    constants.validate();
    double chi = rates.chi();
    if (chi_is_one(chi))
        throw std::domain_error("geometric_optimal_h0: defined for chi != 1 only");
    return std::pow(constants.v0 / constants.qs, 1.0 / rates.q2) *
           std::pow(chi, 2.0 / (rates.dgamma() * (1.0 - chi)));
}

AsymptoticWork geometric_work_constant(const ProblemRates& rates,
                                       const ModelConstants& constants, double h0) {
    AsymptoticWork out = asymptotic_work_constants(rates, constants);
    double chi = rates.chi();
    if (out.regime == ComplexityCase::chi_above_one) {
        double edge = std::sqrt(constants.v0) * std::pow(h0, -rates.q2 / 2.0) +
                      std::sqrt(constants.qs) * std::pow(chi, chi / (chi - 1.0)) / (chi - 1.0);
        out.constant = constants.c_alpha * constants.c_alpha *
                       std::pow(h0, rates.dgamma() * (chi - 1.0)) * edge * edge;
    }
    return out;
}

double force_geometric_theta(int L, double beta, double tol, const ModelConstants& constants,
                             const ProblemRates& rates) {
    if (L < 0) throw std::invalid_argument("force_geometric_theta: L must be >= 0");
    if (!(beta > 1.0)) throw std::invalid_argument("force_geometric_theta: beta must be > 1");
    double eta_over_chi = rates.eta() / rates.chi();
    double theta = 1.0 - constants.qw / tol * std::pow(beta, -rates.q1 * (L + 1)) *
                             std::pow(constants.v0 / constants.qs, eta_over_chi);
    if (!(theta > 0.0))
        throw infeasible_error("force_geometric_theta: L too small for a positive split");
    return theta;
}

double geometric_work_closed_form(double h0, double beta, int L, double theta, double tol,
                                  const ModelConstants& constants, const ProblemRates& rates) {
    Tolerance{tol, theta}.validate();
    double chi = rates.chi();
    double q2 = rates.q2;
    double dg = rates.dgamma();
    double budget = std::pow(constants.c_alpha / (theta * tol), 2.0);
    double coarse = std::sqrt(constants.v0) * std::pow(h0, -q2 / 2.0);
    if (chi_is_one(chi)) {
        double edge = coarse + L * std::sqrt(constants.qs) * std::pow(beta, q2 / 2.0);
        return budget * edge * edge;
    }
    double tail = (1.0 - std::pow(beta, L * (dg - q2) / 2.0)) /
                  (std::pow(beta, -dg / 2.0) - std::pow(beta, -q2 / 2.0));
    double edge = coarse + std::sqrt(constants.qs) * tail;
    return budget * std::pow(h0, dg * (chi - 1.0)) * edge * edge;
}

OptimizedHierarchy best_geometric_hierarchy(const OptimalSetup& setup,
                                            std::optional<double> beta_override,
                                            std::optional<int> max_levels) {
    setup.validate();
    const auto& rates = setup.rates;
    const auto& k = setup.constants;
    double beta = beta_override ? *beta_override : optimal_beta(rates);
    if (!(beta > 1.0)) throw std::invalid_argument("best_geometric_hierarchy: beta must be > 1");

    double chi = rates.chi();
    double h0;
    if (!chi_is_one(chi) && chi > 1.0) {
        h0 = geometric_optimal_h0(rates, k);
        if (setup.h_max) h0 = std::min(h0, *setup.h_max);
    } else {
        // No closed-form coarsest mesh here; use the coarsest admissible one.
        h0 = setup.h_max ? *setup.h_max : 0.5;
    }
    if (setup.h_min) h0 = std::max(h0, *setup.h_min);

    // For fixed meshes the work scales as theta^-2, so the best split per
    // candidate L is the one that makes the bias constraint exactly active.
    // That collapses the (theta, L) optimization to a scan over L.
    int hi_cap = max_levels ? *max_levels : 400;
    bool found = false;
    OptimizedHierarchy best;
    int rising = 0;
    for (int L = 0; L <= hi_cap; ++L) {
        double hL = h0 * std::pow(beta, -static_cast<double>(L));
        if (setup.h_min && hL < *setup.h_min * (1.0 - 1e-12)) break;
        double theta = 1.0 - k.qw * std::pow(hL, rates.q1) / setup.tol;
        if (!(theta > 0.0)) continue; // bias alone exceeds tol at this depth
        if (theta >= 1.0) theta = std::nextafter(1.0, 0.0);
        auto cand = assemble(geometric_meshes(h0, beta, L), theta, setup.tol, k, rates);
        if (!found || cand.predicted_work < best.predicted_work) {
            found = true;
            best = std::move(cand);
            rising = 0;
        } else if (++rising >= 8) {
            break;
        }
    }
    if (!found)
        throw infeasible_error("best_geometric_hierarchy: no feasible level count found");
    return best;
}

} // namespace mlmc
