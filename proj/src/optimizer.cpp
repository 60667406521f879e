#include "mlmc/optimizer.hpp"

#include "mlmc/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mlmc {

namespace detail {

double one_minus_pow_ratio(double chi, double a, double b) {
    double lc = std::log(chi);
    if (chi < 1.0) return std::expm1(a * lc) / std::expm1(b * lc);
    // chi > 1: rescale by chi^(-b) to keep both factors bounded.
    return std::exp((a - b) * lc) * std::expm1(-a * lc) / std::expm1(-b * lc);
}

double log_geometric_sum(double chi, int n) {
    double lc = std::log(chi);
    if (std::abs(lc) < 1e-14) return std::log(static_cast<double>(n));
    if (chi < 1.0) return std::log(-std::expm1(n * lc)) - std::log(-std::expm1(lc));
    return (n - 1) * lc + std::log(-std::expm1(-n * lc)) - std::log(-std::expm1(-lc));
}

double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double x_tol) {
    const double inv_phi = 0.6180339887498948482;
    double a = lo, b = hi;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > x_tol) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

namespace {

// (chi^a - chi^b) / (1 - chi^c) for 0 <= a <= b <= c, chi != 1.
double pow_diff_ratio(double chi, double a, double b, double c) {
    double lc = std::log(chi);
    if (chi < 1.0) return (std::exp(a * lc) - std::exp(b * lc)) / (-std::expm1(c * lc));
    return (std::exp((a - c) * lc) - std::exp((b - c) * lc)) / std::expm1(-c * lc);
}

} // namespace

} // namespace detail

std::vector<double> optimal_samples(const std::vector<double>& variances,
                                    const std::vector<double>& works, double theta, double tol,
                                    double c_alpha) {
    if (variances.empty() || variances.size() != works.size())
        throw std::invalid_argument("optimal_samples: needs matched non-empty V and W lists");
    Tolerance{tol, theta}.validate();
    double cross = 0.0;
    for (std::size_t l = 0; l < variances.size(); ++l) {
        if (!(variances[l] > 0.0) || !(works[l] > 0.0))
            throw std::invalid_argument("optimal_samples: V and W must be > 0");
        cross += std::sqrt(works[l] * variances[l]);
    }
    double budget_factor = c_alpha / (theta * tol);
    std::vector<double> m(variances.size());
    for (std::size_t l = 0; l < variances.size(); ++l)
        m[l] = budget_factor * budget_factor * std::sqrt(variances[l] / works[l]) * cross;
    return m;
}

double finest_mesh(double theta, double tol, const ModelConstants& constants,
                   const ProblemRates& rates) {
    Tolerance{tol, theta}.validate();
    return std::pow((1.0 - theta) * tol / constants.qw, 1.0 / rates.q1);
}

double optimal_theta(const ProblemRates& rates, int L) {
    if (L < 0) throw std::invalid_argument("optimal_theta: L must be >= 0");
    double chi = rates.chi();
    double eta = rates.eta();
    double ratio = chi_is_one(chi) ? 1.0 / static_cast<double>(L + 1)
                                   : detail::one_minus_pow_ratio(chi, 1.0, L + 1.0);
    return 1.0 / (1.0 + ratio / (2.0 * eta));
}

double optimal_theta(const OptimalSetup& setup, int L) {
    setup.validate();
    double theta = optimal_theta(setup.rates, L);
    if (setup.h_min) {
        double cap = 1.0 - setup.constants.qw * std::pow(*setup.h_min, setup.rates.q1) / setup.tol;
        if (!(cap > 0.0))
            throw infeasible_error("optimal_theta: tolerance out of reach on meshes >= h_min");
        theta = std::min(theta, cap);
    }
    return theta;
}

std::vector<double> inner_meshes_given_endpoints(double h0, double hL, int L,
                                                 const ProblemRates& rates) {
    if (L < 1) throw std::invalid_argument("inner_meshes_given_endpoints: L must be >= 1");
    if (!(h0 > hL) || !(hL > 0.0))
        throw std::invalid_argument("inner_meshes_given_endpoints: requires h0 > hL > 0");
    double chi = rates.chi();
    std::vector<double> meshes(L + 1);
    meshes[0] = h0;
    meshes[L] = hL;
    if (chi_is_one(chi)) {
        double log_beta = (std::log(h0) - std::log(hL)) / L;
        for (int l = 1; l < L; ++l) meshes[l] = std::exp(std::log(h0) - l * log_beta);
        return meshes;
    }
    double lc = std::log(chi);
    double lh0 = std::log(h0), lhL = std::log(hL);
    for (int l = 1; l < L; ++l) {
        double w_hL = detail::one_minus_pow_ratio(chi, l, L);            // (1-chi^l)/(1-chi^L)
        double w_h0 = detail::pow_diff_ratio(chi, l, L, L);              // (chi^l-chi^L)/(1-chi^L)
        double psi = (L * w_hL - l) / (1.0 - chi);
        meshes[l] = std::exp(w_h0 * lh0 + w_hL * lhL - 2.0 / rates.dgamma() * psi * lc);
    }
    return meshes;
}

namespace {

// Exponent Delta and prefactor C of the pinned-h0 work proxy
// theta^-2 (1 + C (1-theta)^-Delta)^2.
std::pair<double, double> pinned_theta_params(const OptimalSetup& setup, double h0, int L) {
    setup.validate();
    if (L < 1) throw std::invalid_argument("theta_bounds_h0_constrained: L must be >= 1");
    double chi = setup.rates.chi();
    if (chi_is_one(chi))
        throw std::domain_error("theta_bounds_h0_constrained: chi = 1 not supported");
    double eta = setup.rates.eta();
    double dg = setup.rates.dgamma();
    double lc = std::log(chi);

    double delta = detail::one_minus_pow_ratio(chi, 1.0, L) / (2.0 * eta);
    // chi exponent L*chi^L/(1-chi^L) - chi/(1-chi), bounded for chi > 1.
    double t = (chi < 1.0) ? L * std::exp(L * lc) / (-std::expm1(L * lc))
                           : L / std::expm1(-L * lc);
    double chi_exp = t - chi / (1.0 - chi);
    double log_c = 0.5 * std::log(setup.constants.qs / setup.constants.v0) +
                   0.5 * dg / detail::one_minus_pow_ratio(chi, L, L + 1.0) * std::log(h0) +
                   chi_exp * lc + detail::log_geometric_sum(chi, L) +
                   delta * std::log(setup.constants.qw / setup.tol);
    return {delta, std::exp(log_c)};
}

} // namespace

std::pair<double, double> theta_bounds_h0_constrained(const OptimalSetup& setup, double h0,
                                                      int L) {
    auto [delta, c] = pinned_theta_params(setup, h0, L);
    double lo = 1.0 / (1.0 + delta);
    double hi = (1.0 + c) / (1.0 + c + c * delta);
    return {lo, hi};
}

double optimal_theta_h0_constrained(const OptimalSetup& setup, double h0, int L) {
    auto [delta, c] = pinned_theta_params(setup, h0, L);
    double lo = 1.0 / (1.0 + delta);
    double hi = (1.0 + c) / (1.0 + c + c * delta);
    auto work_proxy = [&](double theta) {
        return -2.0 * std::log(theta) + 2.0 * std::log1p(c * std::pow(1.0 - theta, -delta));
    };
    if (hi - lo < 1e-14) return 0.5 * (lo + hi);
    return detail::golden_section_minimize(work_proxy, lo, hi, 1e-10);
}

std::pair<double, double> l_bounds(const OptimalSetup& setup) {
    setup.validate();
    double chi = setup.rates.chi();
    double eta = setup.rates.eta();
    const auto& k = setup.constants;
    if (chi_is_one(chi)) {
        double c = std::log(k.qw * std::pow(k.v0 / k.qs, eta) / setup.tol);
        if (!(c > 0.0))
            throw infeasible_error("l_bounds: requires tol < qw*(v0/qs)^eta when chi = 1");
        double e = std::exp(1.0);
        double lo = c / (2.0 * eta) - 1.0;
        double hi = (e * c + 1.0) / ((e - 1.0) * 2.0 * eta) - 1.0;
        return {lo, hi};
    }
    double c1 = eta / chi * std::log(k.v0 / k.qs) + std::log(k.qw);
    double c2 = std::log(chi) * 2.0 * eta / (chi - 1.0);
    double lt = std::log(1.0 / setup.tol);
    double lo = (lt + c1 + std::log(1.0 + 2.0 * eta)) / c2 - 1.0;
    double hi = chi < 1.0
                    ? (lt + c1 + std::log(1.0 + 2.0 * eta / (1.0 - chi))) / c2 - 1.0
                    : chi * (lt + c1 + std::log(2.0 * eta / (chi - 1.0))) / c2 - 1.0;
    return {lo, hi};
}

namespace {

// Level separation of the chi = 1 optimum for a given split.
double log_beta_chi1(const OptimalSetup& s, int L, double theta) {
    double lhs = std::log(s.constants.qw / ((1.0 - theta) * s.tol)) / s.rates.q1 +
                 std::log(s.constants.v0 / s.constants.qs) / s.rates.q2;
    return lhs / (L + 1);
}

std::vector<double> unconstrained_meshes(const OptimalSetup& s, int L, double theta) {
    double chi = s.rates.chi();
    std::vector<double> meshes(L + 1);
    double log_hL = std::log((1.0 - theta) * s.tol / s.constants.qw) / s.rates.q1;
    if (chi_is_one(chi)) {
        double lb = log_beta_chi1(s, L, theta);
        for (int l = 0; l <= L; ++l) meshes[l] = std::exp((L - l) * lb + log_hL);
        return meshes;
    }
    double dg = s.rates.dgamma();
    double lc = std::log(chi);
    double log_vq = std::log(s.constants.v0 / s.constants.qs);
    for (int l = 0; l <= L; ++l) {
        double f1 = detail::one_minus_pow_ratio(chi, l + 1.0, L + 1.0);
        double f2 = detail::pow_diff_ratio(chi, l, L, L + 1.0);
        // chi^(...) correction of the optimality difference equation.
        double head = -detail::pow_diff_ratio(chi, l + 1.0, L + 1.0, L + 1.0);
        double e = 2.0 / (1.0 - chi) * (head + L * f1 - l);
        meshes[l] = std::exp(f1 * log_hL + f2 * log_vq / dg - e * lc / dg);
    }
    return meshes;
}

std::vector<double> closed_form_samples(const OptimalSetup& s, int L, double theta) {
    double chi = s.rates.chi();
    const auto& k = s.constants;
    double log_budget = 2.0 * std::log(k.c_alpha / (theta * s.tol));
    std::vector<double> m(L + 1);
    if (chi_is_one(chi)) {
        double lb = log_beta_chi1(s, L, theta);
        for (int l = 0; l <= L; ++l)
            m[l] = std::exp(-s.rates.q2 * l * lb + std::log(k.v0) +
                            std::log(static_cast<double>(L + 1)) + log_budget);
        return m;
    }
    double eta = s.rates.eta();
    double lc = std::log(chi);
    double log_qterm = std::log(k.qs) / chi - std::log(k.qw) / eta;
    double log_tail = detail::log_geometric_sum(chi, L + 1) - L * lc;
    for (int l = 0; l <= L; ++l) {
        double g = detail::one_minus_pow_ratio(chi, l, L + 1.0);
        double v = detail::pow_diff_ratio(chi, l, L + 1.0, L + 1.0);
        double chi_exponent = -2.0 * chi / (1.0 - chi) * g * (L + 1) +
                              (1.0 + chi) / (1.0 - chi) * l;
        m[l] = std::exp(log_budget + chi / eta * g * std::log((1.0 - theta) * s.tol) +
                        v * std::log(k.v0) + chi * g * log_qterm + log_tail +
                        chi_exponent * lc);
    }
    return m;
}

double model_cross_term(const std::vector<double>& meshes, const OptimalSetup& s) {
    const auto& k = s.constants;
    double cross = std::sqrt(k.v0 * std::pow(meshes[0], -s.rates.dgamma()));
    for (std::size_t l = 1; l < meshes.size(); ++l)
        cross += std::sqrt(k.qs * std::pow(meshes[l - 1], s.rates.q2) *
                           std::pow(meshes[l], -s.rates.dgamma()));
    return cross;
}

// Split for a pinned coarsest mesh when no closed form applies.
double pinned_h0_theta(const OptimalSetup& s, double h0, int L) {
    const auto& k = s.constants;
    if (L == 0) return 1.0 - k.qw * std::pow(h0, s.rates.q1) / s.tol;
    if (!chi_is_one(s.rates.chi())) return optimal_theta_h0_constrained(s, h0, L);
    // chi = 1 with pinned h0 has no published bounds; minimize the exact
    // model work over the splits that keep h_L below h0.
    double theta_floor = 1.0 - k.qw * std::pow(h0, s.rates.q1) / s.tol;
    double lo = std::max(1e-9, theta_floor + 1e-12);
    if (!(lo < 1.0 - 1e-9))
        throw infeasible_error("optimal_hierarchy_fixed_L: no feasible split at h_max");
    auto work = [&](double theta) {
        double hL = finest_mesh(theta, s.tol, k, s.rates);
        if (!(hL < h0)) return std::numeric_limits<double>::infinity();
        auto meshes = inner_meshes_given_endpoints(h0, hL, L, s.rates);
        return -2.0 * std::log(theta) + 2.0 * std::log(model_cross_term(meshes, s));
    };
    return detail::golden_section_minimize(work, lo, 1.0 - 1e-9, 1e-10);
}

} // namespace

OptimizedHierarchy optimal_hierarchy_fixed_L(const OptimalSetup& setup, int L,
                                             std::optional<double> theta_override) {
    setup.validate();
    if (L < 0) throw std::invalid_argument("optimal_hierarchy_fixed_L: L must be >= 0");
    const auto& k = setup.constants;

    double theta = theta_override ? *theta_override : optimal_theta(setup, L);
    Tolerance{setup.tol, theta}.validate();

    std::vector<double> meshes = unconstrained_meshes(setup, L, theta);
    bool use_closed_form_samples = true;

    if (setup.h_max && meshes.front() > *setup.h_max * (1.0 + 1e-12)) {
        double h0 = *setup.h_max;
        if (!theta_override) {
            theta = pinned_h0_theta(setup, h0, L);
            if (setup.h_min) {
                double cap = 1.0 - k.qw * std::pow(*setup.h_min, setup.rates.q1) / setup.tol;
                theta = std::min(theta, cap);
            }
            if (!(theta > 0.0) || !(theta < 1.0))
                throw infeasible_error("optimal_hierarchy_fixed_L: no feasible split at h_max");
        }
        double hL = finest_mesh(theta, setup.tol, k, setup.rates);
        if (L == 0) {
            if (hL > h0 * (1.0 + 1e-12))
                throw infeasible_error("optimal_hierarchy_fixed_L: bias mesh exceeds h_max");
            meshes = {h0};
        } else {
            if (!(hL < h0))
                throw infeasible_error("optimal_hierarchy_fixed_L: bias mesh exceeds h_max");
            meshes = inner_meshes_given_endpoints(h0, hL, L, setup.rates);
        }
        use_closed_form_samples = false;
    }

    if (setup.h_min) {
        bool clamped = false;
        std::vector<double> kept;
        for (double h : meshes) {
            double hc = std::max(h, *setup.h_min);
            clamped = clamped || hc != h;
            if (kept.empty() || hc < kept.back()) kept.push_back(hc);
        }
        if (clamped) {
            meshes = std::move(kept);
            use_closed_form_samples = false;
        }
    }

    int levels = static_cast<int>(meshes.size()) - 1;
    OptimizedHierarchy out;
    out.hierarchy.kind = HierarchyKind::real_valued;
    out.hierarchy.mesh_sizes = meshes;
    if (use_closed_form_samples) {
        out.hierarchy.samples = closed_form_samples(setup, levels, theta);
    } else {
        Hierarchy tmp{meshes, std::vector<double>(meshes.size(), 1.0),
                      HierarchyKind::real_valued};
        out.hierarchy.samples =
            optimal_samples(model_variances(tmp, k, setup.rates),
                            model_works(tmp, setup.rates), theta, setup.tol, k.c_alpha);
    }
    out.theta = theta;
    out.levels = levels;
    out.bias = k.qw * std::pow(meshes.back(), setup.rates.q1);
    out.variance_budget = std::pow(theta * setup.tol / k.c_alpha, 2.0);
    double cross = model_cross_term(meshes, setup);
    out.predicted_work = std::pow(k.c_alpha / (theta * setup.tol) * cross, 2.0);
    return out;
}

std::pair<int, OptimizedHierarchy> optimal_L(const OptimalSetup& setup) {
    setup.validate();
    int lo = 0, hi = 4;
    try {
        auto [blo, bhi] = l_bounds(setup);
        // Widened by 2: mesh constraints can push the optimum below the
        // unconstrained lower bound.
        lo = std::max(0, static_cast<int>(std::floor(blo)) - 2);
        hi = std::max(lo, static_cast<int>(std::ceil(bhi)) + 2);
    } catch (const infeasible_error&) {
        // Tolerance too coarse for the bounds to apply; the optimum sits at
        // a small L, so scan from zero.
    }

    bool found = false;
    int best_L = 0;
    OptimizedHierarchy best;
    for (int L = lo; L <= hi; ++L) {
        OptimizedHierarchy cand;
        try {
            cand = optimal_hierarchy_fixed_L(setup, L);
        } catch (const infeasible_error&) {
            continue;
        }
        if (!cand.hierarchy.decreasing()) continue;
        if (!found || cand.predicted_work < best.predicted_work) {
            found = true;
            best_L = L;
            best = std::move(cand);
        }
    }
    if (!found) throw infeasible_error("optimal_L: no feasible hierarchy in the search window");
    return {best_L, std::move(best)};
}

double predicted_work(const OptimalSetup& setup, int L, double theta) {
    return optimal_hierarchy_fixed_L(setup, L, theta).predicted_work;
}

double predicted_work_factored(const OptimalSetup& setup, int L, double theta) {
    setup.validate();
    double chi = setup.rates.chi();
    if (chi_is_one(chi))
        throw std::domain_error("predicted_work_factored: defined for chi != 1 only");
    double eta = setup.rates.eta();
    double lc = std::log(chi);
    const auto& k = setup.constants;

    double r = detail::one_minus_pow_ratio(chi, 1.0, L + 1.0);
    double s = detail::one_minus_pow_ratio(chi, L, L + 1.0);
    double t = (chi < 1.0) ? std::exp((L + 1) * lc) / (-std::expm1((L + 1) * lc))
                           : 1.0 / std::expm1(-(L + 1.0) * lc);
    double log_w1 = -(2.0 + r / eta) * std::log(setup.tol);
    double log_w2 = 2.0 * std::log(k.c_alpha) + std::log(k.v0) +
                    s * std::log(k.qs / k.v0) + r / eta * std::log(k.qw) +
                    (-2.0 * chi / (1.0 - chi) * s + 2.0 * L * t) * lc;
    double log_f = -2.0 * std::log(theta) - r / eta * std::log(1.0 - theta);
    double log_g2 = 2.0 * detail::log_geometric_sum(chi, L + 1);
    return std::exp(log_w1 + log_w2 + log_f + log_g2);
}

AsymptoticWork asymptotic_work_constants(const ProblemRates& rates,
                                         const ModelConstants& constants) {
    rates.validate();
    constants.validate();
    double chi = rates.chi();
    double eta = rates.eta();
    AsymptoticWork out{};
    if (chi_is_one(chi)) {
        out.regime = ComplexityCase::chi_equal_one;
        out.rate_exponent = 2.0;
        out.constant = constants.c_alpha * constants.c_alpha * std::exp(2.0) * constants.qs /
                       (4.0 * eta * eta);
        return out;
    }
    if (chi < 1.0) {
        out.regime = ComplexityCase::chi_below_one;
        out.rate_exponent = 2.0 * (1.0 + (1.0 - chi) / (2.0 * eta));
        double log_c = 2.0 * std::log(constants.c_alpha) + std::log(constants.qs) +
                       (1.0 - chi) / eta * std::log(constants.qw) -
                       2.0 * chi / (1.0 - chi) * std::log(chi) - 2.0 * std::log(2.0 * eta) +
                       2.0 * (1.0 + (1.0 - chi) / (2.0 * eta)) *
                           std::log(1.0 + 2.0 * eta / (1.0 - chi));
        out.constant = std::exp(log_c);
        return out;
    }
    out.regime = ComplexityCase::chi_above_one;
    out.rate_exponent = 2.0;
    double log_c = 2.0 * std::log(constants.c_alpha) +
                   (chi - 1.0) / chi * std::log(constants.v0) + std::log(constants.qs) / chi +
                   2.0 * chi / (chi - 1.0) * std::log(chi) - 2.0 * std::log(chi - 1.0);
    out.constant = std::exp(log_c);
    return out;
}

double mesh_ratio(int level, const OptimalSetup& setup, int L, double theta) {
    setup.validate();
    if (level < 0 || level >= L) throw std::out_of_range("mesh_ratio: needs 0 <= level < L");
    double chi = setup.rates.chi();
    if (chi_is_one(chi)) return std::exp(-log_beta_chi1(setup, L, theta));
    double dg = setup.rates.dgamma();
    double lc = std::log(chi);
    const auto& k = setup.constants;

    // (chi-1)chi^l/(chi^{L+1}-1) = (chi^l - chi^{l+1})/(1 - chi^{L+1})
    double a1 = detail::pow_diff_ratio(chi, level, level + 1.0, L + 1.0);
    double a3 = detail::pow_diff_ratio(chi, level + 1.0, level + 2.0, L + 1.0);
    // chi^{l+1}/(chi^{L+1}-1), kept bounded for chi > 1.
    double u = (chi < 1.0)
                   ? std::exp((level + 1) * lc) / std::expm1((L + 1.0) * lc)
                   : std::exp((level - L) * lc) / (-std::expm1(-(L + 1.0) * lc));
    double log_ratio = -a1 / dg * std::log(k.v0 / k.qs) +
                       2.0 / dg * (1.0 / (1.0 - chi) + (L + 1.0) * u) * lc +
                       a3 / setup.rates.q1 * std::log((1.0 - theta) * setup.tol / k.qw);
    return std::exp(log_ratio);
}

} // namespace mlmc
