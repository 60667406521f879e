#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlmc {

/// Thrown when a requested tolerance cannot be met by any feasible hierarchy
/// (e.g. the bias of the smallest allowed mesh already exceeds it).
struct infeasible_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown when model constants cannot be estimated from the available data.
struct calibration_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Convergence and cost exponents of a problem/discretization pair.
///
/// q1: weak order, q2: strong order, d: domain dimension, gamma: cost
/// exponent per degree of freedom. The derived pair (chi, eta) decides the
/// complexity regime and which closed-form branch applies.
struct ProblemRates {
    double q1 = 1.0;
    double q2 = 2.0;
    int d = 1;
    double gamma = 1.0;

    double dgamma() const { return static_cast<double>(d) * gamma; }
    double chi() const { return q2 / dgamma(); }
    double eta() const { return q1 / dgamma(); }

    void validate() const {
        if (!(q1 > 0.0) || !(q2 > 0.0) || d < 1 || !(gamma > 0.0))
            throw std::invalid_argument("ProblemRates: q1, q2, gamma must be > 0 and d >= 1");
        if (q2 > 2.0 * q1 + 1e-12)
            throw std::invalid_argument("ProblemRates: requires q2 <= 2*q1");
    }
};

/// Fitted constants of the bias/variance/cost models plus the confidence
/// coefficient used in the variance budget.
struct ModelConstants {
    double qw = 1.0;      // bias constant, E-error = qw * h^q1
    double qs = 1.0;      // variance decay, V_l = qs * h_{l-1}^q2
    double v0 = 1.0;      // variance on the coarsest level
    double c_alpha = 2.0; // normal quantile for the failure probability

    void validate() const {
        if (!(qw > 0.0) || !(qs > 0.0) || !(v0 > 0.0) || !(c_alpha > 0.0))
            throw std::invalid_argument("ModelConstants: all fields must be > 0");
    }
};

/// Accuracy target and its split between statistical error (theta) and bias
/// (1 - theta).
struct Tolerance {
    double tol;
    double theta;

    void validate() const {
        if (!(tol > 0.0)) throw std::invalid_argument("Tolerance: tol must be > 0");
        if (!(theta > 0.0) || !(theta < 1.0))
            throw std::invalid_argument("Tolerance: theta must lie in (0,1)");
    }
};

enum class HierarchyKind { real_valued, integer_feasible };

/// The estimator hierarchy: L+1 decreasing mesh sizes and the sample count
/// per level. Sample counts are real in the optimization and integers after
/// rounding; `kind` tracks which variant this instance is.
struct Hierarchy {
    std::vector<double> mesh_sizes;
    std::vector<double> samples;
    HierarchyKind kind = HierarchyKind::real_valued;

    int levels() const { return static_cast<int>(mesh_sizes.size()) - 1; }
    std::size_t size() const { return mesh_sizes.size(); }

    void validate() const {
        if (mesh_sizes.empty() || mesh_sizes.size() != samples.size())
            throw std::invalid_argument("Hierarchy: needs equal, non-zero h and M lengths");
        for (std::size_t l = 0; l < mesh_sizes.size(); ++l) {
            if (!(mesh_sizes[l] > 0.0))
                throw std::invalid_argument("Hierarchy: mesh sizes must be > 0");
            if (l > 0 && !(mesh_sizes[l] < mesh_sizes[l - 1]))
                throw std::invalid_argument("Hierarchy: mesh sizes must be strictly decreasing");
            if (!(samples[l] > 0.0))
                throw std::invalid_argument("Hierarchy: sample counts must be > 0");
            if (kind == HierarchyKind::integer_feasible) {
                if (samples[l] < 1.0 || samples[l] != std::floor(samples[l]))
                    throw std::invalid_argument("Hierarchy: integer kind needs integer M >= 1");
            }
        }
    }

    /// True when the mesh sequence is strictly decreasing and positive.
    /// Closed-form hierarchies can violate this for infeasibly large
    /// tolerances; callers use this to reject such candidates.
    bool decreasing() const {
        for (std::size_t l = 0; l < mesh_sizes.size(); ++l) {
            if (!(mesh_sizes[l] > 0.0)) return false;
            if (l > 0 && !(mesh_sizes[l] < mesh_sizes[l - 1])) return false;
        }
        return !mesh_sizes.empty();
    }
};

/// Maps an ideal mesh size onto the discrete set of realizable ones.
using MeshRule = std::function<double(double)>;

/// Meshes with an integer number of cells per dimension on a domain of the
/// given span: h -> span / ceil(span / h). Also covers uniform time grids
/// h = T / N. Ceiling never coarsens a mesh.
inline MeshRule reciprocal_integer_mesh(double span = 1.0) {
    return [span](double h) {
        if (!(h > 0.0)) throw std::domain_error("mesh rule: h must be > 0");
        double n = std::ceil(span / h - 1e-12);
        if (n < 1.0) n = 1.0;
        return span / n;
    };
}

inline const char* to_string(HierarchyKind k) {
    return k == HierarchyKind::real_valued ? "real_valued" : "integer_feasible";
}

inline HierarchyKind hierarchy_kind_from_string(const std::string& s) {
    if (s == "real_valued") return HierarchyKind::real_valued;
    if (s == "integer_feasible") return HierarchyKind::integer_feasible;
    throw std::invalid_argument("unknown hierarchy kind: " + s);
}

} // namespace mlmc
