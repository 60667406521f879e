#pragma once

// Test-side reference computations, kept independent of the closed forms
// they are used to check.

#include "mlmc/types.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

/// Golden-section search with a parabolic polish; accurate enough to locate
/// smooth minima to ~1e-10.
inline double minimize_1d(const std::function<double(double)>& f, double lo, double hi) {
    const double inv_phi = 0.6180339887498948482;
    double a = lo, b = hi;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > 1e-11) {
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
    // Parabolic refinements through (x-h, x, x+h).
    double x = 0.5 * (a + b);
    for (int pass = 0; pass < 3; ++pass) {
        double h = std::max(1e-9 * (std::abs(x) + 1.0), 0.25 * (b - a));
        double fm = f(x - h), f0 = f(x), fp = f(x + h);
        double denom = fm - 2.0 * f0 + fp;
        if (!(denom > 0.0)) break;
        double step = 0.5 * h * (fm - fp) / denom;
        if (std::abs(step) > h) break;
        double xn = x - step; // vertex of the fitted parabola
        if (xn > lo && xn < hi && f(xn) <= f0) x = xn;
    }
    return x;
}

/// Bisection solve of f(x) = 0 on [lo, hi] with f(lo), f(hi) of opposite sign.
inline double bisect(const std::function<double(double)>& f, double lo, double hi) {
    double flo = f(lo);
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        double fmid = f(mid);
        if ((flo < 0.0) == (fmid < 0.0)) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// sum_l sqrt(W_l V_l) under the bias/variance/work models for given meshes.
inline double cross_term(const std::vector<double>& meshes, const mlmc::ModelConstants& k,
                         const mlmc::ProblemRates& r) {
    double sum = std::sqrt(k.v0 * std::pow(meshes[0], -r.dgamma()));
    for (std::size_t l = 1; l < meshes.size(); ++l)
        sum += std::sqrt(k.qs * std::pow(meshes[l - 1], r.q2) *
                         std::pow(meshes[l], -r.dgamma()));
    return sum;
}

/// Coordinate-descent minimization of cross_term over h_0..h_{L-1} in log
/// space with h_L fixed; the reference for the closed-form optimal meshes.
inline std::vector<double> descend_meshes(double h_finest, int levels,
                                          const mlmc::ModelConstants& k,
                                          const mlmc::ProblemRates& r) {
    std::vector<double> meshes(levels + 1);
    double span = 60.0; // log-units of bracket above the finest mesh
    for (int l = 0; l <= levels; ++l)
        meshes[l] = h_finest * std::exp(2.0 * (levels - l) / std::max(1, levels));
    meshes[levels] = h_finest;

    auto objective = [&]() { return cross_term(meshes, k, r); };
    for (int sweep = 0; sweep < 4000; ++sweep) {
        double moved = 0.0;
        for (int l = 0; l < levels; ++l) {
            double lo = std::log(h_finest) - 1.0;
            double hi = std::log(h_finest) + span;
            double before = std::log(meshes[l]);
            double best = oracle::minimize_1d(
                [&](double x) {
                    meshes[l] = std::exp(x);
                    return objective();
                },
                lo, hi);
            meshes[l] = std::exp(best);
            moved = std::max(moved, std::abs(best - before));
        }
        if (moved < 1e-12) break;
    }
    return meshes;
}

} // namespace oracle
