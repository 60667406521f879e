#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mlmc {

/// Online mean/variance accumulator (Welford) with an associative merge
/// (Chan et al.), plus a running sum of per-sample work.
struct WelfordAccumulator {
    std::int64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;
    double work = 0.0;

    void add(double value, double work_units) {
        ++count;
        double delta = value - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (value - mean);
        work += work_units;
    }

    void merge(const WelfordAccumulator& other) {
        if (other.count == 0) return;
        if (count == 0) {
            *this = other;
            return;
        }
        double delta = other.mean - mean;
        std::int64_t n = count + other.count;
        mean += delta * static_cast<double>(other.count) / static_cast<double>(n);
        m2 += other.m2 + delta * delta * static_cast<double>(count) *
                             static_cast<double>(other.count) / static_cast<double>(n);
        work += other.work;
        count = n;
    }

    /// Unbiased sample variance; 0 until two samples are seen.
    double variance() const {
        return count < 2 ? 0.0 : m2 / static_cast<double>(count - 1);
    }
};

/// Ordinary least squares fit y = intercept + slope * x.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_line: needs two or more matched points");
    double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
    LineFit f;
    f.slope = (n * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / n;
    return f;
}

/// Weighted least squares through the origin: y ~ c * x.
inline double fit_through_origin_weighted(const std::vector<double>& x,
                                          const std::vector<double>& y,
                                          const std::vector<double>& w) {
    if (x.size() != y.size() || x.size() != w.size() || x.empty())
        throw std::invalid_argument("fit_through_origin_weighted: needs matched non-empty data");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += w[i] * x[i] * y[i];
        den += w[i] * x[i] * x[i];
    }
    if (den == 0.0) throw std::invalid_argument("fit_through_origin_weighted: zero design");
    return num / den;
}

/// Linear-interpolated quantile of a sample, q in [0,1].
inline double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile: empty sample");
    std::sort(values.begin(), values.end());
    double pos = q * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// One-sample Kolmogorov-Smirnov statistic against the standard normal CDF.
inline double ks_statistic_normal(std::vector<double> sample) {
    if (sample.empty()) throw std::invalid_argument("ks_statistic_normal: empty sample");
    std::sort(sample.begin(), sample.end());
    double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        double cdf = normal_cdf(sample[i]);
        d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - cdf));
    }
    return d;
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks two-sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        double fa = static_cast<double>(i) / static_cast<double>(a.size());
        double fb = static_cast<double>(j) / static_cast<double>(b.size());
        d = std::max(d, std::abs(fa - fb));
    }
    return d;
}

} // namespace mlmc
