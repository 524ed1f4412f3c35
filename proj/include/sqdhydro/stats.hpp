#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "sqdhydro/random.hpp"

namespace sqdh {

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double stderr_of_mean(const std::vector<double>& v) {
    return std::sqrt(sample_variance(v) / static_cast<double>(v.size()));
}

// Kolmogorov-Smirnov statistic of a sample against a CDF. Sorts a copy.
inline double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
    if (sample.empty()) throw std::invalid_argument("ks_statistic: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

// Bootstrap standard error of an arbitrary statistic of a sample.
inline double bootstrap_stderr(const std::vector<double>& sample,
                               const std::function<double(const std::vector<double>&)>& statistic,
                               int resamples, Rng& rng) {
    std::vector<double> stats(static_cast<std::size_t>(resamples));
    std::vector<double> re(sample.size());
    for (int b = 0; b < resamples; ++b) {
        for (std::size_t i = 0; i < sample.size(); ++i)
            re[i] = sample[rng.uniform_below(sample.size())];
        stats[static_cast<std::size_t>(b)] = statistic(re);
    }
    double m = mean_of(stats), s = 0.0;
    for (double x : stats) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(resamples - 1));
}

// Two-sample bootstrap stderr of a statistic over paired columns (x, y).
inline double bootstrap_stderr_paired(
    const std::vector<double>& x, const std::vector<double>& y,
    const std::function<double(const std::vector<double>&, const std::vector<double>&)>& statistic,
    int resamples, Rng& rng) {
    if (x.size() != y.size()) throw std::invalid_argument("bootstrap_stderr_paired: size mismatch");
    std::vector<double> stats(static_cast<std::size_t>(resamples));
    std::vector<double> rx(x.size()), ry(y.size());
    for (int b = 0; b < resamples; ++b) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const std::size_t j = rng.uniform_below(x.size());
            rx[i] = x[j];
            ry[i] = y[j];
        }
        stats[static_cast<std::size_t>(b)] = statistic(rx, ry);
    }
    double m = mean_of(stats), s = 0.0;
    for (double v : stats) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(resamples - 1));
}

// Ordinary least squares slope of y against x.
inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("ols_slope: bad input");
    const double mx = mean_of(x), my = mean_of(y);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

// One-sided test that mean(a) > mean(b) at ~95% confidence (Gaussian).
inline bool mean_greater_95(const std::vector<double>& a, const std::vector<double>& b) {
    const double se = std::sqrt(sample_variance(a) / static_cast<double>(a.size()) +
                                sample_variance(b) / static_cast<double>(b.size()));
    return mean_of(a) - mean_of(b) > 1.6449 * se;
}

}  // namespace sqdh
