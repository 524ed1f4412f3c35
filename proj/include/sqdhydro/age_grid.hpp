#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sqdh {

// Uniform grid on ages [0, a_max). Bin i covers [i*da, (i+1)*da) and is
// represented by its left edge, so that a time step of exactly da moves
// mass one index up (transport is a pure shift).
struct AgeGrid {
    double da = 0.0;
    double a_max = 0.0;
    int n_bins = 0;

    static AgeGrid make(double da, double a_max) {
        if (!(da > 0.0) || !(a_max > 0.0))
            throw std::invalid_argument("AgeGrid: da and a_max must be > 0");
        AgeGrid g;
        g.da = da;
        g.n_bins = static_cast<int>(std::ceil(a_max / da - 1e-9));
        g.a_max = g.n_bins * da;
        return g;
    }

    double left_edge(int i) const { return i * da; }

    int bin_of(double age) const {
        if (age < 0.0) throw std::domain_error("AgeGrid: negative age");
        return static_cast<int>(std::floor(age / da));
    }

    bool operator==(const AgeGrid& o) const {
        return da == o.da && n_bins == o.n_bins;
    }
};

// A discretized finite measure on [0, a_max): bin masses plus an overflow
// accumulator for mass observed at ages >= a_max.
struct AgeMeasure {
    std::vector<double> w;
    double overflow = 0.0;

    AgeMeasure() = default;
    explicit AgeMeasure(int n_bins) : w(static_cast<std::size_t>(n_bins), 0.0) {}

    void add(const AgeGrid& grid, double age, double mass) {
        const int i = grid.bin_of(age);
        if (i >= grid.n_bins)
            overflow += mass;
        else
            w[static_cast<std::size_t>(i)] += mass;
    }

    double total() const {
        double s = 0.0;
        for (double x : w) s += x;
        return s;
    }

    // CDF over bins evaluated at right edges, normalized to total mass 1.
    // Empty measures yield an empty CDF.
    std::vector<double> normalized_cdf() const {
        std::vector<double> cdf(w.size(), 0.0);
        const double t = total() + overflow;
        if (t <= 0.0) return {};
        double acc = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            acc += w[i];
            cdf[i] = acc / t;
        }
        return cdf;
    }
};

// sup_i |F - G| over shared bin edges of two normalized age measures.
// If either measure carries (numerically) no mass the shape comparison is
// undefined and the distance is reported as zero; total-mass differences
// are the scalar gap's job.
inline double kolmogorov_distance(const AgeMeasure& a, const AgeMeasure& b, double mass_floor = 1e-9) {
    if (a.total() + a.overflow < mass_floor || b.total() + b.overflow < mass_floor) return 0.0;
    const auto fa = a.normalized_cdf();
    const auto fb = b.normalized_cdf();
    if (fa.size() != fb.size())
        throw std::invalid_argument("kolmogorov_distance: measures on different grids");
    double d = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) d = std::max(d, std::abs(fa[i] - fb[i]));
    return d;
}

}  // namespace sqdh
