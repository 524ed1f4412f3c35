#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqdhydro/age_grid.hpp"
#include "sqdhydro/dists.hpp"
#include "sqdhydro/poly.hpp"

namespace sqdh {

// Levels whose mass (and feeding level's mass) sit below this floor are
// treated as numerically extinct by the fluid stepper.
inline constexpr double kLevelFloor = 1e-30;

// Deterministic fluid state: one age measure per level plus the scalar
// level masses S_l, cumulative departures D_l, and cumulative routing
// inflow integrals. Levels are 1-based; index 0 is unused padding.
struct FluidState {
    AgeGrid grid;
    int l_max = 0;
    double t = 0.0;
    std::vector<std::vector<double>> w;  // w[l][bin]
    std::vector<double> S;               // S[l] = total mass of level l
    std::vector<double> D;               // cumulative departures from level >= l
    std::vector<double> eta_int;         // cumulative integral of <1, eta_l>
    std::vector<int> hi;                 // bins [0, hi[l]) may be occupied
    double mass_leak = 0.0;              // age/level truncation bookkeeping

    static FluidState empty(const AgeGrid& grid, int l_max) {
        FluidState st;
        st.grid = grid;
        st.l_max = l_max;
        st.w.assign(static_cast<std::size_t>(l_max) + 1,
                    std::vector<double>(static_cast<std::size_t>(grid.n_bins), 0.0));
        st.S.assign(static_cast<std::size_t>(l_max) + 2, 0.0);
        st.D.assign(static_cast<std::size_t>(l_max) + 2, 0.0);
        st.eta_int.assign(static_cast<std::size_t>(l_max) + 1, 0.0);
        st.hi.assign(static_cast<std::size_t>(l_max) + 1, 0);
        return st;
    }

    // Point atoms (age, mass) per level.
    static FluidState from_atoms(const AgeGrid& grid, int l_max,
                                 const std::vector<std::vector<std::pair<double, double>>>& atoms) {
        FluidState st = empty(grid, l_max);
        for (std::size_t l = 1; l < atoms.size() && l <= static_cast<std::size_t>(l_max); ++l) {
            for (const auto& [age, mass] : atoms[l]) {
                const int b = grid.bin_of(age);
                if (b >= grid.n_bins) throw std::invalid_argument("from_atoms: age beyond a_max");
                st.w[l][static_cast<std::size_t>(b)] += mass;
                st.hi[l] = std::max(st.hi[l], b + 1);
            }
            st.refresh_level(static_cast<int>(l));
        }
        st.check_ordered();
        return st;
    }

    // Fluid analog of iid queue lengths: S_l(0) = P{len >= l}, with the
    // in-service age law binned by CDF differences.
    static FluidState from_iid(const AgeGrid& grid, int l_max, const std::vector<double>& pmf,
                               const Distribution* age_law) {
        FluidState st = empty(grid, l_max);
        std::vector<double> tail(pmf.size() + 1, 0.0);
        for (std::size_t x = pmf.size(); x-- > 0;) tail[x] = tail[x + 1] + pmf[x];
        for (int l = 1; l <= l_max; ++l) {
            const double mass = static_cast<std::size_t>(l) < tail.size() ? tail[static_cast<std::size_t>(l)] : 0.0;
            if (mass <= 0.0) continue;
            auto& row = st.w[static_cast<std::size_t>(l)];
            if (age_law == nullptr) {
                row[0] = mass;  // ages identically zero
                st.hi[static_cast<std::size_t>(l)] = 1;
            } else {
                for (int i = 0; i < grid.n_bins; ++i) {
                    const double p = age_law->cdf(grid.left_edge(i + 1)) - age_law->cdf(grid.left_edge(i));
                    row[static_cast<std::size_t>(i)] = mass * p;
                }
                st.hi[static_cast<std::size_t>(l)] = grid.n_bins;
            }
            st.refresh_level(l);
        }
        return st;
    }

    // Empirical ingestion of measures (e.g. a simulation snapshot).
    static FluidState from_measures(const AgeGrid& grid, int l_max,
                                    const std::vector<AgeMeasure>& measures) {
        FluidState st = empty(grid, l_max);
        for (std::size_t l = 1; l < measures.size() && l <= static_cast<std::size_t>(l_max); ++l) {
            if (static_cast<int>(measures[l].w.size()) != grid.n_bins)
                throw std::invalid_argument("from_measures: grid mismatch");
            st.w[l] = measures[l].w;
            st.mass_leak += measures[l].overflow;
            st.hi[l] = grid.n_bins;
            st.refresh_level(static_cast<int>(l));
        }
        st.check_ordered();
        return st;
    }

    void refresh_level(int l) {
        double s = 0.0;
        for (double x : w[static_cast<std::size_t>(l)]) s += x;
        S[static_cast<std::size_t>(l)] = s;
    }

    void check_ordered(double slack = 1e-12) const {
        for (int l = 1; l < l_max; ++l) {
            if (S[static_cast<std::size_t>(l) + 1] > S[static_cast<std::size_t>(l)] + slack)
                throw std::invalid_argument("FluidState: level masses not ordered");
        }
        if (l_max >= 1 && S[1] > 1.0 + slack)
            throw std::invalid_argument("FluidState: S_1 exceeds 1");
    }

    AgeMeasure measure(int l) const {
        AgeMeasure m(grid.n_bins);
        m.w = w[static_cast<std::size_t>(l)];
        return m;
    }
};

// Routing inflow rates eta_l evaluated at a state: a boundary influx rate
// at level 1 and binwise rate vectors for levels >= 2.
struct EtaRates {
    double r1 = 0.0;                              // lambda (1 - S_1^d)
    std::vector<std::vector<double>> bin_rates;   // [l][bin], l >= 2
    std::vector<double> totals;                   // <1, eta_l> per level

    double total(int l) const { return totals[static_cast<std::size_t>(l)]; }
};

inline EtaRates eta(const FluidState& st, double lambda, int d) {
    EtaRates e;
    e.bin_rates.assign(static_cast<std::size_t>(st.l_max) + 1, {});
    e.totals.assign(static_cast<std::size_t>(st.l_max) + 1, 0.0);
    e.r1 = lambda * (1.0 - std::pow(st.S[1], d));
    e.totals[1] = e.r1;
    for (int l = 2; l <= st.l_max; ++l) {
        const double p = lambda * poly_P(d, st.S[static_cast<std::size_t>(l) - 1], st.S[static_cast<std::size_t>(l)]);
        auto& row = e.bin_rates[static_cast<std::size_t>(l)];
        row.assign(static_cast<std::size_t>(st.grid.n_bins), 0.0);
        double tot = 0.0;
        const auto& wp = st.w[static_cast<std::size_t>(l) - 1];
        const auto& wc = st.w[static_cast<std::size_t>(l)];
        const int n = std::max(st.hi[static_cast<std::size_t>(l) - 1], st.hi[static_cast<std::size_t>(l)]);
        for (int i = 0; i < n; ++i) {
            const double r = p * (wp[static_cast<std::size_t>(i)] - wc[static_cast<std::size_t>(i)]);
            row[static_cast<std::size_t>(i)] = r;
            tot += r;
        }
        e.totals[static_cast<std::size_t>(l)] = tot;
    }
    return e;
}

struct FluidTrace {
    std::vector<double> times;
    int l_max = 0;
    AgeGrid grid;
    // rows indexed [time][level] (level index 0 unused)
    std::vector<std::vector<double>> S, D, eta_int;
    std::vector<double> mass_leak;
    std::vector<std::vector<AgeMeasure>> measures;  // optional, [time][level]
    double max_ordering_violation = 0.0;
    long picard_sweeps = 0;

    std::size_t index_of_time(double t) const {
        for (std::size_t i = 0; i < times.size(); ++i)
            if (std::abs(times[i] - t) <= 1e-9) return i;
        throw std::invalid_argument("FluidTrace: no sample at requested time");
    }
};

// Explicit transport solver for the fluid equations. Per step, with all
// increments evaluated at the pre-step state and applied simultaneously:
//   - every level's bin content, augmented by the routing inflow
//     dt*lambda*P_d(S_{l-1},S_l)*(w_{l-1}-w_l) for l >= 2, moves up one
//     age index scaled by the survival ratio of its left edge;
//   - the killed fraction accumulates into D_l, with mass transported past
//     a_max also counted as departed and logged in mass_leak;
//   - bin 0 receives the service starts dD_{l+1}, plus the boundary influx
//     r1*dt at level 1;
//   - routing mass that would enter level l_max+1 is logged in mass_leak.
// The augment-then-transport form keeps the binwise level ordering exact
// whenever dt*lambda*d <= 1.
class FluidSolver {
  public:
    FluidSolver(Distribution service, double lambda, int d, const AgeGrid& grid, int l_max,
                bool validate = true)
        : service_(std::move(service)),
          lambda_(lambda),
          d_(d),
          grid_(grid),
          l_max_(l_max),
          validate_(validate) {
        if (d < 1) throw std::invalid_argument("FluidSolver: d must be >= 1");
        if (lambda < 0.0) throw std::invalid_argument("FluidSolver: lambda must be >= 0");
        if (l_max < 1) throw std::invalid_argument("FluidSolver: l_max must be >= 1");
        if (lambda * d * grid.da >= 1.0)
            throw std::invalid_argument(
                "FluidSolver: dt*lambda*d >= 1 violates the step-size guard; use dt < " +
                std::to_string(1.0 / (lambda * d)));
        if (std::isfinite(service_.support_end()) && grid.a_max > service_.support_end())
            throw std::invalid_argument("FluidSolver: a_max must not exceed the service support");
        sr_.resize(static_cast<std::size_t>(grid.n_bins));
        for (int i = 0; i < grid.n_bins; ++i)
            sr_[static_cast<std::size_t>(i)] = service_.survival_ratio(grid.left_edge(i), grid.da);
    }

    const AgeGrid& grid() const { return grid_; }
    double max_ordering_violation() const { return max_ordering_violation_; }

    void step(FluidState& st) const {
        const double dt = grid_.da;
        const int n = grid_.n_bins;
        if (next_.size() != static_cast<std::size_t>(l_max_) + 1 ||
            (l_max_ >= 1 && next_[1].size() != static_cast<std::size_t>(n))) {
            next_.assign(static_cast<std::size_t>(l_max_) + 1,
                         std::vector<double>(static_cast<std::size_t>(n), 0.0));
            fill_ext_.assign(static_cast<std::size_t>(l_max_) + 1, 0);
        }
        std::vector<double> delta_d(static_cast<std::size_t>(l_max_) + 2, 0.0);
        std::vector<double> interior(static_cast<std::size_t>(l_max_) + 1, 0.0);
        std::vector<char> alive(static_cast<std::size_t>(l_max_) + 1, 1);
        std::vector<int> ext(static_cast<std::size_t>(l_max_) + 1, 0);
        for (int l = 1; l <= l_max_; ++l)
            ext[static_cast<std::size_t>(l)] =
                l >= 2 ? std::max(st.hi[static_cast<std::size_t>(l)], st.hi[static_cast<std::size_t>(l) - 1])
                       : st.hi[static_cast<std::size_t>(l)];

        // Pass 1: augmented transport and departures. st.w rows stay at their
        // pre-step content until the swap in pass 2, so level l can read the
        // pre-step row of level l-1 directly.
        for (int l = 1; l <= l_max_; ++l) {
            const std::size_t ul = static_cast<std::size_t>(l);
            const double s_prev = l >= 2 ? st.S[ul - 1] : 1.0;
            // Levels carrying no noticeable mass (and fed none) are zeroed
            // outright; the discarded dust is logged in mass_leak.
            if (l >= 2 && s_prev <= kLevelFloor && st.S[ul] <= kLevelFloor) {
                st.mass_leak += st.S[ul];
                auto& row = st.w[ul];
                std::fill(row.begin(), row.begin() + st.hi[ul], 0.0);
                st.S[ul] = 0.0;
                st.hi[ul] = 0;
                ext[ul] = 0;
                delta_d[ul] = 0.0;
                interior[ul] = 0.0;
                alive[ul] = 0;
                continue;
            }
            const double* cur = st.w[ul].data();
            const double* wp = l >= 2 ? st.w[ul - 1].data() : nullptr;
            auto& out = next_[ul];
            const double q = l >= 2 ? dt * lambda_ * poly_P(d_, s_prev, st.S[ul]) : 0.0;
            const int e = ext[ul];
            const int m = std::min(e, n - 1);  // bin n-1 would transport past a_max
            double overflow = 0.0;
            const double pre_total = l >= 2 ? st.S[ul] + q * (s_prev - st.S[ul]) : st.S[ul];
            double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
            if (l >= 2) {
                int i = 0;
                for (; i + 4 <= m; i += 4) {
                    const double p0 = cur[i] + q * (wp[i] - cur[i]);
                    const double p1 = cur[i + 1] + q * (wp[i + 1] - cur[i + 1]);
                    const double p2 = cur[i + 2] + q * (wp[i + 2] - cur[i + 2]);
                    const double p3 = cur[i + 3] + q * (wp[i + 3] - cur[i + 3]);
                    const double m0 = p0 * sr_[static_cast<std::size_t>(i)];
                    const double m1 = p1 * sr_[static_cast<std::size_t>(i) + 1];
                    const double m2 = p2 * sr_[static_cast<std::size_t>(i) + 2];
                    const double m3 = p3 * sr_[static_cast<std::size_t>(i) + 3];
                    out[static_cast<std::size_t>(i) + 1] = m0;
                    out[static_cast<std::size_t>(i) + 2] = m1;
                    out[static_cast<std::size_t>(i) + 3] = m2;
                    out[static_cast<std::size_t>(i) + 4] = m3;
                    acc0 += m0;
                    acc1 += m1;
                    acc2 += m2;
                    acc3 += m3;
                }
                for (; i < m; ++i) {
                    const double pre = cur[i] + q * (wp[i] - cur[i]);
                    const double moved = pre * sr_[static_cast<std::size_t>(i)];
                    out[static_cast<std::size_t>(i) + 1] = moved;
                    acc0 += moved;
                }
                if (e == n) {
                    const double pre = cur[n - 1] + q * (wp[n - 1] - cur[n - 1]);
                    overflow = pre * sr_[static_cast<std::size_t>(n) - 1];
                }
            } else {
                int i = 0;
                for (; i + 4 <= m; i += 4) {
                    const double m0 = cur[i] * sr_[static_cast<std::size_t>(i)];
                    const double m1 = cur[i + 1] * sr_[static_cast<std::size_t>(i) + 1];
                    const double m2 = cur[i + 2] * sr_[static_cast<std::size_t>(i) + 2];
                    const double m3 = cur[i + 3] * sr_[static_cast<std::size_t>(i) + 3];
                    out[static_cast<std::size_t>(i) + 1] = m0;
                    out[static_cast<std::size_t>(i) + 2] = m1;
                    out[static_cast<std::size_t>(i) + 3] = m2;
                    out[static_cast<std::size_t>(i) + 4] = m3;
                    acc0 += m0;
                    acc1 += m1;
                    acc2 += m2;
                    acc3 += m3;
                }
                for (; i < m; ++i) {
                    const double moved = cur[i] * sr_[static_cast<std::size_t>(i)];
                    out[static_cast<std::size_t>(i) + 1] = moved;
                    acc0 += moved;
                }
                if (e == n) overflow = cur[n - 1] * sr_[static_cast<std::size_t>(n) - 1];
            }
            const double surv = ((acc0 + acc1) + (acc2 + acc3)) + overflow;
            // Entries beyond the freshly written range may be stale from an
            // earlier use of this buffer.
            const int written = std::min(n, e + 1);
            if (fill_ext_[ul] > written)
                std::fill(out.begin() + written, out.begin() + fill_ext_[ul], 0.0);
            const double death = pre_total - surv;
            delta_d[ul] = death + overflow;
            interior[ul] = surv - overflow;
            st.mass_leak += overflow;
        }

        // Bookkeeping at the pre-step state.
        const double r1 = lambda_ * (1.0 - std::pow(st.S[1], d_));
        st.eta_int[1] += r1 * dt;
        for (int l = 2; l <= l_max_; ++l) {
            const std::size_t ul = static_cast<std::size_t>(l);
            const double q = dt * lambda_ * poly_P(d_, st.S[ul - 1], st.S[ul]);
            st.eta_int[ul] += q * (st.S[ul - 1] - st.S[ul]);
        }
        st.mass_leak += dt * lambda_ * std::pow(st.S[static_cast<std::size_t>(l_max_)], d_);

        // Pass 2: boundary feeds, then commit. Dead levels keep their zeroed
        // row; their feed is necessarily zero since the level above is dead
        // as well.
        for (int l = 1; l <= l_max_; ++l) {
            const std::size_t ul = static_cast<std::size_t>(l);
            if (!alive[ul]) {
                st.mass_leak += delta_d[ul + 1];
                continue;
            }
            auto& out = next_[ul];
            double feed = delta_d[ul + 1];
            if (l == 1) feed += r1 * dt;
            out[0] = feed;
            st.S[ul] = interior[ul] + feed;
            st.D[ul] += delta_d[ul];
            const int old_hi = st.hi[ul];
            st.hi[ul] = std::min(n, std::max(ext[ul] + 1, feed > 0.0 ? 1 : 0));
            st.w[ul].swap(out);
            // The swapped-in buffer now holds the old pre-step row.
            fill_ext_[ul] = std::max(old_hi, std::min(n, ext[ul] + 1));
        }
        st.t += dt;

        if (validate_) enforce_ordering(st);
    }

    FluidTrace solve(FluidState st, double T, const std::vector<double>& sample_times,
                     bool record_measures = false) const {
        FluidTrace tr;
        tr.l_max = l_max_;
        tr.grid = grid_;
        const double dt = grid_.da;
        const long n_steps = static_cast<long>(std::llround(T / dt));
        if (std::abs(n_steps * dt - T) > 1e-9 * std::max(1.0, T))
            throw std::invalid_argument("solve: T must be a multiple of dt");
        std::size_t next_sample = 0;
        for (long k = 0; k <= n_steps; ++k) {
            const double t = k * dt;
            while (next_sample < sample_times.size() &&
                   sample_times[next_sample] <= t + 1e-9) {
                record(tr, st, record_measures);
                ++next_sample;
            }
            if (k < n_steps) step(st);
        }
        tr.max_ordering_violation = max_ordering_violation_;
        return tr;
    }

  private:
    void record(FluidTrace& tr, const FluidState& st, bool record_measures) const {
        tr.times.push_back(st.t);
        tr.S.push_back(st.S);
        tr.D.push_back(st.D);
        tr.eta_int.push_back(st.eta_int);
        tr.mass_leak.push_back(st.mass_leak);
        if (record_measures) {
            std::vector<AgeMeasure> ms(static_cast<std::size_t>(l_max_) + 1);
            for (int l = 1; l <= l_max_; ++l) ms[static_cast<std::size_t>(l)] = st.measure(l);
            tr.measures.push_back(std::move(ms));
        }
    }

    void enforce_ordering(FluidState& st) const {
        for (int l = 1; l <= l_max_; ++l) {
            auto& row = st.w[static_cast<std::size_t>(l)];
            const int hi = st.hi[static_cast<std::size_t>(l)];
            for (int i = 0; i < hi; ++i) {
                const std::size_t ui = static_cast<std::size_t>(i);
                if (row[ui] < 0.0) {
                    max_ordering_violation_ = std::max(max_ordering_violation_, -row[ui]);
                    if (row[ui] < -1e-12)
                        throw std::runtime_error(
                            "fluid_step: negative bin mass beyond slack; reduce dt below " +
                            std::to_string(1.0 / (lambda_ * d_)));
                    row[ui] = 0.0;
                }
                if (l >= 2) {
                    const double cap = st.w[static_cast<std::size_t>(l) - 1][ui];
                    if (row[ui] > cap) {
                        max_ordering_violation_ = std::max(max_ordering_violation_, row[ui] - cap);
                        row[ui] = cap;  // clamp back to the feasible set
                    }
                }
            }
        }
    }

    Distribution service_;
    double lambda_;
    int d_;
    AgeGrid grid_;
    int l_max_;
    bool validate_;
    std::vector<double> sr_;
    mutable std::vector<std::vector<double>> next_;
    mutable std::vector<int> fill_ext_;
    mutable double max_ordering_violation_ = 0.0;
};

// Per-level sup over recorded times of the mass-balance defect
// |S_l(t) - S_l(0) - D_{l+1}(t) - int <1,eta_l> + D_l(t)|, less the
// logged truncation allowance.
inline std::vector<double> balance_residual(const FluidTrace& tr) {
    std::vector<double> res(static_cast<std::size_t>(tr.l_max) + 1, 0.0);
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        for (int l = 1; l <= tr.l_max; ++l) {
            const std::size_t ul = static_cast<std::size_t>(l);
            const double raw = std::abs(tr.S[k][ul] - tr.S[0][ul] - tr.D[k][ul + 1] -
                                        tr.eta_int[k][ul] + tr.D[k][ul]);
            const double adj = std::max(0.0, raw - tr.mass_leak[k]);
            res[ul] = std::max(res[ul], adj);
        }
    }
    return res;
}

struct OdeTrace {
    std::vector<double> times;
    std::vector<std::vector<double>> s;  // [time][level], level index 0 holds 1.0

    std::size_t index_of_time(double t) const {
        for (std::size_t i = 0; i < times.size(); ++i)
            if (std::abs(times[i] - t) <= 1e-9) return i;
        throw std::invalid_argument("OdeTrace: no sample at requested time");
    }
};

// Classical exponential-service reference: RK4 on
//   ds_l/dt = lambda (s_{l-1}^d - s_l^d) - (s_l - s_{l+1}),
// with s_0 = 1 and s_{l_max+1} = 0.
inline OdeTrace ode_reference(double lambda, int d, std::vector<double> s0, double T, double dt,
                              const std::vector<double>& sample_times) {
    const int l_max = static_cast<int>(s0.size());
    auto deriv = [&](const std::vector<double>& s, std::vector<double>& out) {
        for (int l = 1; l <= l_max; ++l) {
            const double sm = l == 1 ? 1.0 : s[static_cast<std::size_t>(l) - 2];
            const double sc = s[static_cast<std::size_t>(l) - 1];
            const double sp = l == l_max ? 0.0 : s[static_cast<std::size_t>(l)];
            out[static_cast<std::size_t>(l) - 1] =
                lambda * (std::pow(sm, d) - std::pow(sc, d)) - (sc - sp);
        }
    };
    OdeTrace tr;
    const long n_steps = static_cast<long>(std::llround(T / dt));
    std::vector<double> k1(s0.size()), k2(s0.size()), k3(s0.size()), k4(s0.size()), tmp(s0.size());
    std::size_t next_sample = 0;
    for (long k = 0; k <= n_steps; ++k) {
        const double t = k * dt;
        while (next_sample < sample_times.size() && sample_times[next_sample] <= t + 1e-9) {
            tr.times.push_back(t);
            std::vector<double> row(s0.size() + 1);
            row[0] = 1.0;
            std::copy(s0.begin(), s0.end(), row.begin() + 1);
            tr.s.push_back(std::move(row));
            ++next_sample;
        }
        if (k == n_steps) break;
        deriv(s0, k1);
        for (std::size_t i = 0; i < s0.size(); ++i) tmp[i] = s0[i] + 0.5 * dt * k1[i];
        deriv(tmp, k2);
        for (std::size_t i = 0; i < s0.size(); ++i) tmp[i] = s0[i] + 0.5 * dt * k2[i];
        deriv(tmp, k3);
        for (std::size_t i = 0; i < s0.size(); ++i) tmp[i] = s0[i] + dt * k3[i];
        deriv(tmp, k4);
        for (std::size_t i = 0; i < s0.size(); ++i)
            s0[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return tr;
}

// Default age truncation: smallest grid-aligned a with survival < tol
// (capped just under L for finite support).
inline double default_a_max(const Distribution& service, double dt, double tol = 1e-10) {
    if (std::isfinite(service.support_end())) {
        const double L = service.support_end();
        return std::max(dt, std::floor((L * (1.0 - 1e-9)) / dt) * dt);
    }
    double a = 1.0;
    while (service.survival(a) >= tol) a *= 2.0;
    double lo = a / 2.0, hi = a;
    for (int i = 0; i < 60; ++i) {
        const double m = 0.5 * (lo + hi);
        if (service.survival(m) >= tol)
            lo = m;
        else
            hi = m;
    }
    return std::ceil(hi / dt) * dt;
}

// Default level truncation: smallest l with lambda^((d^l - 1)/(d - 1))
// below tol (the exponential-service equilibrium heuristic), clamped to
// [2, 64].
inline int default_l_max(double lambda, int d, double tol = 1e-8) {
    if (lambda <= 0.0) return 2;
    int l = 1;
    double expo = 1.0;  // (d^l - 1)/(d - 1) at l = 1
    while (l < 64 && std::pow(std::min(lambda, 1.0 - 1e-12), expo) >= tol) {
        ++l;
        expo = expo * d + 1.0;
    }
    return std::max(2, l);
}

}  // namespace sqdh
