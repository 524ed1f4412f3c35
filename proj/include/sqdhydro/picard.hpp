#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqdhydro/hydro.hpp"

namespace sqdh {

struct PicardOptions {
    double tol = 1e-9;     // sup-change of S_l per window between sweeps
    int max_iters = 200;   // sweeps per window
    int window_steps = 0;  // 0: pick from dt so a window spans ~0.05 time units
};

// Fixed-point solver on the renewal representation of the fluid equations.
// The horizon is split into short windows; within a window each sweep
// rebuilds the measure trajectory from three ingredients evaluated on the
// previous sweep: the window-start measures transported with survival
// ratios, the service-start convolution driven by dD_{l+1}, and the
// routing inflow eta_l integrated by the trapezoid rule. Departures are
// then recomputed as the trapezoid integral of <h, nu_l>, and eta from the
// fresh level masses. Sweeps repeat until the level masses stop moving.
//
// This is deliberately a different discretization from FluidSolver (which
// kills mass through survival ratios and never evaluates the hazard), so
// agreement between the two is a meaningful check on both.
class PicardSolver {
  public:
    PicardSolver(Distribution service, double lambda, int d, const AgeGrid& grid, int l_max,
                 PicardOptions opts = {})
        : service_(std::move(service)),
          lambda_(lambda),
          d_(d),
          grid_(grid),
          l_max_(l_max),
          opts_(opts) {
        if (lambda < 0.0 || d < 1 || l_max < 1) throw std::invalid_argument("PicardSolver: bad parameters");
        if (opts_.window_steps <= 0)
            opts_.window_steps =
                std::clamp(static_cast<int>(std::ceil(0.05 / grid.da)), 5, 200);
        sr_.resize(static_cast<std::size_t>(grid.n_bins));
        haz_.resize(static_cast<std::size_t>(grid.n_bins));
        for (int i = 0; i < grid.n_bins; ++i) {
            sr_[static_cast<std::size_t>(i)] = service_.survival_ratio(grid.left_edge(i), grid.da);
            haz_[static_cast<std::size_t>(i)] = service_.hazard(grid.left_edge(i));
        }
    }

    FluidTrace solve(FluidState st, double T, const std::vector<double>& sample_times,
                     bool record_measures = false) {
        FluidTrace tr;
        tr.l_max = l_max_;
        tr.grid = grid_;
        const double dt = grid_.da;
        const long n_steps = static_cast<long>(std::llround(T / dt));
        if (std::abs(n_steps * dt - T) > 1e-9 * std::max(1.0, T))
            throw std::invalid_argument("solve_picard: T must be a multiple of dt");
        total_sweeps_ = 0;
        std::size_t next_sample = 0;
        auto record = [&](const FluidState& s) {
            tr.times.push_back(s.t);
            tr.S.push_back(s.S);
            tr.D.push_back(s.D);
            tr.eta_int.push_back(s.eta_int);
            tr.mass_leak.push_back(s.mass_leak);
            if (record_measures) {
                std::vector<AgeMeasure> ms(static_cast<std::size_t>(l_max_) + 1);
                for (int l = 1; l <= l_max_; ++l) ms[static_cast<std::size_t>(l)] = s.measure(l);
                tr.measures.push_back(std::move(ms));
            }
        };
        if (!sample_times.empty() && sample_times[0] <= 1e-9) {
            record(st);
            ++next_sample;
        }
        long k0 = 0;
        while (k0 < n_steps) {
            const int W = static_cast<int>(std::min<long>(opts_.window_steps, n_steps - k0));
            run_window(st, W);
            // Record converged rows that fall inside this window.
            while (next_sample < sample_times.size() &&
                   sample_times[next_sample] <= st.t + 1e-9) {
                const double ts = sample_times[next_sample];
                const long idx = std::llround(ts / dt) - k0;
                if (idx < 1 || idx > W)
                    throw std::invalid_argument("solve_picard: sample time off the step grid");
                record(row_state(st, static_cast<int>(idx), W));
                ++next_sample;
            }
            k0 += W;
        }
        tr.picard_sweeps = total_sweeps_;
        return tr;
    }

    long total_sweeps() const { return total_sweeps_; }

  private:
    // Trajectory data for one window: index k = 0..W time slices.
    struct Traj {
        std::vector<std::vector<std::vector<double>>> w;  // [k][l][bin-prefix]
        std::vector<std::vector<double>> S;               // [k][l]
        std::vector<std::vector<double>> dD;              // [k][l]: increment over step k-1 -> k
        std::vector<std::vector<double>> hdot;            // [k][l]: <h, nu_l(t_k)>
        std::vector<double> leak;                         // [k]: per-step leak increment
    };

    // Reconstruct the state at slice idx of the last converged window for
    // recording. Cumulative quantities are rebuilt from the window base.
    FluidState row_state(const FluidState& end_state, int idx, int W) const {
        FluidState s = end_state;
        s.t = base_t_ + idx * grid_.da;
        for (int l = 1; l <= l_max_; ++l) {
            const std::size_t ul = static_cast<std::size_t>(l);
            s.S[ul] = cur_.S[static_cast<std::size_t>(idx)][ul];
            double d_cum = base_D_[ul], eta_cum = base_eta_[ul];
            for (int k = 1; k <= idx; ++k) {
                d_cum += cur_.dD[static_cast<std::size_t>(k)][ul];
                eta_cum += eta_increment(k, l);
            }
            s.D[ul] = d_cum;
            s.eta_int[ul] = eta_cum;
            const auto& row = cur_.w[static_cast<std::size_t>(idx)][ul];
            std::fill(s.w[ul].begin(), s.w[ul].end(), 0.0);
            std::copy(row.begin(), row.end(), s.w[ul].begin());
            s.hi[ul] = static_cast<int>(row.size());
        }
        double leak = base_leak_;
        for (int k = 1; k <= idx; ++k) leak += cur_.leak[static_cast<std::size_t>(k)];
        s.mass_leak = leak;
        (void)W;
        return s;
    }

    // Trapezoid increment of the integral of <1, eta_l> over step k-1 -> k,
    // from the converged trajectory.
    double eta_increment(int k, int l) const {
        const double dt = grid_.da;
        auto tot = [&](int kk) {
            const auto& S = cur_.S[static_cast<std::size_t>(kk)];
            if (l == 1) return lambda_ * (1.0 - std::pow(S[1], d_));
            return lambda_ * poly_P(d_, S[static_cast<std::size_t>(l) - 1], S[static_cast<std::size_t>(l)]) *
                   (S[static_cast<std::size_t>(l) - 1] - S[static_cast<std::size_t>(l)]);
        };
        return 0.5 * dt * (tot(k - 1) + tot(k));
    }

    void run_window(FluidState& st, int W) {
        const double dt = grid_.da;
        const int n = grid_.n_bins;
        base_t_ = st.t;
        base_D_ = st.D;
        base_eta_ = st.eta_int;
        base_leak_ = st.mass_leak;

        // Trim the start-state rows to their occupied prefix.
        std::vector<std::vector<double>> w0(static_cast<std::size_t>(l_max_) + 1);
        for (int l = 1; l <= l_max_; ++l) {
            const std::size_t ul = static_cast<std::size_t>(l);
            w0[ul].assign(st.w[ul].begin(), st.w[ul].begin() + st.hi[ul]);
        }

        auto make_traj = [&](Traj& tj) {
            tj.w.assign(static_cast<std::size_t>(W) + 1, w0);
            tj.S.assign(static_cast<std::size_t>(W) + 1, st.S);
            tj.dD.assign(static_cast<std::size_t>(W) + 1,
                         std::vector<double>(static_cast<std::size_t>(l_max_) + 2, 0.0));
            tj.hdot.assign(static_cast<std::size_t>(W) + 1,
                           std::vector<double>(static_cast<std::size_t>(l_max_) + 2, 0.0));
            tj.leak.assign(static_cast<std::size_t>(W) + 1, 0.0);
        };
        make_traj(prev_);
        make_traj(cur_);

        // Initial guess: the window-start state frozen in time, with step
        // departures estimated by one survival-ratio death step.
        for (int l = 1; l <= l_max_; ++l) {
            const std::size_t ul = static_cast<std::size_t>(l);
            double death = 0.0, hd = 0.0;
            for (std::size_t i = 0; i < w0[ul].size(); ++i) {
                death += w0[ul][i] * (1.0 - sr_[i]);
                hd += w0[ul][i] * haz_[i];
            }
            for (int k = 1; k <= W; ++k) prev_.dD[static_cast<std::size_t>(k)][ul] = death;
            for (int k = 0; k <= W; ++k) prev_.hdot[static_cast<std::size_t>(k)][ul] = hd;
        }
        cur_.hdot[0] = prev_.hdot[0];

        double change = kInf;
        for (int sweep = 0; sweep < opts_.max_iters; ++sweep) {
            change = run_sweep(W);
            ++total_sweeps_;
            std::swap(prev_, cur_);
            if (change < opts_.tol) break;
        }
        std::swap(prev_, cur_);  // newest sweep back into cur_
        if (change >= opts_.tol)
            throw std::runtime_error("solve_picard: no convergence in " +
                                     std::to_string(opts_.max_iters) +
                                     " sweeps (last change " + std::to_string(change) + ")");

        // Commit the window end into the running state.
        for (int l = 1; l <= l_max_; ++l) {
            const std::size_t ul = static_cast<std::size_t>(l);
            auto& dst = st.w[ul];
            std::fill(dst.begin(), dst.end(), 0.0);
            const auto& src = cur_.w[static_cast<std::size_t>(W)][ul];
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::max(0.0, src[i]);
            st.hi[ul] = static_cast<int>(src.size());
            st.S[ul] = cur_.S[static_cast<std::size_t>(W)][ul];
            for (int k = 1; k <= W; ++k) {
                st.D[ul] += cur_.dD[static_cast<std::size_t>(k)][ul];
                st.eta_int[ul] += eta_increment(k, l);
            }
        }
        for (int k = 1; k <= W; ++k) st.mass_leak += cur_.leak[static_cast<std::size_t>(k)];
        st.t = base_t_ + W * dt;
        (void)n;
    }

    // One sweep: rebuild the whole window trajectory from prev_.
    // Returns the sup-change of the level masses.
    double run_sweep(int W) {
        const double dt = grid_.da;
        const std::size_t n = static_cast<std::size_t>(grid_.n_bins);
        double change = 0.0;
        cur_.w[0] = prev_.w[0];  // shared window-start slice
        cur_.S[0] = prev_.S[0];
        cur_.hdot[0] = prev_.hdot[0];
        for (int k = 0; k < W; ++k) {
            const std::size_t uk = static_cast<std::size_t>(k);
            const auto& S_prev_k = prev_.S[uk];
            const auto& S_prev_k1 = prev_.S[uk + 1];
            double leak = 0.0;
            for (int l = 1; l <= l_max_; ++l) {
                const std::size_t ul = static_cast<std::size_t>(l);
                const auto& from = cur_.w[uk][ul];  // current sweep, time k
                const std::size_t len = from.size();
                const auto& pw_k = prev_.w[uk];
                const auto& pw_k1 = prev_.w[uk + 1];
                // The transported content spans the current slice and the
                // previous sweep's inflow sources; the post-transport inflow
                // half spans the previous sweep's slice at k+1. Level 1 fed
                // from empty still needs bins 0 and 1.
                std::size_t ext_k = len, tail = l == 1 ? 2 : 1;
                if (l >= 2) {
                    ext_k = std::max({len, pw_k[ul - 1].size(), pw_k[ul].size()});
                    tail = std::max(pw_k1[ul - 1].size(), pw_k1[ul].size());
                }
                const std::size_t out_len = std::min(n, std::max(ext_k + 1, tail));
                auto& out = cur_.w[uk + 1][ul];
                out.assign(out_len, 0.0);

                // Routing inflow from the previous sweep, trapezoid halves.
                const double pk = l >= 2 ? lambda_ * poly_P(d_, S_prev_k[ul - 1], S_prev_k[ul]) : 0.0;
                const double pk1 =
                    l >= 2 ? lambda_ * poly_P(d_, S_prev_k1[ul - 1], S_prev_k1[ul]) : 0.0;

                double overflow = 0.0, hd = 0.0, total = 0.0;
                if (l >= 2) {
                    for (std::size_t i = 0; i < ext_k; ++i) {
                        const double ep = i < pw_k[ul - 1].size() ? pw_k[ul - 1][i] : 0.0;
                        const double ec = i < pw_k[ul].size() ? pw_k[ul][i] : 0.0;
                        const double m = (i < len ? from[i] : 0.0) + 0.5 * dt * pk * (ep - ec);
                        const double moved = m * sr_[i];
                        if (i + 1 < n)
                            out[i + 1] = moved;
                        else
                            overflow += moved;
                    }
                    const std::size_t m1 = std::min(out_len, tail);
                    for (std::size_t i = 0; i < m1; ++i) {
                        const double ep = i < pw_k1[ul - 1].size() ? pw_k1[ul - 1][i] : 0.0;
                        const double ec = i < pw_k1[ul].size() ? pw_k1[ul][i] : 0.0;
                        out[i] += 0.5 * dt * pk1 * (ep - ec);
                    }
                } else {
                    for (std::size_t i = 0; i < ext_k; ++i) {
                        const double moved = from[i] * sr_[i];
                        if (i + 1 < n)
                            out[i + 1] = moved;
                        else
                            overflow += moved;
                    }
                    // Level 1 boundary influx r1 = lambda (1 - S_1^d).
                    const double r1_k = lambda_ * (1.0 - std::pow(S_prev_k[1], d_));
                    const double r1_k1 = lambda_ * (1.0 - std::pow(S_prev_k1[1], d_));
                    if (out_len > 1) out[1] += 0.5 * dt * r1_k * sr_[0];
                    out[0] += 0.5 * dt * r1_k1;
                }
                // Service starts from the previous sweep's departures.
                out[0] += prev_.dD[uk + 1][ul + 1];

                for (std::size_t i = 0; i < out_len; ++i) {
                    total += out[i];
                    hd += out[i] * haz_[i];
                }
                cur_.S[uk + 1][ul] = total;
                cur_.hdot[uk + 1][ul] = hd;
                cur_.dD[uk + 1][ul] =
                    0.5 * dt * (cur_.hdot[uk][ul] + hd) + overflow;
                leak += overflow;
                change = std::max(change, std::abs(total - prev_.S[uk + 1][ul]));
            }
            // Routing mass pushed past l_max, by the converged-level masses
            // of the previous sweep.
            leak += 0.5 * dt * lambda_ *
                    (std::pow(S_prev_k[static_cast<std::size_t>(l_max_)], d_) +
                     std::pow(S_prev_k1[static_cast<std::size_t>(l_max_)], d_));
            cur_.leak[uk + 1] = leak;
        }
        return change;
    }

    Distribution service_;
    double lambda_;
    int d_;
    AgeGrid grid_;
    int l_max_;
    PicardOptions opts_;
    std::vector<double> sr_, haz_;
    Traj prev_, cur_;
    long total_sweeps_ = 0;
    double base_t_ = 0.0, base_leak_ = 0.0;
    std::vector<double> base_D_, base_eta_;
};

inline FluidTrace solve_picard(const Distribution& service, double lambda, int d,
                               const AgeGrid& grid, int l_max, FluidState init, double T,
                               const std::vector<double>& sample_times, PicardOptions opts = {},
                               bool record_measures = false) {
    PicardSolver solver(service, lambda, d, grid, l_max, opts);
    return solver.solve(std::move(init), T, sample_times, record_measures);
}

}  // namespace sqdh
