#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "sqdhydro/hydro.hpp"
#include "sqdhydro/sim.hpp"
#include "sqdhydro/stats.hpp"

namespace sqdh {

// Distance between a scaled simulation trace and a fluid trace, per sample
// time: per-level |S_bar - S| plus a Kolmogorov distance between the
// normalized age measures, the weighted scalar aggregate sum_l 2^-l gap,
// and sup_l age_gap/l. The Kolmogorov surrogate vanishes exactly when the
// discretized measures coincide, which is all the harness needs.
struct DistanceRow {
    double t = 0.0;
    std::vector<double> scalar_gap;  // [level]
    std::vector<double> age_gap;     // [level]
    double weighted_scalar = 0.0;
    double sup_age_over_l = 0.0;
    double aggregate = 0.0;
};

struct DistanceReport {
    std::vector<DistanceRow> rows;
    // Time-average of the aggregate over strictly positive sample times.
    double mean_aggregate = 0.0;
    // Time-averaged scalar gap per level.
    std::vector<double> mean_scalar_gap;
};

inline DistanceReport state_distance(const SimTrace& sim, const FluidTrace& fluid) {
    if (sim.times.size() != fluid.times.size())
        throw std::invalid_argument("state_distance: traces have different sample times");
    for (std::size_t k = 0; k < sim.times.size(); ++k)
        if (std::abs(sim.times[k] - fluid.times[k]) > 1e-9)
            throw std::invalid_argument("state_distance: traces have different sample times");
    const bool with_measures = !sim.measures.empty() && !fluid.measures.empty();
    const int l_max = std::min(sim.l_max, fluid.l_max);

    DistanceReport rep;
    rep.mean_scalar_gap.assign(static_cast<std::size_t>(l_max) + 1, 0.0);
    int positive_times = 0;
    for (std::size_t k = 0; k < sim.times.size(); ++k) {
        DistanceRow row;
        row.t = sim.times[k];
        row.scalar_gap.assign(static_cast<std::size_t>(l_max) + 1, 0.0);
        row.age_gap.assign(static_cast<std::size_t>(l_max) + 1, 0.0);
        for (int l = 1; l <= l_max; ++l) {
            const std::size_t ul = static_cast<std::size_t>(l);
            row.scalar_gap[ul] = std::abs(sim.S_bar[k][ul] - fluid.S[k][ul]);
            if (with_measures)
                row.age_gap[ul] = kolmogorov_distance(sim.measures[k][ul], fluid.measures[k][ul]);
            row.weighted_scalar += std::pow(2.0, -l) * row.scalar_gap[ul];
            row.sup_age_over_l = std::max(row.sup_age_over_l, row.age_gap[ul] / l);
        }
        row.aggregate = row.weighted_scalar + row.sup_age_over_l;
        if (row.t > 1e-12) {
            rep.mean_aggregate += row.aggregate;
            for (int l = 1; l <= l_max; ++l)
                rep.mean_scalar_gap[static_cast<std::size_t>(l)] +=
                    row.scalar_gap[static_cast<std::size_t>(l)];
            ++positive_times;
        }
        rep.rows.push_back(std::move(row));
    }
    if (positive_times > 0) {
        rep.mean_aggregate /= positive_times;
        for (auto& g : rep.mean_scalar_gap) g /= positive_times;
    }
    return rep;
}

// Joint tail probability of the first k queues against the product of fluid
// marginals. gap_total decomposes exactly into a dependence part (joint vs
// product of empirical marginals) and a marginal part (empirical vs fluid
// marginals product).
struct ChaosReport {
    double t = 0.0;
    std::vector<int> levels;
    double joint_empirical = 0.0;
    double stderr_joint = 0.0;
    double fluid_product = 0.0;
    double product_empirical_marginals = 0.0;
    double gap_total = 0.0;        // joint_empirical - fluid_product
    double gap_dependence = 0.0;   // joint_empirical - product of empirical marginals
    double gap_marginal = 0.0;     // product of empirical marginals - fluid_product
    std::vector<double> empirical_marginals;
    int replications = 0;
};

inline ChaosReport chaos_estimate(const std::vector<SimTrace>& reps, const FluidTrace& fluid,
                                  double t, const std::vector<int>& levels) {
    if (reps.size() < 100)
        throw std::invalid_argument(
            "chaos_estimate: need at least 100 replications for useful error bars");
    if (levels.empty() || levels.size() > 4)
        throw std::invalid_argument("chaos_estimate: need 1..4 levels");
    ChaosReport rep;
    rep.t = t;
    rep.levels = levels;
    rep.replications = static_cast<int>(reps.size());
    const std::size_t k = levels.size();
    std::vector<double> marg(k, 0.0);
    double joint = 0.0;
    for (const auto& tr : reps) {
        if (tr.queue_lengths.empty())
            throw std::invalid_argument("chaos_estimate: traces lack queue-length recording");
        const std::size_t idx = tr.index_of_time(t);
        const auto& lengths = tr.queue_lengths[idx];
        if (lengths.size() < k)
            throw std::invalid_argument("chaos_estimate: fewer queues than levels");
        bool all = true;
        for (std::size_t m = 0; m < k; ++m) {
            const bool hit = lengths[m] >= levels[m];
            marg[m] += hit;
            all = all && hit;
        }
        joint += all;
    }
    const double r = static_cast<double>(reps.size());
    rep.joint_empirical = joint / r;
    rep.stderr_joint = std::sqrt(rep.joint_empirical * (1.0 - rep.joint_empirical) / r);
    rep.product_empirical_marginals = 1.0;
    for (std::size_t m = 0; m < k; ++m) {
        rep.empirical_marginals.push_back(marg[m] / r);
        rep.product_empirical_marginals *= marg[m] / r;
    }
    const std::size_t fidx = fluid.index_of_time(t);
    rep.fluid_product = 1.0;
    for (int l : levels) rep.fluid_product *= fluid.S[fidx][static_cast<std::size_t>(l)];
    rep.gap_total = rep.joint_empirical - rep.fluid_product;
    rep.gap_dependence = rep.joint_empirical - rep.product_empirical_marginals;
    rep.gap_marginal = rep.product_empirical_marginals - rep.fluid_product;
    return rep;
}

// Martingale diagnostics over replicated tracker outputs: the mean of M and
// N should vanish, and their sample variances should match the mean
// quadratic variations. Flags use the 3-sigma convention; the variance
// comparison uses a bootstrap stderr of the difference.
struct TrackerStats {
    TrackerSpec spec;
    double mean_m = 0.0, stderr_m = 0.0;
    double mean_n = 0.0, stderr_n = 0.0;
    double var_m = 0.0, mean_quad_m = 0.0, stderr_var_diff_m = 0.0;
    double var_n = 0.0, mean_quad_n = 0.0, stderr_var_diff_n = 0.0;
    bool pass_mean_m = false, pass_mean_n = false;
    bool pass_var_m = false, pass_var_n = false;
    bool pass() const { return pass_mean_m && pass_mean_n && pass_var_m && pass_var_n; }
};

struct MartingaleReportOptions {
    double sigma = 3.0;
    int bootstrap_resamples = 1000;
    std::uint64_t bootstrap_seed = 20240915;
    // Scale factor applied to the routing compensator B before forming
    // N = R - scale*B. Values != 1 deliberately corrupt the compensator
    // (negative-control harness checks).
    double b_scale = 1.0;
};

inline std::vector<TrackerStats> martingale_report(
    const std::vector<std::vector<TrackerValues>>& per_rep,
    const MartingaleReportOptions& opts = {}) {
    if (per_rep.size() < 2) throw std::invalid_argument("martingale_report: need replications");
    const std::size_t n_trackers = per_rep[0].size();
    std::vector<TrackerStats> out;
    Rng rng(opts.bootstrap_seed);
    for (std::size_t j = 0; j < n_trackers; ++j) {
        TrackerStats st;
        st.spec = per_rep[0][j].spec;
        std::vector<double> m, n, qm, qn;
        for (const auto& rep : per_rep) {
            m.push_back(rep[j].m);
            n.push_back(rep[j].r - opts.b_scale * rep[j].b);
            qm.push_back(rep[j].quad_m);
            qn.push_back(rep[j].quad_n);
        }
        st.mean_m = mean_of(m);
        st.stderr_m = stderr_of_mean(m);
        st.mean_n = mean_of(n);
        st.stderr_n = stderr_of_mean(n);
        st.var_m = sample_variance(m);
        st.mean_quad_m = mean_of(qm);
        st.var_n = sample_variance(n);
        st.mean_quad_n = mean_of(qn);
        auto var_diff = [](const std::vector<double>& x, const std::vector<double>& q) {
            return sample_variance(x) - mean_of(q);
        };
        st.stderr_var_diff_m = bootstrap_stderr_paired(m, qm, var_diff, opts.bootstrap_resamples, rng);
        st.stderr_var_diff_n = bootstrap_stderr_paired(n, qn, var_diff, opts.bootstrap_resamples, rng);
        st.pass_mean_m = std::abs(st.mean_m) <= opts.sigma * st.stderr_m;
        st.pass_mean_n = std::abs(st.mean_n) <= opts.sigma * st.stderr_n;
        st.pass_var_m = std::abs(st.var_m - st.mean_quad_m) <= opts.sigma * st.stderr_var_diff_m;
        st.pass_var_n = std::abs(st.var_n - st.mean_quad_n) <= opts.sigma * st.stderr_var_diff_n;
        out.push_back(st);
    }
    return out;
}

// N-scaling study: replicated runs per N averaged through state_distance.
struct ConvergenceRow {
    int n_servers = 0;
    double mean_gap = 0.0;
    double stderr_gap = 0.0;
    std::vector<double> mean_scalar_gap;      // per level, averaged over reps
    std::vector<double> per_rep_aggregates;
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
    // One-sided 95% confidence that the mean gap strictly decreases between
    // consecutive N values.
    bool strictly_decreasing_95() const {
        for (std::size_t i = 0; i + 1 < rows.size(); ++i)
            if (!mean_greater_95(rows[i].per_rep_aggregates, rows[i + 1].per_rep_aggregates))
                return false;
        return true;
    }
    // Least-squares exponent of mean gap against N.
    double fit_exponent() const {
        std::vector<double> lx, ly;
        for (const auto& r : rows) {
            lx.push_back(std::log(static_cast<double>(r.n_servers)));
            ly.push_back(std::log(std::max(r.mean_gap, 1e-300)));
        }
        return ols_slope(lx, ly);
    }
};

inline ConvergenceTable convergence_study(
    const FluidTrace& fluid, const std::vector<int>& n_list, int replications,
    const std::function<SimTrace(int n_servers, int rep)>& runner) {
    ConvergenceTable table;
    for (int n : n_list) {
        ConvergenceRow row;
        row.n_servers = n;
        std::vector<double> aggs;
        for (int r = 0; r < replications; ++r) {
            const auto tr = runner(n, r);
            const auto rep = state_distance(tr, fluid);
            aggs.push_back(rep.mean_aggregate);
            if (row.mean_scalar_gap.size() < rep.mean_scalar_gap.size())
                row.mean_scalar_gap.resize(rep.mean_scalar_gap.size(), 0.0);
            for (std::size_t l = 0; l < rep.mean_scalar_gap.size(); ++l)
                row.mean_scalar_gap[l] += rep.mean_scalar_gap[l] / replications;
        }
        row.mean_gap = mean_of(aggs);
        row.stderr_gap = stderr_of_mean(aggs);
        row.per_rep_aggregates = std::move(aggs);
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace sqdh
