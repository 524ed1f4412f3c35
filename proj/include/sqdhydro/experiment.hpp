#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sqdhydro/analysis.hpp"
#include "sqdhydro/config.hpp"
#include "sqdhydro/picard.hpp"

namespace sqdh {

inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline int worker_count(int replications) {
    int n = 0;
    if (const char* env = std::getenv("SQD_HYDRO_THREADS")) n = std::atoi(env);
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    return std::min(n, std::max(replications, 1));
}

// Fan replications out to a bounded pool; results land in index order so
// downstream aggregation is deterministic regardless of the pool size.
template <typename T, typename Fn>
std::vector<T> replicate(int reps, Fn fn) {
    std::vector<T> out(static_cast<std::size_t>(reps));
    const int workers = worker_count(reps);
    if (workers <= 1) {
        for (int r = 0; r < reps; ++r) out[static_cast<std::size_t>(r)] = fn(r);
        return out;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            while (true) {
                const int r = next.fetch_add(1);
                if (r >= reps) break;
                try {
                    out[static_cast<std::size_t>(r)] = fn(r);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!err) err = std::current_exception();
                    break;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
    return out;
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string sim_trace_csv(const SimTrace& tr) {
    std::string s = "time,level,S_bar,D_bar\n";
    for (std::size_t k = 0; k < tr.times.size(); ++k)
        for (int l = 1; l <= tr.l_max; ++l) {
            s += fmt_double(tr.times[k]);
            s += ',';
            s += std::to_string(l);
            s += ',';
            s += fmt_double(tr.S_bar[k][static_cast<std::size_t>(l)]);
            s += ',';
            s += fmt_double(tr.D_bar[k][static_cast<std::size_t>(l)]);
            s += '\n';
        }
    return s;
}

inline std::string fluid_trace_csv(const FluidTrace& tr) {
    std::string s = "time,level,S,D,eta_int,residual,mass_leak\n";
    for (std::size_t k = 0; k < tr.times.size(); ++k)
        for (int l = 1; l <= tr.l_max; ++l) {
            const std::size_t ul = static_cast<std::size_t>(l);
            const double raw = std::abs(tr.S[k][ul] - tr.S[0][ul] - tr.D[k][ul + 1] -
                                        tr.eta_int[k][ul] + tr.D[k][ul]);
            const double residual = std::max(0.0, raw - tr.mass_leak[k]);
            s += fmt_double(tr.times[k]);
            s += ',';
            s += std::to_string(l);
            s += ',';
            s += fmt_double(tr.S[k][ul]);
            s += ',';
            s += fmt_double(tr.D[k][ul]);
            s += ',';
            s += fmt_double(tr.eta_int[k][ul]);
            s += ',';
            s += fmt_double(residual);
            s += ',';
            s += fmt_double(tr.mass_leak[k]);
            s += '\n';
        }
    return s;
}

template <typename TraceT>
inline std::string age_hist_csv(const TraceT& tr, const AgeGrid& grid) {
    std::string s = "time,level,bin_left_edge,mass\n";
    for (std::size_t k = 0; k < tr.measures.size(); ++k)
        for (std::size_t l = 1; l < tr.measures[k].size(); ++l) {
            const auto& m = tr.measures[k][l];
            for (std::size_t b = 0; b < m.w.size(); ++b) {
                if (m.w[b] == 0.0) continue;
                s += fmt_double(tr.times[k]);
                s += ',';
                s += std::to_string(l);
                s += ',';
                s += fmt_double(grid.left_edge(static_cast<int>(b)));
                s += ',';
                s += fmt_double(m.w[b]);
                s += '\n';
            }
            if (m.overflow != 0.0) {
                s += fmt_double(tr.times[k]);
                s += ',';
                s += std::to_string(l);
                s += ",overflow,";
                s += fmt_double(m.overflow);
                s += '\n';
            }
        }
    return s;
}

inline std::string queue_lengths_csv(const SimTrace& tr) {
    std::string s = "time";
    for (int i = 0; i < tr.n_servers; ++i) s += ",q" + std::to_string(i);
    s += '\n';
    for (std::size_t k = 0; k < tr.queue_lengths.size(); ++k) {
        s += fmt_double(tr.times[k]);
        for (int v : tr.queue_lengths[k]) s += ',' + std::to_string(v);
        s += '\n';
    }
    return s;
}

inline std::string distance_csv(const DistanceReport& rep) {
    std::string s = "time,level,scalar_gap,age_gap,weighted_scalar,sup_age_over_l,aggregate\n";
    for (const auto& row : rep.rows)
        for (std::size_t l = 1; l < row.scalar_gap.size(); ++l) {
            s += fmt_double(row.t);
            s += ',';
            s += std::to_string(l);
            s += ',';
            s += fmt_double(row.scalar_gap[l]);
            s += ',';
            s += fmt_double(row.age_gap[l]);
            s += ',';
            s += fmt_double(row.weighted_scalar);
            s += ',';
            s += fmt_double(row.sup_age_over_l);
            s += ',';
            s += fmt_double(row.aggregate);
            s += '\n';
        }
    return s;
}

inline json tracker_json(const TrackerValues& v) {
    json j;
    j["phi"] = v.spec.phi.name();
    j["level"] = v.spec.level;
    j["M"] = v.m;
    j["N"] = v.n;
    j["quadM"] = v.quad_m;
    j["quadN"] = v.quad_n;
    j["D"] = v.d;
    j["A"] = v.a;
    j["R"] = v.r;
    j["B"] = v.b;
    return j;
}

inline std::string rep_suffix(int r) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03d", r);
    return buf;
}

}  // namespace detail

struct ExperimentResult {
    bool pass = true;
    json summary;
};

// Execute the configured mode and write traces, reports, and a manifest
// into the output directory. Returns 0 on success with all report flags
// green, 1 when a flag fails.
inline int run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    const auto t_start = std::chrono::steady_clock::now();
    fs::create_directories(cfg.output_dir);
    const fs::path dir = cfg.output_dir;
    const AgeGrid grid = cfg.grid();
    ExperimentResult res;
    res.summary["test"] = mode_name(cfg.mode);

    auto run_sim_rep = [&](int rep, bool measures, bool lengths) {
        SimState sim(cfg.sim_params(), cfg.sim_initial(), cfg.seed + static_cast<std::uint64_t>(rep));
        RunOptions opts;
        opts.record_measures = measures;
        opts.record_queue_lengths = lengths;
        opts.measure_grid = grid;
        return run(sim, cfg.horizon, cfg.sample_times, opts);
    };

    switch (cfg.mode) {
        case Mode::Simulate: {
            const auto traces = replicate<SimTrace>(cfg.replications, [&](int r) {
                return run_sim_rep(r, cfg.record_age_histograms, cfg.record_per_queue);
            });
            std::int64_t max_len = 0;
            for (int r = 0; r < cfg.replications; ++r) {
                const auto& tr = traces[static_cast<std::size_t>(r)];
                const std::string tag = detail::rep_suffix(r);
                detail::write_text(dir / ("sim_trace_rep" + tag + ".csv"), detail::sim_trace_csv(tr));
                if (cfg.record_age_histograms)
                    detail::write_text(dir / ("age_hist_rep" + tag + ".csv"),
                                       detail::age_hist_csv(tr, grid));
                if (cfg.record_per_queue)
                    detail::write_text(dir / ("queue_lengths_rep" + tag + ".csv"),
                                       detail::queue_lengths_csv(tr));
                if (!tr.trackers_final.empty()) {
                    json arr = json::array();
                    for (const auto& v : tr.trackers_final) arr.push_back(detail::tracker_json(v));
                    detail::write_text(dir / ("trackers_rep" + tag + ".json"), arr.dump(2) + "\n");
                }
                max_len = std::max(max_len, tr.max_observed_length);
            }
            res.summary["statistic"] = static_cast<double>(max_len);
            res.summary["threshold"] = nullptr;
            res.summary["pass"] = true;
            break;
        }
        case Mode::Fluid:
        case Mode::Picard: {
            FluidTrace tr;
            if (cfg.mode == Mode::Fluid) {
                FluidSolver solver(cfg.service, cfg.lambda, cfg.d, grid, cfg.l_max);
                tr = solver.solve(cfg.fluid_initial(), cfg.horizon, cfg.sample_times,
                                  cfg.record_age_histograms);
            } else {
                PicardSolver solver(cfg.service, cfg.lambda, cfg.d, grid, cfg.l_max,
                                    {cfg.picard_tol, cfg.picard_max_iters, cfg.picard_window_steps});
                tr = solver.solve(cfg.fluid_initial(), cfg.horizon, cfg.sample_times,
                                  cfg.record_age_histograms);
                res.summary["picard_sweeps"] = tr.picard_sweeps;
            }
            const std::string name = cfg.mode == Mode::Fluid ? "fluid_trace.csv" : "picard_trace.csv";
            detail::write_text(dir / name, detail::fluid_trace_csv(tr));
            if (cfg.record_age_histograms)
                detail::write_text(dir / "fluid_bins.csv", detail::age_hist_csv(tr, grid));
            const auto residual = balance_residual(tr);
            double sup = 0.0;
            for (int l = 1; l <= tr.l_max; ++l) sup = std::max(sup, residual[static_cast<std::size_t>(l)]);
            const double threshold = cfg.mode == Mode::Fluid ? 1e-9 : 1e-2;
            res.summary["statistic"] = sup;
            res.summary["threshold"] = threshold;
            res.summary["pass"] = sup <= threshold;
            res.summary["mass_leak"] = tr.mass_leak.back();
            res.pass = sup <= threshold;
            break;
        }
        case Mode::Compare: {
            FluidSolver solver(cfg.service, cfg.lambda, cfg.d, grid, cfg.l_max);
            const auto fluid = solver.solve(cfg.fluid_initial(), cfg.horizon, cfg.sample_times,
                                            cfg.record_age_histograms);
            detail::write_text(dir / "fluid_trace.csv", detail::fluid_trace_csv(fluid));
            const auto traces = replicate<SimTrace>(cfg.replications, [&](int r) {
                return run_sim_rep(r, cfg.record_age_histograms, cfg.record_per_queue);
            });
            std::vector<double> aggs;
            for (int r = 0; r < cfg.replications; ++r) {
                const auto rep = state_distance(traces[static_cast<std::size_t>(r)], fluid);
                detail::write_text(dir / ("distance_rep" + detail::rep_suffix(r) + ".csv"),
                                   detail::distance_csv(rep));
                aggs.push_back(rep.mean_aggregate);
            }
            res.summary["statistic"] = mean_of(aggs);
            res.summary["stderr"] = stderr_of_mean(aggs);
            res.summary["threshold"] = nullptr;
            res.summary["pass"] = true;
            break;
        }
        case Mode::Chaos: {
            // The joint tail is read at the configured time; make sure it is
            // on the sample grid.
            ExperimentConfig c2 = cfg;
            const double t_snap = std::round(cfg.chaos_t / cfg.dt) * cfg.dt;
            c2.sample_times = {t_snap};
            FluidSolver solver(cfg.service, cfg.lambda, cfg.d, grid, cfg.l_max);
            const auto fluid = solver.solve(cfg.fluid_initial(), cfg.horizon, c2.sample_times, false);
            const auto traces = replicate<SimTrace>(cfg.replications, [&](int r) {
                SimState sim(c2.sim_params(), c2.sim_initial(),
                             c2.seed + static_cast<std::uint64_t>(r));
                RunOptions opts;
                opts.record_queue_lengths = true;
                opts.measure_grid = grid;
                return run(sim, c2.horizon, c2.sample_times, opts);
            });
            const auto rep = chaos_estimate(traces, fluid, t_snap, cfg.chaos_levels);
            const double threshold = std::max(3.0 * rep.stderr_joint, 0.02);
            json j;
            j["t"] = rep.t;
            j["levels"] = rep.levels;
            j["joint_empirical"] = rep.joint_empirical;
            j["stderr_joint"] = rep.stderr_joint;
            j["fluid_product"] = rep.fluid_product;
            j["product_empirical_marginals"] = rep.product_empirical_marginals;
            j["empirical_marginals"] = rep.empirical_marginals;
            j["gap_total"] = rep.gap_total;
            j["gap_dependence"] = rep.gap_dependence;
            j["gap_marginal"] = rep.gap_marginal;
            j["replications"] = rep.replications;
            detail::write_text(dir / "chaos.json", j.dump(2) + "\n");
            std::string csv =
                "t,levels,joint_empirical,stderr_joint,fluid_product,gap_total\n";
            csv += fmt_double(rep.t);
            csv += ",\"";
            for (std::size_t i = 0; i < rep.levels.size(); ++i)
                csv += (i ? " " : "") + std::to_string(rep.levels[i]);
            csv += "\"," + fmt_double(rep.joint_empirical) + ',' + fmt_double(rep.stderr_joint) +
                   ',' + fmt_double(rep.fluid_product) + ',' + fmt_double(rep.gap_total) + '\n';
            detail::write_text(dir / "chaos.csv", csv);
            res.summary["statistic"] = std::abs(rep.gap_total);
            res.summary["threshold"] = threshold;
            res.summary["pass"] = std::abs(rep.gap_total) <= threshold;
            res.pass = std::abs(rep.gap_total) <= threshold;
            break;
        }
        case Mode::Martingale: {
            const auto traces = replicate<SimTrace>(cfg.replications, [&](int r) {
                return run_sim_rep(r, false, false);
            });
            std::vector<std::vector<TrackerValues>> per_rep;
            std::string csv = "rep,phi,level,M,N,quadM,quadN,D,A,R,B\n";
            for (int r = 0; r < cfg.replications; ++r) {
                per_rep.push_back(traces[static_cast<std::size_t>(r)].trackers_final);
                for (const auto& v : per_rep.back()) {
                    csv += std::to_string(r) + ',' + v.spec.phi.name() + ',' +
                           std::to_string(v.spec.level) + ',' + fmt_double(v.m) + ',' +
                           fmt_double(v.n) + ',' + fmt_double(v.quad_m) + ',' +
                           fmt_double(v.quad_n) + ',' + fmt_double(v.d) + ',' + fmt_double(v.a) +
                           ',' + fmt_double(v.r) + ',' + fmt_double(v.b) + '\n';
                }
            }
            detail::write_text(dir / "trackers.csv", csv);
            const auto stats = martingale_report(per_rep);
            json arr = json::array();
            bool all_pass = true;
            for (const auto& st : stats) {
                json j;
                j["phi"] = st.spec.phi.name();
                j["level"] = st.spec.level;
                j["mean_M"] = st.mean_m;
                j["stderr_M"] = st.stderr_m;
                j["mean_N"] = st.mean_n;
                j["stderr_N"] = st.stderr_n;
                j["var_M"] = st.var_m;
                j["mean_quad_M"] = st.mean_quad_m;
                j["var_N"] = st.var_n;
                j["mean_quad_N"] = st.mean_quad_n;
                j["pass_mean_M"] = st.pass_mean_m;
                j["pass_mean_N"] = st.pass_mean_n;
                j["pass_var_M"] = st.pass_var_m;
                j["pass_var_N"] = st.pass_var_n;
                arr.push_back(j);
                all_pass = all_pass && st.pass();
            }
            detail::write_text(dir / "martingale.json", arr.dump(2) + "\n");
            res.summary["pass"] = all_pass;
            res.summary["trackers"] = arr;
            res.pass = all_pass;
            break;
        }
        case Mode::Converge: {
            FluidSolver solver(cfg.service, cfg.lambda, cfg.d, grid, cfg.l_max);
            const auto fluid =
                solver.solve(cfg.fluid_initial(), cfg.horizon, cfg.sample_times, true);
            int n_index = 0;
            std::vector<ConvergenceRow> rows;
            for (int n : cfg.n_list) {
                const auto traces = replicate<SimTrace>(cfg.replications, [&](int r) {
                    ExperimentConfig c2 = cfg;
                    c2.n_servers = n;
                    SimState sim(c2.sim_params(), c2.sim_initial(),
                                 cfg.seed + static_cast<std::uint64_t>(n_index) *
                                                static_cast<std::uint64_t>(cfg.replications) +
                                 static_cast<std::uint64_t>(r));
                    RunOptions opts;
                    opts.record_measures = true;
                    opts.measure_grid = grid;
                    return run(sim, cfg.horizon, cfg.sample_times, opts);
                });
                ConvergenceRow row;
                row.n_servers = n;
                for (const auto& tr : traces) {
                    const auto rep = state_distance(tr, fluid);
                    row.per_rep_aggregates.push_back(rep.mean_aggregate);
                    if (row.mean_scalar_gap.size() < rep.mean_scalar_gap.size())
                        row.mean_scalar_gap.resize(rep.mean_scalar_gap.size(), 0.0);
                    for (std::size_t l = 0; l < rep.mean_scalar_gap.size(); ++l)
                        row.mean_scalar_gap[l] += rep.mean_scalar_gap[l] / cfg.replications;
                }
                row.mean_gap = mean_of(row.per_rep_aggregates);
                row.stderr_gap = stderr_of_mean(row.per_rep_aggregates);
                rows.push_back(std::move(row));
                ++n_index;
            }
            ConvergenceTable table;
            table.rows = rows;
            std::string csv = "N,mean_gap,stderr_gap\n";
            for (const auto& row : rows)
                csv += std::to_string(row.n_servers) + ',' + fmt_double(row.mean_gap) + ',' +
                       fmt_double(row.stderr_gap) + '\n';
            detail::write_text(dir / "convergence.csv", csv);
            std::string raw = "N,rep,aggregate\n";
            for (const auto& row : rows)
                for (std::size_t r = 0; r < row.per_rep_aggregates.size(); ++r)
                    raw += std::to_string(row.n_servers) + ',' + std::to_string(r) + ',' +
                           fmt_double(row.per_rep_aggregates[r]) + '\n';
            detail::write_text(dir / "convergence_raw.csv", raw);
            const bool pass = table.strictly_decreasing_95();
            res.summary["statistic"] = table.rows.back().mean_gap;
            res.summary["threshold"] = nullptr;
            res.summary["pass"] = pass;
            res.summary["fit_exponent"] = table.fit_exponent();
            res.pass = pass;
            break;
        }
    }

    detail::write_text(dir / "summary.json", res.summary.dump(2) + "\n");

    json manifest;
    manifest["config"] = cfg.echo;
    manifest["content_hash"] = detail::fnv1a(cfg.echo.dump());
    json seeds = json::array();
    for (int r = 0; r < cfg.replications; ++r) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(r));
    manifest["seed_list"] = seeds;
    manifest["version"] = "0.1.0";
    manifest["threads"] = worker_count(cfg.replications);
    manifest["wall_clock_sec"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    return res.pass ? 0 : 1;
}

}  // namespace sqdh
