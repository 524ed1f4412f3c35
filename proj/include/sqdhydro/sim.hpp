#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqdhydro/age_grid.hpp"
#include "sqdhydro/dists.hpp"
#include "sqdhydro/poly.hpp"
#include "sqdhydro/random.hpp"

namespace sqdh {

// One job. Initial jobs carry non-positive ids, later arrivals positive ids
// in arrival order. Times are NaN until the corresponding epoch happens.
struct Job {
    std::int64_t id = 0;
    double arrival_time = std::numeric_limits<double>::quiet_NaN();
    double service_start = std::numeric_limits<double>::quiet_NaN();
    double service_time = std::numeric_limits<double>::quiet_NaN();  // sampled at service entry
    int queue = -1;

    bool in_service() const { return !std::isnan(service_start); }
    double departure_time() const { return service_start + service_time; }
};

struct EventRecord {
    enum Kind { Departure = 0, Arrival = 1 };
    double time = 0.0;
    Kind kind = Arrival;
    int queue = -1;
};

// Weight functions for the counting-process trackers.
struct PhiWeight {
    enum Kind { One, IndicatorAgeAbove, ExpDecay };
    Kind kind = One;
    double param = 0.0;

    double operator()(double age) const {
        switch (kind) {
            case One: return 1.0;
            case IndicatorAgeAbove: return age > param ? 1.0 : 0.0;
            case ExpDecay: return std::exp(-param * age);
        }
        return 0.0;
    }
    std::string name() const {
        switch (kind) {
            case One: return "one";
            case IndicatorAgeAbove: return "age_above(" + std::to_string(param) + ")";
            case ExpDecay: return "exp_decay(" + std::to_string(param) + ")";
        }
        return "?";
    }
};

struct TrackerSpec {
    PhiWeight phi;
    int level = 1;
};

// Accumulators for one (phi, level) pair: the weighted departure and routing
// counting processes, their compensators (advanced between events), and the
// phi^2-weighted processes giving the quadratic variations.
struct Tracker {
    TrackerSpec spec;
    double acc_d = 0.0;       // weighted departures
    double acc_a = 0.0;       // departure compensator
    double acc_r = 0.0;       // weighted routings to queues of length level-1
    double acc_b = 0.0;       // routing compensator
    double acc_quad_d = 0.0;  // phi^2-weighted departures
    double acc_quad_r = 0.0;  // phi^2-weighted routings

    double martingale_m() const { return acc_d - acc_a; }
    double martingale_n() const { return acc_r - acc_b; }
};

struct TrackerValues {
    TrackerSpec spec;
    double m = 0.0, n = 0.0, quad_m = 0.0, quad_n = 0.0;
    double d = 0.0, a = 0.0, r = 0.0, b = 0.0;
};

struct InitialCondition {
    enum Kind { Empty, IidQueueLengths } kind = Empty;
    std::vector<double> pmf;  // over lengths 0..pmf.size()-1
    // Initial in-service ages; nullptr means all ages zero.
    const Distribution* age_law = nullptr;

    static InitialCondition empty() { return {}; }
    static InitialCondition iid(std::vector<double> pmf, const Distribution* age_law = nullptr) {
        InitialCondition ic;
        ic.kind = IidQueueLengths;
        ic.pmf = std::move(pmf);
        ic.age_law = age_law;
        return ic;
    }
};

struct SimParams {
    int n_servers = 1;
    int d = 1;
    double lambda = 0.5;
    Distribution arrival = Distribution::exponential(1.0);  // base law, unit mean
    Distribution service = Distribution::exponential(1.0);
    double initial_renewal_age = 0.0;  // R, on the simulation clock
    int l_max = 8;                     // reporting truncation only
    std::vector<TrackerSpec> trackers;
    bool check_invariants = true;
};

// Chooses among d sampled queues: shortest length wins, ties uniform over
// the distinct minimizing queues (an index sampled twice counts once).
inline int route(const std::vector<int>& lengths_at_sampled, const std::vector<int>& sampled_indices,
                 Rng& rng) {
    if (lengths_at_sampled.empty() || lengths_at_sampled.size() != sampled_indices.size())
        throw std::invalid_argument("route: need matching nonempty length/index lists");
    int min_len = lengths_at_sampled[0];
    for (int x : lengths_at_sampled) min_len = std::min(min_len, x);
    // Distinct argmin queue indices.
    static thread_local std::vector<int> cand;
    cand.clear();
    for (std::size_t i = 0; i < sampled_indices.size(); ++i) {
        if (lengths_at_sampled[i] != min_len) continue;
        if (std::find(cand.begin(), cand.end(), sampled_indices[i]) == cand.end())
            cand.push_back(sampled_indices[i]);
    }
    if (cand.size() == 1) return cand[0];
    return cand[rng.uniform_below(cand.size())];
}

class SimState {
  public:
    SimState(const SimParams& params, const InitialCondition& initial, std::uint64_t seed)
        : p_(params),
          arrival_eff_(params.arrival.normalized().scaled(
              1.0 / (params.lambda * params.n_servers))),
          rng_(seed) {
        if (p_.n_servers < 1 || p_.d < 1) throw std::invalid_argument("SimState: N >= 1, d >= 1");
        if (p_.lambda <= 0.0) throw std::invalid_argument("SimState: lambda must be > 0");
        queues_.resize(static_cast<std::size_t>(p_.n_servers));
        s_.assign(2, 0);
        s0_.assign(2, 0);
        d_.assign(2, 0);
        r1_.assign(2, 0);
        for (const auto& spec : p_.trackers) trackers_.push_back(Tracker{spec});

        if (initial.kind == InitialCondition::IidQueueLengths) {
            double sum = 0.0;
            for (double q : initial.pmf) {
                if (q < 0.0) throw std::invalid_argument("initial pmf: negative entry");
                sum += q;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw std::invalid_argument("initial pmf must sum to 1");
            std::int64_t next_initial_id = 0;
            for (int i = 0; i < p_.n_servers; ++i) {
                const int len = sample_pmf(initial.pmf);
                for (int j = 0; j < len; ++j) {
                    Job job;
                    job.id = next_initial_id--;
                    job.queue = i;
                    if (j == 0) {
                        const double a0 =
                            initial.age_law ? initial.age_law->sample(rng_) : 0.0;
                        if (p_.service.survival(a0) <= 0.0)
                            throw std::invalid_argument(
                                "initial age law puts mass outside the service support");
                        job.service_start = -a0;
                        job.service_time = a0 + p_.service.sample_residual(a0, rng_);
                        ++service_entries_;
                    }
                    queues_[static_cast<std::size_t>(i)].jobs.push_back(job);
                }
                queues_[static_cast<std::size_t>(i)].initial_len = len;
                if (len > 0)
                    dep_heap_.push({queues_[static_cast<std::size_t>(i)].jobs.front().departure_time(), i});
                bump_level_counters(len);
            }
        }
        s0_ = s_;
        renewal_age_ = p_.initial_renewal_age;
        next_arrival_ = sample_delay(arrival_eff_, renewal_age_, rng_);
        initial_k_ = service_entries_;
    }

    const SimParams& params() const { return p_; }
    double clock() const { return clock_; }
    int n_servers() const { return p_.n_servers; }
    std::int64_t total_arrivals() const { return total_arrivals_; }
    std::int64_t service_entries() const { return service_entries_; }
    std::int64_t arrivals_to_empty() const { return arrivals_to_empty_; }
    std::int64_t max_observed_length() const { return max_len_; }
    double renewal_age() const { return renewal_age_; }
    const std::vector<Tracker>& trackers() const { return trackers_; }

    int queue_length(int i) const {
        return static_cast<int>(queues_[static_cast<std::size_t>(i)].jobs.size());
    }
    // S_l: number of queues with length >= l (exact, dynamically sized).
    std::int64_t s_count(int l) const {
        return l < static_cast<int>(s_.size()) ? s_[static_cast<std::size_t>(l)] : 0;
    }
    std::int64_t d_count(int l) const {
        return l < static_cast<int>(d_.size()) ? d_[static_cast<std::size_t>(l)] : 0;
    }
    std::int64_t r1_count(int l) const {
        return l < static_cast<int>(r1_.size()) ? r1_[static_cast<std::size_t>(l)] : 0;
    }

    bool has_pending_event() const { return !dep_heap_.empty() || next_arrival_ < kInf; }
    double next_event_time() const {
        double t = next_arrival_;
        if (!dep_heap_.empty()) t = std::min(t, dep_heap_.top().time);
        return t;
    }

    // Advance to the earliest pending event; departures precede arrivals at
    // equal times, smaller queue index first.
    EventRecord step() {
        if (!has_pending_event()) throw std::logic_error("step: no pending event");
        const bool is_departure =
            !dep_heap_.empty() && dep_heap_.top().time <= next_arrival_;
        const double t = is_departure ? dep_heap_.top().time : next_arrival_;
        advance_compensators(t - clock_);
        renewal_age_ += t - clock_;
        clock_ = t;

        EventRecord ev;
        ev.time = t;
        if (is_departure) {
            const int qi = dep_heap_.top().queue;
            dep_heap_.pop();
            auto& q = queues_[static_cast<std::size_t>(qi)];
            const int pre_len = static_cast<int>(q.jobs.size());
            const Job done = q.jobs.front();
            q.jobs.pop_front();
            ++q.departures;
            grow_counters(pre_len);
            for (int l = 1; l <= pre_len; ++l) ++d_[static_cast<std::size_t>(l)];
            --s_[static_cast<std::size_t>(pre_len)];
            for (auto& tk : trackers_) {
                if (tk.spec.level <= pre_len) {
                    const double wgt = tk.spec.phi(done.service_time);
                    tk.acc_d += wgt;
                    tk.acc_quad_d += wgt * wgt;
                }
            }
            if (!q.jobs.empty()) start_service(qi);
            ev.kind = EventRecord::Departure;
            ev.queue = qi;
        } else {
            ++total_arrivals_;
            const int qi = sample_and_route();
            auto& q = queues_[static_cast<std::size_t>(qi)];
            const int pre_len = static_cast<int>(q.jobs.size());
            grow_counters(pre_len + 1);
            ++r1_[static_cast<std::size_t>(pre_len) + 1];
            for (auto& tk : trackers_) {
                if (tk.spec.level == pre_len + 1) {
                    const double age =
                        pre_len == 0 ? 0.0 : clock_ - q.jobs.front().service_start;
                    const double wgt = tk.spec.phi(age);
                    tk.acc_r += wgt;
                    tk.acc_quad_r += wgt * wgt;
                }
            }
            Job job;
            job.id = ++last_arrival_id_;
            job.arrival_time = clock_;
            job.queue = qi;
            q.jobs.push_back(job);
            ++q.arrivals;
            ++s_[static_cast<std::size_t>(pre_len) + 1];
            max_len_ = std::max<std::int64_t>(max_len_, pre_len + 1);
            if (pre_len == 0) {
                ++arrivals_to_empty_;
                start_service(qi);
            }
            renewal_age_ = 0.0;
            next_arrival_ = clock_ + arrival_eff_.sample(rng_);
            ev.kind = EventRecord::Arrival;
            ev.queue = qi;
        }
        if (p_.check_invariants) assert_pathwise_identities();
        return ev;
    }

    // Run until the clock passes T. Events at time exactly T are processed.
    void run_until(double T) {
        while (has_pending_event() && next_event_time() <= T) step();
        advance_compensators(T - clock_);
        renewal_age_ += T - clock_;
        clock_ = T;
    }

    // nu_l snapshots: mass 1/N at the age of the in-service job of every
    // queue with length >= l, for l = 1..l_max.
    std::vector<AgeMeasure> snapshot_measures(const AgeGrid& grid) const {
        std::vector<AgeMeasure> out(static_cast<std::size_t>(p_.l_max) + 1,
                                    AgeMeasure(grid.n_bins));
        const double unit = 1.0 / p_.n_servers;
        for (const auto& q : queues_) {
            if (q.jobs.empty()) continue;
            const double age = clock_ - q.jobs.front().service_start;
            const int lmax = std::min<int>(p_.l_max, static_cast<int>(q.jobs.size()));
            for (int l = 1; l <= lmax; ++l)
                out[static_cast<std::size_t>(l)].add(grid, age, unit);
        }
        return out;
    }

    std::vector<TrackerValues> martingale_values() const {
        std::vector<TrackerValues> out;
        for (const auto& tk : trackers_) {
            TrackerValues v;
            v.spec = tk.spec;
            v.m = tk.martingale_m();
            v.n = tk.martingale_n();
            v.quad_m = tk.acc_quad_d;
            v.quad_n = tk.acc_quad_r;
            v.d = tk.acc_d;
            v.a = tk.acc_a;
            v.r = tk.acc_r;
            v.b = tk.acc_b;
            out.push_back(v);
        }
        return out;
    }

    // Pathwise identities that must hold exactly after every event.
    void assert_pathwise_identities() const {
        // Per-queue mass balance X^i = X^i(0) + E^i - D^i.
        for (std::size_t i = 0; i < queues_.size(); ++i) {
            const auto& q = queues_[i];
            if (static_cast<std::int64_t>(q.jobs.size()) !=
                q.initial_len + q.arrivals - q.departures)
                throw std::logic_error("pathwise identity violated: per-queue mass balance");
        }
        // Level balance S_l = S_l(0) - D_l + D_{l+1} + R_{1,l}.
        for (std::size_t l = 1; l < s_.size(); ++l) {
            const std::int64_t s0 = l < s0_.size() ? s0_[l] : 0;
            const std::int64_t dl = l < d_.size() ? d_[l] : 0;
            const std::int64_t dl1 = l + 1 < d_.size() ? d_[l + 1] : 0;
            const std::int64_t r1 = l < r1_.size() ? r1_[l] : 0;
            if (s_[l] != s0 - dl + dl1 + r1)
                throw std::logic_error("pathwise identity violated: level balance");
        }
        // Service entries split into departures-from-length>=2 and
        // arrivals to empty queues.
        if (service_entries_ - initial_k_ !=
            (d_.size() > 2 ? d_[2] : 0) + arrivals_to_empty_)
            throw std::logic_error("pathwise identity violated: service-entry split");
        // Departure counts are nested.
        for (std::size_t l = 1; l + 1 < d_.size(); ++l)
            if (d_[l + 1] > d_[l])
                throw std::logic_error("pathwise identity violated: departure nesting");
        // D + S_1 <= X(0) + E.
        std::int64_t x0 = 0;
        for (const auto& q : queues_) x0 += q.initial_len;
        if (d_[1] + s_[1] > x0 + total_arrivals_)
            throw std::logic_error("pathwise identity violated: global mass bound");
    }

  private:
    struct DepEvent {
        double time;
        int queue;
        bool operator>(const DepEvent& o) const {
            if (time != o.time) return time > o.time;
            return queue > o.queue;
        }
    };

    struct ServerQueue {
        std::deque<Job> jobs;
        std::int64_t arrivals = 0;
        std::int64_t departures = 0;
        int initial_len = 0;
    };

    int sample_pmf(const std::vector<double>& pmf) {
        const double u = rng_.uniform01();
        double acc = 0.0;
        for (std::size_t x = 0; x < pmf.size(); ++x) {
            acc += pmf[x];
            if (u <= acc) return static_cast<int>(x);
        }
        return static_cast<int>(pmf.size()) - 1;
    }

    void bump_level_counters(int len) {
        grow_counters(len);
        for (int l = 1; l <= len; ++l) ++s_[static_cast<std::size_t>(l)];
        max_len_ = std::max<std::int64_t>(max_len_, len);
    }

    void grow_counters(int len) {
        const std::size_t need = static_cast<std::size_t>(len) + 2;
        if (s_.size() < need) s_.resize(need, 0);
        if (s0_.size() < need) s0_.resize(need, 0);
        if (d_.size() < need) d_.resize(need, 0);
        if (r1_.size() < need) r1_.resize(need, 0);
    }

    void start_service(int qi) {
        auto& q = queues_[static_cast<std::size_t>(qi)];
        Job& job = q.jobs.front();
        job.service_start = clock_;
        job.service_time = p_.service.sample(rng_);
        ++service_entries_;
        dep_heap_.push({job.departure_time(), qi});
    }

    int sample_and_route() {
        static thread_local std::vector<int> idx, len;
        idx.clear();
        len.clear();
        for (int k = 0; k < p_.d; ++k) {
            const int i = static_cast<int>(rng_.uniform_below(static_cast<std::uint64_t>(p_.n_servers)));
            idx.push_back(i);
            len.push_back(queue_length(i));
        }
        return route(len, idx, rng_);
    }

    // Advance the departure compensators A and routing compensators B over a
    // gap of length delta during which no event occurs: queue lengths are
    // frozen, ages and the arrival renewal age grow at unit rate.
    void advance_compensators(double delta) {
        if (delta <= 0.0 || trackers_.empty()) return;
        const double n = p_.n_servers;
        for (auto& tk : trackers_) {
            const int l = tk.spec.level;
            // A: sum over in-service jobs at queues of length >= l of
            // int phi(a+u) h(a+u) du.
            for (const auto& q : queues_) {
                if (static_cast<int>(q.jobs.size()) < l) continue;
                const double age = clock_ - q.jobs.front().service_start;
                tk.acc_a += weighted_hazard_integral(p_.service, tk.spec.phi, age, delta);
            }
            // B: arrival hazard integral times the routing factor, restricted
            // to queues of length exactly l-1.
            const double s_lm1 = l == 1 ? n : static_cast<double>(s_count(l - 1));
            const double s_l = static_cast<double>(s_count(l));
            const double factor = poly_P(p_.d, s_lm1 / n, s_l / n);
            if (l == 1) {
                const double w0 = tk.spec.phi(0.0);
                if (w0 != 0.0) {
                    const double idle = (n - s_l) / n;  // fraction of empty queues
                    tk.acc_b += w0 * idle * factor *
                                hazard_integral(arrival_eff_, renewal_age_, delta);
                }
            } else {
                for (const auto& q : queues_) {
                    if (static_cast<int>(q.jobs.size()) != l - 1) continue;
                    const double age = clock_ - q.jobs.front().service_start;
                    tk.acc_b += (factor / n) *
                                weighted_arrival_hazard_integral(tk.spec.phi, age, delta);
                }
            }
        }
    }

    // int_0^delta h_X(start + u) du = log survival(start) - log survival(start+delta).
    static double hazard_integral(const Distribution& dist, double start, double delta) {
        return dist.log_survival(start) - dist.log_survival(start + delta);
    }

    // int_0^delta phi(age+u) h(age+u) du for the service law.
    static double weighted_hazard_integral(const Distribution& dist, const PhiWeight& phi,
                                           double age, double delta) {
        switch (phi.kind) {
            case PhiWeight::One:
                return hazard_integral(dist, age, delta);
            case PhiWeight::IndicatorAgeAbove: {
                const double lo = std::max(age, phi.param);
                if (lo >= age + delta) return 0.0;
                return dist.log_survival(lo) - dist.log_survival(age + delta);
            }
            case PhiWeight::ExpDecay:
                return gauss8(
                    [&](double u) { return std::exp(-phi.param * (age + u)) * dist.hazard(age + u); },
                    0.0, delta);
        }
        return 0.0;
    }

    // int_0^delta phi(age+u) h_E(R_E+u) du for the arrival law.
    double weighted_arrival_hazard_integral(const PhiWeight& phi, double age, double delta) const {
        switch (phi.kind) {
            case PhiWeight::One:
                return hazard_integral(arrival_eff_, renewal_age_, delta);
            case PhiWeight::IndicatorAgeAbove: {
                const double lo = std::max(0.0, phi.param - age);
                if (lo >= delta) return 0.0;
                return arrival_eff_.log_survival(renewal_age_ + lo) -
                       arrival_eff_.log_survival(renewal_age_ + delta);
            }
            case PhiWeight::ExpDecay:
                return gauss8(
                    [&](double u) {
                        return std::exp(-phi.param * (age + u)) *
                               arrival_eff_.hazard(renewal_age_ + u);
                    },
                    0.0, delta);
        }
        return 0.0;
    }

    template <typename F>
    static double gauss8(F f, double a, double b) {
        static const double node[] = {-0.9602898564975363, -0.7966664774136267,
                                      -0.5255324099163290, -0.1834346424956498,
                                      0.1834346424956498,  0.5255324099163290,
                                      0.7966664774136267,  0.9602898564975363};
        static const double wgt[] = {0.1012285362903763, 0.2223810344533745,
                                     0.3137066458778873, 0.3626837833783620,
                                     0.3626837833783620, 0.3137066458778873,
                                     0.2223810344533745, 0.1012285362903763};
        const double c = 0.5 * (a + b), h = 0.5 * (b - a);
        double s = 0.0;
        for (int i = 0; i < 8; ++i) s += wgt[i] * f(c + h * node[i]);
        return s * h;
    }

    SimParams p_;
    Distribution arrival_eff_;  // inter-arrival law on the simulation clock
    Rng rng_;
    std::vector<ServerQueue> queues_;
    std::priority_queue<DepEvent, std::vector<DepEvent>, std::greater<DepEvent>> dep_heap_;
    double clock_ = 0.0;
    double renewal_age_ = 0.0;
    double next_arrival_ = kInf;
    std::int64_t total_arrivals_ = 0;
    std::int64_t service_entries_ = 0;
    std::int64_t initial_k_ = 0;
    std::int64_t arrivals_to_empty_ = 0;
    std::int64_t last_arrival_id_ = 0;
    std::int64_t max_len_ = 0;
    std::vector<std::int64_t> s_, s0_, d_, r1_;
    std::vector<Tracker> trackers_;
};

struct SimTrace {
    std::vector<double> times;
    int l_max = 0;
    int n_servers = 0;
    std::vector<std::vector<double>> S_bar, D_bar;       // [time][level]
    std::vector<std::vector<AgeMeasure>> measures;       // optional, [time][level]
    std::vector<std::vector<int>> queue_lengths;         // optional, [time][queue]
    std::vector<TrackerValues> trackers_final;
    std::int64_t max_observed_length = 0;

    std::size_t index_of_time(double t) const {
        for (std::size_t i = 0; i < times.size(); ++i)
            if (std::abs(times[i] - t) <= 1e-9) return i;
        throw std::invalid_argument("SimTrace: no sample at requested time");
    }
};

struct RunOptions {
    bool record_measures = false;
    bool record_queue_lengths = false;
    AgeGrid measure_grid;
};

// Drives the simulation to T, recording scaled level counts (and optional
// snapshots) at each sample time. State is recorded right-continuously:
// events at a sample time are processed first.
inline SimTrace run(SimState& sim, double T, const std::vector<double>& sample_times,
                    const RunOptions& opts = {}) {
    SimTrace tr;
    tr.l_max = sim.params().l_max;
    tr.n_servers = sim.n_servers();
    const double n = sim.n_servers();
    for (double t : sample_times) {
        if (t > T + 1e-12) throw std::invalid_argument("run: sample time beyond horizon");
        while (sim.has_pending_event() && sim.next_event_time() <= t) sim.step();
        tr.times.push_back(t);
        std::vector<double> s_row(static_cast<std::size_t>(tr.l_max) + 1, 0.0);
        std::vector<double> d_row(static_cast<std::size_t>(tr.l_max) + 1, 0.0);
        for (int l = 1; l <= tr.l_max; ++l) {
            s_row[static_cast<std::size_t>(l)] = sim.s_count(l) / n;
            d_row[static_cast<std::size_t>(l)] = sim.d_count(l) / n;
        }
        tr.S_bar.push_back(std::move(s_row));
        tr.D_bar.push_back(std::move(d_row));
        if (opts.record_measures) tr.measures.push_back(sim.snapshot_measures(opts.measure_grid));
        if (opts.record_queue_lengths) {
            std::vector<int> row(static_cast<std::size_t>(sim.n_servers()));
            for (int i = 0; i < sim.n_servers(); ++i) row[static_cast<std::size_t>(i)] = sim.queue_length(i);
            tr.queue_lengths.push_back(std::move(row));
        }
    }
    sim.run_until(T);
    tr.trackers_final = sim.martingale_values();
    tr.max_observed_length = sim.max_observed_length();
    return tr;
}

}  // namespace sqdh
