#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqdhydro/dists.hpp"
#include "sqdhydro/hydro.hpp"
#include "sqdhydro/sim.hpp"

namespace sqdh {

using json = nlohmann::ordered_json;

enum class Mode { Simulate, Fluid, Picard, Compare, Chaos, Martingale, Converge };

inline const char* mode_name(Mode m) {
    switch (m) {
        case Mode::Simulate: return "simulate";
        case Mode::Fluid: return "fluid";
        case Mode::Picard: return "picard";
        case Mode::Compare: return "compare";
        case Mode::Chaos: return "chaos";
        case Mode::Martingale: return "martingale";
        case Mode::Converge: return "converge";
    }
    return "?";
}

struct InitSpec {
    enum Kind { Empty, Iid, Atoms } kind = Empty;
    std::vector<double> pmf;
    std::optional<Distribution> age_law;
    // Atoms per level for fluid-only initial measures.
    std::vector<std::vector<std::pair<double, double>>> atoms;
};

struct ExperimentConfig {
    Mode mode = Mode::Fluid;
    int n_servers = 1;
    std::vector<int> n_list;
    int d = 2;
    double lambda = 0.9;
    Distribution arrival = Distribution::exponential(1.0);
    Distribution service = Distribution::exponential(1.0);
    double initial_renewal_age = 0.0;
    InitSpec initial;
    double horizon = 10.0;
    double dt = 1e-3;
    double a_max = 0.0;  // resolved
    int l_max = 0;       // resolved
    std::vector<double> sample_times;
    std::uint64_t seed = 12345;
    int replications = 1;
    std::string output_dir = "out";
    bool record_per_queue = false;
    bool record_age_histograms = false;
    std::vector<TrackerSpec> trackers;
    double picard_tol = 1e-9;
    int picard_max_iters = 200;
    int picard_window_steps = 0;
    double chaos_t = 0.0;
    std::vector<int> chaos_levels;
    json echo;  // resolved configuration for the manifest

    AgeGrid grid() const { return AgeGrid::make(dt, a_max); }

    InitialCondition sim_initial() const {
        if (initial.kind == InitSpec::Iid)
            return InitialCondition::iid(initial.pmf,
                                         initial.age_law ? &*initial.age_law : nullptr);
        if (initial.kind == InitSpec::Atoms)
            throw std::invalid_argument("atom initial conditions apply to fluid modes only");
        return InitialCondition::empty();
    }

    FluidState fluid_initial() const {
        const auto g = grid();
        switch (initial.kind) {
            case InitSpec::Empty: return FluidState::empty(g, l_max);
            case InitSpec::Iid:
                return FluidState::from_iid(g, l_max, initial.pmf,
                                            initial.age_law ? &*initial.age_law : nullptr);
            case InitSpec::Atoms: return FluidState::from_atoms(g, l_max, initial.atoms);
        }
        return FluidState::empty(g, l_max);
    }

    SimParams sim_params() const {
        SimParams p;
        p.n_servers = n_servers;
        p.d = d;
        p.lambda = lambda;
        p.arrival = arrival;
        p.service = service;
        p.initial_renewal_age = initial_renewal_age;
        p.l_max = l_max;
        p.trackers = trackers;
        return p;
    }
};

namespace detail {

class ConfigErrors {
  public:
    void add(const std::string& msg) { errors_.push_back(msg); }
    bool empty() const { return errors_.empty(); }
    [[noreturn]] void raise() const {
        std::string all = "configuration invalid:";
        for (const auto& e : errors_) all += "\n  - " + e;
        throw std::invalid_argument(all);
    }
    const std::vector<std::string>& list() const { return errors_; }

  private:
    std::vector<std::string> errors_;
};

inline void check_keys(const json& obj, const std::set<std::string>& allowed,
                       const std::string& where, ConfigErrors& errs) {
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) errs.add(where + ": unknown field '" + key + "'");
}

inline std::optional<Distribution> parse_distribution(const json& spec, const std::string& where,
                                                      bool is_service, ConfigErrors& errs) {
    if (!spec.is_object()) {
        errs.add(where + ": expected an object {family, params[, normalize]}");
        return std::nullopt;
    }
    check_keys(spec, {"family", "params", "normalize"}, where, errs);
    if (!spec.contains("family") || !spec["family"].is_string()) {
        errs.add(where + ": missing family");
        return std::nullopt;
    }
    const std::string fam = spec["family"].get<std::string>();
    std::vector<double> p;
    if (spec.contains("params") && spec["params"].is_array())
        for (const auto& v : spec["params"]) p.push_back(v.get<double>());
    const bool normalize = spec.value("normalize", true);
    if (!is_service && spec.contains("normalize") && !normalize) {
        errs.add(where + ": the inter-arrival shape is always normalized; "
                         "its rate comes from lambda and N");
        return std::nullopt;
    }
    try {
        std::optional<Distribution> dist;
        if (fam == "exponential" && p.size() == 1)
            dist = Distribution::exponential(p[0]);
        else if (fam == "erlang" && p.size() == 2)
            dist = Distribution::erlang(static_cast<int>(p[0]), p[1]);
        else if (fam == "hyperexponential" && p.size() >= 4 && p.size() % 2 == 0) {
            const std::size_t k = p.size() / 2;
            dist = Distribution::hyper_exponential({p.begin(), p.begin() + k},
                                                   {p.begin() + k, p.end()});
        } else if (fam == "weibull" && p.size() == 2)
            dist = Distribution::weibull(p[0], p[1]);
        else if (fam == "lognormal" && p.size() == 2)
            dist = Distribution::log_normal(p[0], p[1]);
        else if (fam == "paretolomax" && p.size() == 2)
            dist = Distribution::pareto_lomax(p[0], p[1]);
        else if (fam == "uniform" && p.size() == 1)
            dist = Distribution::uniform(p[0]);
        else if (fam == "deterministic") {
            errs.add(where + ": deterministic laws are not supported; "
                             "service and inter-arrival distributions must have a density");
            return std::nullopt;
        } else {
            errs.add(where + ": unknown family '" + fam + "' or wrong parameter count");
            return std::nullopt;
        }
        if (is_service && normalize) return dist->normalized();
        if (!is_service) return dist->normalized();
        return dist;
    } catch (const std::exception& ex) {
        errs.add(where + ": " + ex.what());
        return std::nullopt;
    }
}

}  // namespace detail

// Parse and validate a configuration object, collecting every violation
// before failing and filling documented defaults.
inline ExperimentConfig parse_config_json(const json& in) {
    detail::ConfigErrors errs;
    if (!in.is_object()) {
        errs.add("top level: expected a JSON object");
        errs.raise();
    }
    detail::check_keys(in,
                       {"mode", "N", "N_list", "d", "lambda", "arrival", "service", "R",
                        "initial", "T", "dt", "a_max", "l_max", "sample_count", "sample_times",
                        "seed", "replications", "output_dir", "record", "picard", "chaos"},
                       "top level", errs);

    ExperimentConfig cfg;
    const std::string mode = in.value("mode", "");
    if (mode == "simulate") cfg.mode = Mode::Simulate;
    else if (mode == "fluid") cfg.mode = Mode::Fluid;
    else if (mode == "picard") cfg.mode = Mode::Picard;
    else if (mode == "compare") cfg.mode = Mode::Compare;
    else if (mode == "chaos") cfg.mode = Mode::Chaos;
    else if (mode == "martingale") cfg.mode = Mode::Martingale;
    else if (mode == "converge") cfg.mode = Mode::Converge;
    else errs.add("mode: must be one of simulate|fluid|picard|compare|chaos|martingale|converge");

    cfg.d = in.value("d", 2);
    if (cfg.d < 1) errs.add("d: must be an integer >= 1");
    cfg.lambda = in.value("lambda", 0.0);
    if (!(cfg.lambda > 0.0)) errs.add("lambda: must be > 0");
    cfg.horizon = in.value("T", 0.0);
    if (!(cfg.horizon > 0.0)) errs.add("T: must be > 0");
    cfg.dt = in.value("dt", 1e-3);
    if (!(cfg.dt > 0.0)) errs.add("dt: must be > 0");

    const bool needs_n = cfg.mode == Mode::Simulate || cfg.mode == Mode::Compare ||
                         cfg.mode == Mode::Chaos || cfg.mode == Mode::Martingale;
    if (in.contains("N")) {
        cfg.n_servers = in["N"].get<int>();
        if (cfg.n_servers < 1) errs.add("N: must be >= 1");
    } else if (needs_n) {
        errs.add("N: required for mode " + mode);
    }
    if (in.contains("N_list")) {
        for (const auto& v : in["N_list"]) cfg.n_list.push_back(v.get<int>());
        for (int n : cfg.n_list)
            if (n < 1) errs.add("N_list: entries must be >= 1");
    } else if (cfg.mode == Mode::Converge) {
        errs.add("N_list: required for mode converge");
    }

    if (in.contains("arrival")) {
        if (auto d = detail::parse_distribution(in["arrival"], "arrival", false, errs))
            cfg.arrival = *d;
    }
    if (in.contains("service")) {
        if (auto d = detail::parse_distribution(in["service"], "service", true, errs))
            cfg.service = *d;
    }

    cfg.initial_renewal_age = in.value("R", 0.0);
    if (cfg.initial_renewal_age < 0.0) errs.add("R: must be >= 0");

    if (in.contains("initial")) {
        const auto& ini = in["initial"];
        detail::check_keys(ini, {"type", "pmf", "age", "levels"}, "initial", errs);
        const std::string type = ini.value("type", "empty");
        if (type == "empty") {
            cfg.initial.kind = InitSpec::Empty;
        } else if (type == "iid") {
            cfg.initial.kind = InitSpec::Iid;
            double sum = 0.0;
            if (ini.contains("pmf"))
                for (const auto& v : ini["pmf"]) {
                    cfg.initial.pmf.push_back(v.get<double>());
                    sum += cfg.initial.pmf.back();
                }
            if (std::abs(sum - 1.0) > 1e-9) errs.add("initial.pmf: must sum to 1");
            if (ini.contains("age"))
                cfg.initial.age_law = detail::parse_distribution(ini["age"], "initial.age", true, errs);
        } else if (type == "atoms") {
            cfg.initial.kind = InitSpec::Atoms;
            if (ini.contains("levels"))
                for (const auto& lv : ini["levels"]) {
                    detail::check_keys(lv, {"level", "atoms"}, "initial.levels[]", errs);
                    const int l = lv.value("level", 0);
                    if (l < 1) {
                        errs.add("initial.levels[].level: must be >= 1");
                        continue;
                    }
                    if (static_cast<std::size_t>(l) >= cfg.initial.atoms.size())
                        cfg.initial.atoms.resize(static_cast<std::size_t>(l) + 1);
                    for (const auto& at : lv["atoms"])
                        cfg.initial.atoms[static_cast<std::size_t>(l)].push_back(
                            {at[0].get<double>(), at[1].get<double>()});
                }
        } else {
            errs.add("initial.type: must be empty|iid|atoms");
        }
    }

    cfg.l_max = in.value("l_max", 0);
    if (cfg.l_max == 0) cfg.l_max = default_l_max(cfg.lambda, std::max(cfg.d, 1));
    if (cfg.l_max < 2) errs.add("l_max: must be >= 2");

    cfg.a_max = in.value("a_max", 0.0);
    if (cfg.a_max == 0.0 && cfg.dt > 0.0) cfg.a_max = default_a_max(cfg.service, cfg.dt);
    if (!(cfg.a_max > 0.0)) errs.add("a_max: must be > 0");
    if (cfg.a_max > cfg.service.support_end())
        errs.add("a_max: must not exceed the service support endpoint");

    if (cfg.lambda > 0.0 && cfg.dt > 0.0 && cfg.dt * cfg.lambda * cfg.d >= 1.0)
        errs.add("dt: dt*lambda*d must be < 1 for the fluid stepper; try dt = " +
                 std::to_string(0.5 / (cfg.lambda * cfg.d)));

    if (in.contains("sample_times")) {
        for (const auto& v : in["sample_times"]) cfg.sample_times.push_back(v.get<double>());
        for (double t : cfg.sample_times)
            if (t < 0.0 || t > cfg.horizon + 1e-12) errs.add("sample_times: outside [0, T]");
    } else {
        const int count = in.value("sample_count", 20);
        if (count < 1) errs.add("sample_count: must be >= 1");
        for (int i = 0; i <= std::max(count, 1); ++i) {
            // Snap to the fluid step grid so traces line up across solvers.
            const double raw = cfg.horizon * i / std::max(count, 1);
            cfg.sample_times.push_back(std::round(raw / cfg.dt) * cfg.dt);
        }
    }

    if (in.contains("seed")) cfg.seed = in["seed"].get<std::uint64_t>();
    cfg.replications = in.value("replications", 1);
    if (cfg.replications < 1) errs.add("replications: must be >= 1");
    cfg.output_dir = in.value("output_dir", std::string("out"));

    if (in.contains("record")) {
        const auto& rec = in["record"];
        detail::check_keys(rec, {"per_queue", "age_histograms", "trackers"}, "record", errs);
        cfg.record_per_queue = rec.value("per_queue", false);
        cfg.record_age_histograms = rec.value("age_histograms", false);
        if (rec.contains("trackers"))
            for (const auto& tk : rec["trackers"]) {
                detail::check_keys(tk, {"phi", "level"}, "record.trackers[]", errs);
                TrackerSpec spec;
                spec.level = tk.value("level", 1);
                if (spec.level < 1) errs.add("record.trackers[].level: must be >= 1");
                if (tk.contains("phi")) {
                    const auto& phi = tk["phi"];
                    detail::check_keys(phi, {"kind", "param"}, "record.trackers[].phi", errs);
                    const std::string kind = phi.value("kind", "one");
                    if (kind == "one") spec.phi = {PhiWeight::One, 0.0};
                    else if (kind == "age_above")
                        spec.phi = {PhiWeight::IndicatorAgeAbove, phi.value("param", 0.0)};
                    else if (kind == "exp_decay")
                        spec.phi = {PhiWeight::ExpDecay, phi.value("param", 1.0)};
                    else errs.add("record.trackers[].phi.kind: must be one|age_above|exp_decay");
                }
                cfg.trackers.push_back(spec);
            }
    }

    if (in.contains("picard")) {
        const auto& pc = in["picard"];
        detail::check_keys(pc, {"tol", "max_iters", "window_steps"}, "picard", errs);
        cfg.picard_tol = pc.value("tol", 1e-9);
        cfg.picard_max_iters = pc.value("max_iters", 200);
        cfg.picard_window_steps = pc.value("window_steps", 0);
        if (!(cfg.picard_tol > 0.0)) errs.add("picard.tol: must be > 0");
        if (cfg.picard_max_iters < 1) errs.add("picard.max_iters: must be >= 1");
    }

    if (in.contains("chaos")) {
        const auto& ch = in["chaos"];
        detail::check_keys(ch, {"t", "levels"}, "chaos", errs);
        cfg.chaos_t = ch.value("t", 0.0);
        if (ch.contains("levels"))
            for (const auto& v : ch["levels"]) cfg.chaos_levels.push_back(v.get<int>());
        if (cfg.mode == Mode::Chaos) {
            if (!(cfg.chaos_t > 0.0) || cfg.chaos_t > cfg.horizon)
                errs.add("chaos.t: must lie in (0, T]");
            if (cfg.chaos_levels.empty() || cfg.chaos_levels.size() > 4)
                errs.add("chaos.levels: need 1..4 levels");
        }
    } else if (cfg.mode == Mode::Chaos) {
        errs.add("chaos: required for mode chaos");
    }
    if (cfg.mode == Mode::Martingale && cfg.trackers.empty())
        errs.add("record.trackers: required for mode martingale");

    if (!errs.empty()) errs.raise();

    // Resolved echo for the manifest.
    cfg.echo = in;
    cfg.echo["l_max"] = cfg.l_max;
    cfg.echo["a_max"] = cfg.a_max;
    cfg.echo["seed"] = cfg.seed;
    cfg.echo["replications"] = cfg.replications;
    cfg.echo["R"] = cfg.initial_renewal_age;
    cfg.echo["sample_times"] = cfg.sample_times;
    cfg.echo.erase("sample_count");
    return cfg;
}

// Apply a --set key=value override (dotted path) to a raw JSON config.
inline void apply_override(json& obj, const std::string& key_path, const std::string& value) {
    json* node = &obj;
    std::size_t pos = 0;
    std::string path = key_path;
    while (true) {
        const std::size_t dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot - pos);
        if (dot == std::string::npos) {
            json parsed = json::parse(value, nullptr, false);
            (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
            return;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

}  // namespace sqdh
