#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sqdhydro/experiment.hpp"

namespace {

int run_mode(const std::string& mode, const std::string& config_path,
             const std::vector<std::string>& sets, const std::string& output_dir) {
    std::ifstream in(config_path);
    if (!in) {
        std::fprintf(stderr, "error: cannot open config file '%s'\n", config_path.c_str());
        return 2;
    }
    sqdh::json raw;
    try {
        raw = sqdh::json::parse(in);
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: config is not valid JSON: %s\n", ex.what());
        return 2;
    }
    raw["mode"] = mode;
    if (!output_dir.empty()) raw["output_dir"] = output_dir;
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
            return 2;
        }
        sqdh::apply_override(raw, kv.substr(0, eq), kv.substr(eq + 1));
    }
    try {
        const auto cfg = sqdh::parse_config_json(raw);
        const int rc = sqdh::run_experiment(cfg);
        std::printf("%s: %s (outputs in %s)\n", mode.c_str(), rc == 0 ? "ok" : "FAILED",
                    cfg.output_dir.c_str());
        return rc;
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "sqd-hydro: event-driven SQ(d) network simulator, fluid-limit solvers, "
        "and the statistical harness connecting them"};
    app.require_subcommand(1);

    std::string config_path, output_dir;
    std::vector<std::string> sets;
    const std::vector<std::string> modes = {"simulate", "fluid",      "picard",  "compare",
                                            "chaos",    "martingale", "converge"};
    const std::vector<std::string> descr = {
        "run replicated event-driven simulations",
        "solve the fluid equations with the transport scheme",
        "solve the fluid equations by windowed fixed-point iteration",
        "simulate and solve, then report state distances",
        "estimate joint queue tails against the fluid product",
        "martingale mean/variance diagnostics over replications",
        "N-scaling study of the simulation-to-fluid distance"};
    for (std::size_t i = 0; i < modes.size(); ++i) {
        auto* sub = app.add_subcommand(modes[i], descr[i]);
        sub->add_option("--config", config_path, "JSON configuration file")->required();
        sub->add_option("--set", sets, "override a config entry, key=value (repeatable)");
        sub->add_option("--output-dir", output_dir, "override the output directory");
    }

    CLI11_PARSE(app, argc, argv);
    for (const auto& mode : modes)
        if (app.got_subcommand(mode)) return run_mode(mode, config_path, sets, output_dir);
    return 2;
}
