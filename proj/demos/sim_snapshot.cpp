// Runs one SQ(2) simulation and prints the scaled level counts along with
// the busy-age histogram at the horizon.
#include <cstdio>

#include "sqdhydro/sim.hpp"

int main() {
    using namespace sqdh;
    SimParams p;
    p.n_servers = 500;
    p.d = 2;
    p.lambda = 0.9;
    p.service = Distribution::weibull(2.0, 1.0).normalized();
    p.l_max = 6;

    SimState sim(p, InitialCondition::empty(), 7);
    std::vector<double> times;
    for (int i = 0; i <= 10; ++i) times.push_back(i);
    const auto tr = run(sim, 10.0, times);

    std::printf("%6s", "t");
    for (int l = 1; l <= p.l_max; ++l) std::printf("  S_bar_%d", l);
    std::printf("\n");
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        std::printf("%6.1f", tr.times[k]);
        for (int l = 1; l <= p.l_max; ++l)
            std::printf("  %7.4f", tr.S_bar[k][static_cast<std::size_t>(l)]);
        std::printf("\n");
    }

    const auto grid = AgeGrid::make(0.25, 5.0);
    const auto ms = sim.snapshot_measures(grid);
    std::printf("\nage histogram of busy servers at t=10 (bin width %.2f):\n", grid.da);
    for (int b = 0; b < grid.n_bins; ++b)
        if (ms[1].w[static_cast<std::size_t>(b)] > 0)
            std::printf("  [%4.2f,%4.2f)  %.4f\n", grid.left_edge(b), grid.left_edge(b + 1),
                        ms[1].w[static_cast<std::size_t>(b)]);
    return 0;
}
