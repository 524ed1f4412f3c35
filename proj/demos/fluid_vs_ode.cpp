// Solves the fluid equations for exponential service and prints the level
// masses next to the classical ODE reference.
#include <cstdio>
#include <vector>

#include "sqdhydro/hydro.hpp"

int main() {
    using namespace sqdh;
    const double lambda = 0.9, T = 10.0, dt = 1e-3;
    const int d = 2, l_max = 6;
    const auto service = Distribution::exponential(1.0);
    const auto grid = AgeGrid::make(dt, default_a_max(service, dt));
    std::vector<double> times;
    for (int i = 0; i <= 10; ++i) times.push_back(T * i / 10);

    FluidSolver solver(service, lambda, d, grid, l_max);
    const auto tr = solver.solve(FluidState::empty(grid, l_max), T, times);
    const auto ode = ode_reference(lambda, d, std::vector<double>(l_max, 0.0), T, dt, times);

    std::printf("%6s  %10s  %10s  %10s\n", "t", "S_1", "S_2", "|S-ode|");
    for (std::size_t k = 0; k < times.size(); ++k) {
        double gap = 0.0;
        for (int l = 1; l <= l_max; ++l)
            gap = std::max(gap, std::abs(tr.S[k][static_cast<std::size_t>(l)] -
                                         ode.s[k][static_cast<std::size_t>(l)]));
        std::printf("%6.2f  %10.6f  %10.6f  %10.2e\n", times[k], tr.S[k][1], tr.S[k][2], gap);
    }
    return 0;
}
