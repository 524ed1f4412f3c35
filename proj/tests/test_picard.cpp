#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sqdhydro/picard.hpp"

using namespace sqdh;

namespace {

std::vector<double> linspace_times(double T, int n) {
    std::vector<double> ts;
    for (int i = 0; i <= n; ++i) ts.push_back(T * i / n);
    return ts;
}

}  // namespace

TEST_CASE("picard: no coupling solves in one effective sweep") {
    const auto grid = AgeGrid::make(1e-3, 6.0);
    const auto dist = Distribution::exponential(1.0);
    SECTION("single atom") {
        std::vector<std::vector<std::pair<double, double>>> atoms(2);
        atoms[1].push_back({0.0, 1.0});
        auto init = FluidState::from_atoms(grid, 3, atoms);
        PicardSolver solver(dist, 0.0, 2, grid, 3, {1e-12, 50, 100});
        const auto tr = solver.solve(init, 2.0, linspace_times(2.0, 10));
        for (std::size_t k = 0; k < tr.times.size(); ++k)
            CHECK(std::abs(tr.S[k][1] - std::exp(-tr.times[k])) <= 1e-12);
        // One sweep computes the answer, one confirms it per window.
        CHECK(solver.total_sweeps() <= 2 * 20);
        // D is the trapezoid integral of the hazard pairing.
        CHECK(tr.D.back()[1] == Catch::Approx(1.0 - std::exp(-2.0)).margin(1e-5));
    }
    SECTION("spread initial measure") {
        std::vector<std::vector<std::pair<double, double>>> atoms(2);
        atoms[1] = {{0.0, 0.3}, {0.5, 0.4}, {1.25, 0.2}};
        auto init = FluidState::from_atoms(grid, 2, atoms);
        PicardSolver solver(dist, 0.0, 2, grid, 2, {1e-12, 50, 100});
        const auto tr = solver.solve(init, 1.0, {1.0});
        // <survival_ratio(., t), nu_1(0)> telescopes exactly on the grid.
        double expect = 0.0;
        for (const auto& [age, mass] : atoms[1]) expect += mass * dist.survival_ratio(age, 1.0);
        CHECK(tr.S[0][1] == Catch::Approx(expect).margin(1e-12));
    }
}

TEST_CASE("picard agrees with the transport solver and the gap halves with dt") {
    const double lambda = 0.9, T = 1.5;
    const int d = 2, l_max = 6;
    const auto service = Distribution::log_normal(0.0, 0.5).normalized();
    auto gap_at = [&](double dt) {
        const auto grid = AgeGrid::make(dt, default_a_max(service, dt));
        const auto times = linspace_times(T, 10);
        FluidSolver fs(service, lambda, d, grid, l_max);
        const auto a = fs.solve(FluidState::empty(grid, l_max), T, times);
        PicardSolver ps(service, lambda, d, grid, l_max, {1e-10, 100, 0});
        const auto b = ps.solve(FluidState::empty(grid, l_max), T, times);
        double g = 0.0;
        for (std::size_t k = 0; k < times.size(); ++k)
            for (int l = 1; l <= l_max; ++l)
                g = std::max(g, std::abs(a.S[k][static_cast<std::size_t>(l)] -
                                         b.S[k][static_cast<std::size_t>(l)]));
        return g;
    };
    const double g1 = gap_at(4e-3);
    const double g2 = gap_at(2e-3);
    INFO("gaps " << g1 << " " << g2);
    CHECK(g1 <= 1e-2);
    CHECK(g1 / g2 > 1.6);
    CHECK(g1 / g2 < 2.4);
}

TEST_CASE("picard iteration contracts") {
    const auto service = Distribution::exponential(1.0);
    const auto grid = AgeGrid::make(2e-3, default_a_max(service, 2e-3));
    PicardSolver solver(service, 0.5, 2, grid, 5, {1e-10, 200, 0});
    const auto tr = solver.solve(FluidState::empty(grid, 5), 1.0, {1.0});
    // Finite sweep count well below the cap, i.e. geometric contraction.
    CHECK(solver.total_sweeps() >= 2);
    CHECK(solver.total_sweeps() <= 40 * 20);
    CHECK(tr.S[0][1] > 0.0);
}

TEST_CASE("picard divergence error reports the last change") {
    const auto service = Distribution::exponential(1.0);
    const auto grid = AgeGrid::make(1e-2, 6.0);
    PicardSolver solver(service, 0.9, 2, grid, 4, {1e-12, 1, 50});
    CHECK_THROWS_AS(solver.solve(FluidState::empty(grid, 4), 1.0, {1.0}), std::runtime_error);
}

TEST_CASE("picard balance holds up to the scheme order") {
    const auto service = Distribution::exponential(1.0);
    const double dt = 1e-3;
    const auto grid = AgeGrid::make(dt, default_a_max(service, dt));
    PicardSolver solver(service, 0.9, 2, grid, 6, {1e-10, 100, 0});
    const auto tr = solver.solve(FluidState::empty(grid, 6), 1.0, linspace_times(1.0, 10));
    const auto res = balance_residual(tr);
    for (int l = 1; l <= 6; ++l) CHECK(res[static_cast<std::size_t>(l)] <= 1e-2);
}
