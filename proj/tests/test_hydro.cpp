#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sqdhydro/hydro.hpp"
#include "sqdhydro/random.hpp"

using namespace sqdh;

namespace {

std::vector<double> linspace_times(double T, int n) {
    std::vector<double> ts;
    for (int i = 0; i <= n; ++i) ts.push_back(T * i / n);
    return ts;
}

FluidState delta0_level1(const AgeGrid& grid, int l_max, double mass = 1.0) {
    std::vector<std::vector<std::pair<double, double>>> atoms(2);
    atoms[1].push_back({0.0, mass});
    return FluidState::from_atoms(grid, l_max, atoms);
}

}  // namespace

TEST_CASE("poly_P") {
    CHECK(poly_P(2, 0.3, 0.5) == Catch::Approx(0.8).margin(1e-15));
    CHECK(poly_P(3, 0.5, 0.5) == Catch::Approx(0.75).margin(1e-15));
    CHECK(poly_P(3, 1.0, 0.5) == Catch::Approx(1.75).margin(1e-15));
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        const double x = rng.uniform01(), y = rng.uniform01();
        const int d = 1 + static_cast<int>(rng.uniform_below(5));
        CHECK(poly_P(d, x, y) == Catch::Approx(poly_P(d, y, x)).margin(1e-14));
        CHECK(poly_P(d, x, y) * (x - y) ==
              Catch::Approx(std::pow(x, d) - std::pow(y, d)).margin(1e-12));
        CHECK(poly_P(d, x, y) <= d + 1e-12);
    }
}

TEST_CASE("eta rates") {
    const auto grid = AgeGrid::make(0.01, 2.0);
    SECTION("empty state routes everything to level 1") {
        auto st = FluidState::empty(grid, 4);
        const auto e = eta(st, 0.9, 2);
        CHECK(e.r1 == Catch::Approx(0.9).margin(1e-15));
        for (int l = 2; l <= 4; ++l) CHECK(e.total(l) == 0.0);
    }
    SECTION("saturated level 1 gets nothing") {
        std::vector<std::vector<std::pair<double, double>>> atoms(2);
        atoms[1].push_back({0.0, 1.0});
        auto st = FluidState::from_atoms(grid, 3, atoms);
        const auto e = eta(st, 0.9, 2);
        CHECK(e.r1 == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("level-2 inflow matches lambda (S_1^2 - S_2^2)") {
        std::vector<std::vector<std::pair<double, double>>> atoms(3);
        atoms[1] = {{0.0, 0.4}, {0.5, 0.2}};
        atoms[2] = {{0.0, 0.15}, {0.5, 0.05}};
        auto st = FluidState::from_atoms(grid, 3, atoms);
        const double lambda = 1.3;
        const auto e = eta(st, lambda, 2);
        CHECK(e.total(2) == Catch::Approx(lambda * (0.36 - 0.04)).margin(1e-12));
        // Telescoping identity for all levels.
        for (int l = 2; l <= 3; ++l) {
            const double sp = st.S[static_cast<std::size_t>(l) - 1];
            const double sc = st.S[static_cast<std::size_t>(l)];
            CHECK(e.total(l) ==
                  Catch::Approx(lambda * (sp * sp - sc * sc)).margin(1e-12));
        }
        for (const double r : e.bin_rates[2]) CHECK(r >= -1e-15);
    }
}

TEST_CASE("fluid_step pure death is exact") {
    struct Case {
        Distribution dist;
        double T;
    };
    const std::vector<Case> cases = {
        {Distribution::exponential(1.0), 5.0},
        {Distribution::uniform(2.0), 1.9},
        {Distribution::weibull(2.0, 1.0).normalized(), 5.0},
    };
    for (const auto& c : cases) {
        const double dt = 1e-3;
        const double a_max = std::isfinite(c.dist.support_end()) ? 1.95 : 6.0;
        const auto grid = AgeGrid::make(dt, a_max);
        FluidSolver solver(c.dist, 0.0, 2, grid, 3);
        auto st = delta0_level1(grid, 3);
        const long steps = std::lround(c.T / dt);
        for (long k = 1; k <= steps; ++k) {
            solver.step(st);
            const double expected = c.dist.survival(k * dt);
            REQUIRE(std::abs(st.S[1] - expected) <= 1e-12);
            REQUIRE(std::abs(st.D[1] - (1.0 - expected)) <= 1e-12);
        }
    }
}

TEST_CASE("fluid_step from empty puts lambda*dt in bin 0") {
    const auto grid = AgeGrid::make(1e-3, 5.0);
    FluidSolver solver(Distribution::exponential(1.0), 0.9, 2, grid, 3);
    auto st = FluidState::empty(grid, 3);
    solver.step(st);
    CHECK(st.S[1] == 0.9 * 1e-3);
    CHECK(st.w[1][0] == 0.9 * 1e-3);
    CHECK(st.S[2] == 0.0);
}

TEST_CASE("fluid_step preserves binwise level ordering") {
    Rng rng(17);
    for (const auto& dist :
         {Distribution::exponential(1.0), Distribution::uniform(2.0)}) {
        const auto grid = AgeGrid::make(0.01, std::isfinite(dist.support_end()) ? 1.99 : 8.0);
        const int l_max = 4;
        FluidSolver solver(dist, 0.9, 2, grid, l_max);
        for (int trial = 0; trial < 20; ++trial) {
            // Random feasible state: per-bin masses decreasing in level.
            auto st = FluidState::empty(grid, l_max);
            for (int i = 0; i < grid.n_bins; i += 1 + static_cast<int>(rng.uniform_below(40))) {
                double m = rng.uniform01() / grid.n_bins * 8.0;
                for (int l = 1; l <= l_max; ++l) {
                    st.w[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)] = m;
                    m *= rng.uniform01();
                }
                st.hi[0] = 0;
                for (int l = 1; l <= l_max; ++l) st.hi[static_cast<std::size_t>(l)] = grid.n_bins;
            }
            double total = 0.0;
            for (int l = 1; l <= l_max; ++l) {
                st.refresh_level(l);
                total = std::max(total, st.S[static_cast<std::size_t>(l)]);
            }
            if (st.S[1] > 1.0) continue;
            for (int k = 0; k < 125; ++k) solver.step(st);
            for (int l = 1; l < l_max; ++l)
                for (int i = 0; i < grid.n_bins; ++i)
                    REQUIRE(st.w[static_cast<std::size_t>(l) + 1][static_cast<std::size_t>(i)] <=
                            st.w[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)] + 1e-12);
        }
        CHECK(solver.max_ordering_violation() <= 1e-12);
    }
}

TEST_CASE("step-size guard") {
    const auto grid = AgeGrid::make(0.25, 5.0);
    CHECK_THROWS_AS(FluidSolver(Distribution::exponential(1.0), 2.5, 2, grid, 3),
                    std::invalid_argument);
}

TEST_CASE("solve: pure death trace and balance residual") {
    const auto grid = AgeGrid::make(1e-3, 6.0);
    FluidSolver solver(Distribution::exponential(1.0), 0.0, 2, grid, 3);
    const auto times = linspace_times(3.0, 30);
    const auto tr = solver.solve(delta0_level1(grid, 3), 3.0, times);
    for (std::size_t k = 0; k < tr.times.size(); ++k)
        CHECK(std::abs(tr.S[k][1] - std::exp(-tr.times[k])) <= 1e-12);
    const auto res = balance_residual(tr);
    for (int l = 1; l <= 3; ++l) CHECK(res[static_cast<std::size_t>(l)] <= 1e-12);
    // Cumulative departures are consistent and nested.
    const auto& last = tr.D.back();
    CHECK(last[1] == Catch::Approx(1.0 - std::exp(-3.0)).margin(1e-10));
    CHECK(last[2] <= last[1]);
}

TEST_CASE("solve matches the exponential ODE reference") {
    const double T = 2.0, dt = 1e-3, lambda = 0.9;
    const int l_max = 8;
    const auto grid = AgeGrid::make(dt, default_a_max(Distribution::exponential(1.0), dt));
    FluidSolver solver(Distribution::exponential(1.0), lambda, 2, grid, l_max);
    const auto times = linspace_times(T, 20);
    const auto tr = solver.solve(FluidState::empty(grid, l_max), T, times);
    const auto ode = ode_reference(lambda, 2, std::vector<double>(l_max, 0.0), T, dt, times);
    double sup = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k)
        for (int l = 1; l <= 6; ++l)
            sup = std::max(sup, std::abs(tr.S[k][static_cast<std::size_t>(l)] -
                                         ode.s[k][static_cast<std::size_t>(l)]));
    INFO("sup gap vs ODE: " << sup);
    CHECK(sup <= 5e-3);
    const auto res = balance_residual(tr);
    for (int l = 1; l <= l_max; ++l) CHECK(res[static_cast<std::size_t>(l)] <= 1e-2);
}

TEST_CASE("solution error halves with dt (first order)") {
    const double T = 1.0, lambda = 0.9;
    const int l_max = 5;
    auto run = [&](double dt) {
        const auto grid = AgeGrid::make(dt, 8.0);
        FluidSolver solver(Distribution::exponential(1.0), lambda, 2, grid, l_max, false);
        return solver.solve(FluidState::empty(grid, l_max), T, linspace_times(T, 10));
    };
    const auto a = run(4e-3), b = run(2e-3), c = run(1e-3);
    auto gap = [&](const FluidTrace& x, const FluidTrace& y) {
        double g = 0.0;
        for (std::size_t k = 0; k < x.times.size(); ++k)
            for (int l = 1; l <= l_max; ++l)
                g = std::max(g, std::abs(x.S[k][static_cast<std::size_t>(l)] -
                                         y.S[k][static_cast<std::size_t>(l)]));
        return g;
    };
    const double g1 = gap(a, b), g2 = gap(b, c);
    INFO("refinement constant C ~ " << g2 / 1e-3);
    CHECK(g1 / g2 > 1.6);
    CHECK(g1 / g2 < 2.4);
}

TEST_CASE("ode_reference basics") {
    SECTION("pure death is exponential decay") {
        std::vector<double> s0(4, 0.0);
        s0[0] = 1.0;
        const auto tr = ode_reference(0.0, 2, s0, 5.0, 1e-3, linspace_times(5.0, 10));
        for (std::size_t k = 0; k < tr.times.size(); ++k)
            CHECK(std::abs(tr.s[k][1] - std::exp(-tr.times[k])) <= 1e-10);
    }
    SECTION("fixed point is stationary") {
        const double lambda = 0.7;
        const int d = 2, l_max = 6;
        std::vector<double> s0(l_max);
        for (int l = 1; l <= l_max; ++l)
            s0[static_cast<std::size_t>(l) - 1] = std::pow(lambda, std::pow(2.0, l) - 1.0);
        const auto tr = ode_reference(lambda, d, s0, 1.0, 1e-3, {0.0, 1.0});
        for (int l = 1; l <= l_max; ++l)
            CHECK(std::abs(tr.s[1][static_cast<std::size_t>(l)] -
                           s0[static_cast<std::size_t>(l) - 1]) <= 1e-12);
    }
    SECTION("step halving self-consistency") {
        std::vector<double> s0(8, 0.0);
        const auto a = ode_reference(0.9, 2, s0, 10.0, 1e-3, {10.0});
        const auto b = ode_reference(0.9, 2, s0, 10.0, 5e-4, {10.0});
        double gap = 0.0;
        for (int l = 1; l <= 8; ++l)
            gap = std::max(gap, std::abs(a.s[0][static_cast<std::size_t>(l)] -
                                         b.s[0][static_cast<std::size_t>(l)]));
        CHECK(gap <= 1e-9);
    }
}

TEST_CASE("long-horizon equilibrium approaches the double-exponential tail") {
    const double lambda = 0.7, dt = 5e-3, T = 80.0;
    const int l_max = 6;
    const auto grid = AgeGrid::make(dt, default_a_max(Distribution::exponential(1.0), dt));
    FluidSolver solver(Distribution::exponential(1.0), lambda, 2, grid, l_max, false);
    const auto tr = solver.solve(FluidState::empty(grid, l_max), T, {T});
    const auto ode = ode_reference(lambda, 2, std::vector<double>(l_max, 0.0), T, dt, {T});
    for (int l = 1; l <= 3; ++l) {
        const double target = std::pow(lambda, std::pow(2.0, l) - 1.0);
        CHECK(std::abs(tr.S[0][static_cast<std::size_t>(l)] - target) <= 2e-2);
        CHECK(std::abs(ode.s[0][static_cast<std::size_t>(l)] - target) <= 1e-6);
    }
}
