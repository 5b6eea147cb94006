#include <gtest/gtest.h>

#include <cmath>

#include "absde/bsde.hpp"
#include "absde/random.hpp"
#include "oracles.hpp"

using namespace absde;

namespace {

double max_interior_error(const ValueSurface& s, std::size_t row_end, double x_lim,
                          const std::function<double(double, double)>& u, bool z = false) {
    double worst = 0.0;
    for (std::size_t i = 0; i < row_end; ++i)
        for (std::size_t j = 0; j < s.n_x(); ++j) {
            double x = s.x(j);
            if (std::abs(x) > x_lim) continue;
            double v = z ? s.z(i, j) : s.y(i, j);
            worst = std::max(worst, std::abs(v - u(s.grid().time(i), x)));
        }
    return worst;
}

}  // namespace

TEST(BsdeGrid, MartingaleRepresentationOfW) {
    TimeGrid g(1.0, 0.0, 50);
    auto s = solve_bsde_grid([](double, double, double) { return 0.0; }, [](double x) { return x; }, g);
    double lim = s.x_max() / 2;
    EXPECT_LE(max_interior_error(s, g.terminal_index(), lim, [](double, double x) { return x; }), 1e-6);
    EXPECT_LE(max_interior_error(s, g.terminal_index(), lim, [](double, double) { return 1.0; }, true), 1e-6);
}

TEST(BsdeGrid, ConstantDriverShiftsByRemainingTime) {
    TimeGrid g(1.0, 0.0, 40);
    auto term = [](double x) { return std::sin(x) + 0.2 * x * x; };
    auto base = solve_bsde_grid([](double, double, double) { return 0.0; }, term, g);
    const double c = 0.7;
    auto shifted = solve_bsde_grid([c](double, double, double) { return c; }, term, g);
    for (std::size_t i = 0; i <= g.terminal_index(); ++i)
        for (std::size_t j = 0; j < base.n_x(); ++j)
            ASSERT_NEAR(shifted.y(i, j), base.y(i, j) + c * (1.0 - g.time(i)), 1e-10);
}

TEST(BsdeGrid, LinearDecayMatchesOde) {
    const double r = 0.8, T = 1.0;
    TimeGrid g(T, 0.0, 100);
    auto s = solve_bsde_grid([r](double, double y, double) { return -r * y; }, [](double) { return 1.0; }, g,
                             GridSettings{}, r);
    double bound = 2.0 * r * r * g.dt() * T;
    double worst = max_interior_error(s, g.terminal_index(), s.x_max(),
                                      [&](double t, double) { return std::exp(-r * (T - t)); });
    EXPECT_LE(worst, bound);
    EXPECT_GT(worst, 0.0);
}

TEST(BsdeGrid, StabilityGuard) {
    TimeGrid g(1.0, 0.0, 10);
    try {
        solve_bsde_grid([](double, double y, double) { return -20.0 * y; }, [](double) { return 1.0; }, g,
                        GridSettings{}, 20.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::stability_guard);
    }
}

TEST(BsdeGrid, SurfaceCsvLayout) {
    TimeGrid g(1.0, 0.0, 4);
    GridSettings gs;
    gs.n_x = 5;
    auto s = solve_bsde_grid([](double, double, double) { return 0.0; }, [](double x) { return x; }, g, gs);
    std::ostringstream os;
    s.write_csv(os);
    std::string text = os.str();
    EXPECT_EQ(text.substr(0, 8), "t,x,y,z\n");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 5 * 5);
}

namespace {

std::vector<double> terminal_of(const PathEnsemble& ens, const std::function<double(double)>& f) {
    std::vector<double> v(ens.n_paths());
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = f(ens.w(p, ens.grid().terminal_index()));
    return v;
}

}  // namespace

TEST(BsdeMc, MartingaleRepresentationOfW) {
    TimeGrid g(1.0, 0.0, 20);
    auto ens = generate_ensemble(g, 100000, 1, 101);
    auto res = solve_bsde_mc([](double, double, double) { return 0.0; }, terminal_of(ens, [](double x) { return x; }),
                             ens);
    EXPECT_LE(std::abs(res.y0), 3.0 * res.y0_stderr);
    // Z ~ 1 on interior paths
    auto ms = mean_stderr(ens.n_paths(), [&](std::size_t p) { return res.sol.Z(5, p); });
    EXPECT_NEAR(ms.mean, 1.0, 1e-2);
}

TEST(BsdeMc, ConstantDriverAndLinearDecay) {
    TimeGrid g(1.0, 0.0, 20);
    auto ens = generate_ensemble(g, 100000, 1, 102);
    auto term = terminal_of(ens, [](double x) { return 1.0 + 0.5 * x * x; });
    const double c = 0.7;
    auto a = solve_bsde_mc([c](double, double, double) { return c; }, term, ens);
    // E[1 + W_T^2 / 2] + c T
    EXPECT_LE(std::abs(a.y0 - (1.5 + c)), 3.0 * a.y0_stderr);

    const double r = 0.8;
    auto ones = terminal_of(ens, [](double) { return 1.0; });
    auto b = solve_bsde_mc([r](double, double y, double) { return -r * y; }, ones, ens);
    EXPECT_NEAR(b.y0, std::exp(-r), 2.0 * r * r * g.dt());
}

TEST(BsdeMc, ZeroDataGivesZero) {
    TimeGrid g(1.0, 0.0, 10);
    auto ens = generate_ensemble(g, 2000, 1, 103);
    std::vector<double> zero(ens.n_paths(), 0.0);
    auto res = solve_bsde_mc([](double, double, double) { return 0.0; }, zero, ens);
    for (double v : res.sol.y) ASSERT_EQ(v, 0.0);
    for (double v : res.sol.z) ASSERT_EQ(v, 0.0);
}

TEST(BsdeMc, AgreesWithGridOnLinearProblem) {
    TimeGrid g(1.0, 0.0, 25);
    auto driver = [](double t, double y, double z) { return -0.3 * y + 0.2 * z + 0.1 * t; };
    auto term = [](double x) { return 0.5 + x + 0.25 * x * x; };
    auto grid = solve_bsde_grid(driver, term, g);
    auto ens = generate_ensemble(g, 100000, 1, 104);
    auto mc = solve_bsde_mc(driver, terminal_of(ens, term), ens);
    double y0_grid = grid.y_at(0, 0.0);
    EXPECT_LE(std::abs(y0_grid - mc.y0), 3.0 * mc.y0_stderr + 5.0 * g.dt());
}

TEST(BsdeGrid, ComparisonOnRandomOrderedPairs) {
    SeededUniform rng(77);
    TimeGrid g(1.0, 0.0, 40);
    for (int trial = 0; trial < 10; ++trial) {
        double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1), k = rng.uniform(0, 1), e0 = rng.uniform(0, 0.5);
        double q = rng.uniform(-1, 1);
        auto g2 = [=](double t, double y, double z) { return a * y + b * z + std::sin(t) * q; };
        auto g1 = [=](double t, double y, double z) { return g2(t, y, z) + k * (1.0 + std::cos(5 * t)); };
        auto x2 = [=](double x) { return q * x + std::abs(x); };
        auto x1 = [=](double x) { return x2(x) + e0 + 0.1 * x * x; };
        auto u1 = solve_bsde_grid(g1, x1, g);
        auto u2 = solve_bsde_grid(g2, x2, g);
        for (std::size_t i = 0; i <= g.terminal_index(); ++i)
            for (std::size_t j = 0; j < u1.n_x(); ++j) ASSERT_GE(u1.y(i, j), u2.y(i, j) - 5.0 * g.dt());
    }
}
