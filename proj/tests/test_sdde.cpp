#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "absde/sdde.hpp"

using namespace absde;

namespace {

SddeCoefficients gbm(double mu, double sigma) {
    SddeCoefficients c;
    c.mu = [mu](double) { return mu; };
    c.mu_bar = [](double) { return 0.0; };
    c.sigma = [sigma](double) { return std::vector<double>{sigma}; };
    c.sigma_bar = [](double) { return std::vector<double>{0.0}; };
    c.theta = 0.25;
    c.bound_mu = 2.0;
    return c;
}

}  // namespace

TEST(SimulateSdde, GeometricBrownianMean) {
    TimeGrid g(1.0, 0.25, 125);
    auto ens = generate_ensemble(g, 100000, 1, 314);
    const double mu = 0.3, sigma = 0.25;
    auto sp = simulate_sdde(gbm(mu, sigma), [](double) { return 1.0; }, 0.0, 1.0, ens);
    std::size_t last = sp.n_local() - 1;
    auto ms = mean_stderr(sp.n_paths(), [&](std::size_t p) { return sp.x(p, last); });
    // Euler bias (1 + mu dt)^N - e^{mu T} is ~4e-4 here, below the noise.
    EXPECT_LE(std::abs(ms.mean - std::exp(mu)), 3.0 * ms.stderr_ + 1e-3);
}

TEST(SimulateSdde, NoDynamicsKeepsPrehistoryEndpoint) {
    TimeGrid g(1.0, 0.5, 30);
    auto ens = generate_ensemble(g, 50, 1, 1);
    SddeCoefficients c;
    c.theta = 0.5;
    auto sp = simulate_sdde(c, [](double s) { return 1.5 + s; }, 0.5, 1.5, ens);
    for (std::size_t p = 0; p < sp.n_paths(); ++p)
        for (std::size_t j = sp.lag(); j < sp.n_local(); ++j) EXPECT_EQ(sp.x(p, j), 2.0);
    EXPECT_EQ(sp.x(0, 0), 1.5);
}

TEST(SimulateSdde, AdjointStartMatchesPureSdeOnFirstDelayWindow) {
    TimeGrid g(1.0, 0.5, 60);
    auto ens = generate_ensemble(g, 500, 1, 2);
    SddeCoefficients full;
    full.mu = [](double t) { return 0.2 + 0.1 * t; };
    full.mu_bar = [](double t) { return 0.3 - 0.2 * t; };
    full.sigma = [](double t) { return std::vector<double>{0.2 * std::cos(t)}; };
    full.sigma_bar = [](double) { return std::vector<double>{0.15}; };
    full.theta = 0.5;
    SddeCoefficients pure = full;
    pure.mu_bar = [](double) { return 0.0; };
    pure.sigma_bar = [](double) { return std::vector<double>{0.0}; };
    const double t = 0.25;
    auto a = simulate_sdde(full, unit_prehistory(t), t, 1.5, ens);
    auto b = simulate_sdde(pure, unit_prehistory(t), t, 1.5, ens);
    const std::size_t window_end = a.lag() + g.aligned_steps(0.5, "theta");
    for (std::size_t p = 0; p < a.n_paths(); ++p) {
        for (std::size_t j = 0; j <= window_end; ++j) ASSERT_EQ(a.x(p, j), b.x(p, j));
    }
    bool differs_later = false;
    for (std::size_t p = 0; p < a.n_paths(); ++p) differs_later |= a.x(p, a.n_local() - 1) != b.x(p, b.n_local() - 1);
    EXPECT_TRUE(differs_later);
}

TEST(SimulateSdde, LinearInPrehistory) {
    TimeGrid g(1.0, 0.5, 60);
    auto ens = generate_ensemble(g, 200, 1, 3);
    SddeCoefficients c;
    c.mu = [](double) { return -0.4; };
    c.mu_bar = [](double t) { return 0.5 * std::sin(3 * t); };
    c.sigma = [](double) { return std::vector<double>{0.3}; };
    c.sigma_bar = [](double t) { return std::vector<double>{0.2 * t}; };
    c.theta = 0.5;
    auto pre = [](double s) { return 1.0 + s * s; };
    auto a = simulate_sdde(c, pre, 0.5, 1.5, ens);
    auto b = simulate_sdde(c, [&](double s) { return 2.0 * pre(s); }, 0.5, 1.5, ens);
    for (std::size_t p = 0; p < a.n_paths(); ++p)
        for (std::size_t j = 0; j < a.n_local(); ++j) ASSERT_EQ(b.x(p, j), 2.0 * a.x(p, j));
}

TEST(SimulateSdde, WeakOrderOne) {
    const double mu = 1.0, sigma = 0.1;
    std::vector<double> dts, errs;
    for (std::size_t n : {10u, 20u, 40u, 80u}) {
        TimeGrid g(1.0, 0.0, n);
        auto ens = generate_ensemble(g, 100000, 1, 55);
        SddeCoefficients c = gbm(mu, sigma);
        c.theta = 0.0;
        auto sp = simulate_sdde(c, [](double) { return 1.0; }, 0.0, 1.0, ens);
        auto ms = mean_stderr(sp.n_paths(), [&](std::size_t p) { return sp.x(p, sp.n_local() - 1); });
        dts.push_back(g.dt());
        errs.push_back(std::abs(ms.mean - std::exp(mu)));
    }
    EXPECT_NEAR(loglog_slope(dts, errs), 1.0, 0.3);
}

TEST(SimulateSdde, Errors) {
    TimeGrid g(1.0, 0.5, 30);
    auto ens = generate_ensemble(g, 10, 1, 1);
    SddeCoefficients c;
    c.theta = 0.33;
    try {
        simulate_sdde(c, [](double) { return 1.0; }, 0.0, 1.0, ens);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::misaligned_delay);
    }
    c.theta = 0.5;
    try {
        simulate_sdde(c, [](double) { return 1.0; }, 0.0, 2.0, ens);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::ensemble_span_mismatch);
    }
    c.mu = [](double) { return 5.0; };
    c.bound_mu = 1.0;
    EXPECT_THROW(simulate_sdde(c, [](double) { return 1.0; }, 0.0, 1.0, ens), Error);
}

namespace {

ControlSet two_controls() { return {{{0.0}, {1.0}}}; }

DensityCoefficients density(double alpha, double b_scale, double sigma) {
    DensityCoefficients d;
    d.alpha = [alpha](double, const std::vector<double>&) { return alpha; };
    d.b = [b_scale](double t, const std::vector<double>& u) { return b_scale * (1.0 + u[0] + 0.0 * t); };
    d.sigma = [sigma](double, const std::vector<double>&) { return std::vector<double>{sigma}; };
    return d;
}

}  // namespace

TEST(SimulateDensity, NoDynamicsIsOne) {
    TimeGrid g(1.0, 0.5, 30);
    auto ens = generate_ensemble(g, 20, 1, 1);
    auto sp = simulate_density(two_controls(), constant_policy(1), density(0.0, 0.0, 0.0), 0.5, ens, 0.0);
    for (std::size_t p = 0; p < sp.n_paths(); ++p)
        for (std::size_t j = sp.lag(); j < sp.n_local(); ++j) EXPECT_EQ(sp.x(p, j), 1.0);
}

TEST(SimulateDensity, ReducesToGeometricBrownian) {
    TimeGrid g(1.0, 0.5, 150);
    auto ens = generate_ensemble(g, 100000, 1, 8);
    auto sp = simulate_density(two_controls(), constant_policy(0), density(0.2, 0.0, 0.3), 0.5, ens, 0.0);
    std::size_t jT = sp.local(g.terminal_index());
    auto ms = mean_stderr(sp.n_paths(), [&](std::size_t p) { return sp.x(p, jT); });
    EXPECT_LE(std::abs(ms.mean - std::exp(0.2)), 3.0 * ms.stderr_ + 1e-3);
}

TEST(SimulateDensity, FirstWindowIgnoresDelayedControl) {
    TimeGrid g(1.0, 0.5, 60);
    auto ens = generate_ensemble(g, 300, 1, 9);
    const std::size_t lag = g.aligned_steps(0.5, "theta");
    // two policies that agree on [0, T+K] but differ on the prehistory
    ControlPolicy pa = [](std::ptrdiff_t step, double) { return step < 0 ? 0u : 1u; };
    ControlPolicy pb = [](std::ptrdiff_t, double) { return std::size_t{1}; };
    auto a = simulate_density(two_controls(), pa, density(0.1, 0.4, 0.2), 0.5, ens, 0.0);
    auto b = simulate_density(two_controls(), pb, density(0.1, 0.4, 0.2), 0.5, ens, 0.0);
    auto c = simulate_density(two_controls(), pb, density(0.1, 0.0, 0.2), 0.5, ens, 0.0);
    for (std::size_t p = 0; p < a.n_paths(); ++p) {
        for (std::size_t j = 0; j <= 2 * lag; ++j) {
            ASSERT_EQ(a.x(p, j), b.x(p, j));
            ASSERT_EQ(a.x(p, j), c.x(p, j));
        }
        for (std::size_t j = 0; j < a.n_local(); ++j) ASSERT_EQ(a.x(p, j), b.x(p, j));
    }
}

TEST(SimulateDensity, NegativeBRejected) {
    TimeGrid g(1.0, 0.5, 30);
    auto ens = generate_ensemble(g, 5, 1, 1);
    try {
        simulate_density(two_controls(), constant_policy(0), density(0.0, -0.1, 0.0), 0.5, ens, 0.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::negative_b);
    }
}

TEST(PathStats, CsvHasOneRowPerTime) {
    TimeGrid g(1.0, 0.5, 12);
    auto ens = generate_ensemble(g, 100, 1, 4);
    auto sp = simulate_sdde(gbm(0.1, 0.2), [](double) { return 1.0; }, 0.0, 1.5, ens);
    auto path = (std::filesystem::temp_directory_path() / "absde_stats.csv").string();
    write_path_stats(sp, path);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "t,mean,stderr,q0.05,q0.5,q0.95");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, sp.n_local());
    std::filesystem::remove(path);
}
