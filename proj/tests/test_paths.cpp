#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "absde/paths.hpp"

using namespace absde;

namespace {
// Seeds fixed once for the statistical suite.
constexpr std::uint64_t kStatSeed = 20240611;
}  // namespace

TEST(Philox, KnownAnswers) {
    auto r = Philox4x32(0)({0, 0, 0, 0});
    EXPECT_EQ(r[0], 0x6627e8d5u);
    EXPECT_EQ(r[1], 0xe169c58du);
    EXPECT_EQ(r[2], 0xbc57ac4cu);
    EXPECT_EQ(r[3], 0x9b00dbd8u);
    auto s = Philox4x32(0xffffffffffffffffull)({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu});
    EXPECT_EQ(s[0], 0x408f276du);
    EXPECT_EQ(s[1], 0x41c83b0eu);
    EXPECT_EQ(s[2], 0xa20bc7c6u);
    EXPECT_EQ(s[3], 0x6d5451fdu);
}

TEST(Ensemble, StartsAtZero) {
    TimeGrid g(1.0, 0.5, 30);
    auto ens = generate_ensemble(g, 257, 2, 11);
    for (std::size_t p = 0; p < ens.n_paths(); ++p)
        for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(ens.w(p, 0, k), 0.0);
}

TEST(Ensemble, TerminalMeanAndVariance) {
    TimeGrid g(0.5, 0.5, 20);
    const std::size_t n = 100000;
    auto ens = generate_ensemble(g, n, 1, kStatSeed);
    auto ms = mean_stderr(n, [&](std::size_t p) { return ens.w(p, g.n_steps()); });
    EXPECT_LE(std::abs(ms.mean), 3.0 * std::sqrt(1.0 / n));
    double var = ms.stderr_ * ms.stderr_ * n;
    EXPECT_NEAR(var, g.span(), 0.05 * g.span());
}

TEST(Ensemble, IncrementsTelescope) {
    TimeGrid g(1.0, 0.25, 25);
    auto ens = generate_ensemble(g, 100, 1, 3);
    std::vector<double> total(ens.n_paths(), 0.0);
    for (std::size_t i = 0; i < g.n_steps(); ++i) {
        auto s = increment_slice(ens, i);
        for (std::size_t p = 0; p < ens.n_paths(); ++p) total[p] += s[p];
    }
    for (std::size_t p = 0; p < ens.n_paths(); ++p)
        EXPECT_NEAR(total[p], ens.w(p, g.n_steps()) - ens.w(p, 0), 1e-12);
}

TEST(Ensemble, IncrementIndependenceAndVariance) {
    TimeGrid g(1.0, 0.0, 10);
    const std::size_t n = 100000;
    auto ens = generate_ensemble(g, n, 1, kStatSeed + 1);
    auto a = increment_slice(ens, 2);
    auto b = increment_slice(ens, 7);
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (std::size_t p = 0; p < n; ++p) {
        sa += a[p];
        sb += b[p];
        saa += a[p] * a[p];
        sbb += b[p] * b[p];
        sab += a[p] * b[p];
    }
    double ma = sa / n, mb = sb / n;
    double va = saa / n - ma * ma, vb = sbb / n - mb * mb;
    double corr = (sab / n - ma * mb) / std::sqrt(va * vb);
    EXPECT_LT(std::abs(corr), 0.02);
    EXPECT_NEAR(va, g.dt(), 0.05 * g.dt());
    EXPECT_NEAR(vb, g.dt(), 0.05 * g.dt());
}

TEST(Ensemble, IncrementSliceOutOfRange) {
    TimeGrid g(1.0, 0.0, 10);
    auto ens = generate_ensemble(g, 4, 1, 1);
    try {
        increment_slice(ens, 10);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::index_out_of_range);
    }
}

TEST(Ensemble, BitExactAcrossWorkerCounts) {
    TimeGrid g(1.0, 0.5, 45);
    set_max_threads(1);
    auto a = generate_ensemble(g, 3000, 3, 77);
    set_max_threads(4);
    auto b = generate_ensemble(g, 3000, 3, 77);
    set_max_threads(0);
    EXPECT_EQ(a.raw(), b.raw());
    auto c = generate_ensemble(g, 3000, 3, 78);
    EXPECT_NE(a.raw(), c.raw());
}

TEST(Ensemble, PrefixStableInPathCount) {
    TimeGrid g(1.0, 0.0, 8);
    auto small = generate_ensemble(g, 10, 1, 5);
    auto large = generate_ensemble(g, 1000, 1, 5);
    for (std::size_t p = 0; p < 10; ++p)
        for (std::size_t i = 0; i < g.n_points(); ++i) EXPECT_EQ(small.w(p, i), large.w(p, i));
}

TEST(Ensemble, AntitheticPairsMirror) {
    TimeGrid g(1.0, 0.0, 8);
    auto ens = generate_ensemble(g, 10, 1, 5, true);
    for (std::size_t p = 0; p < 10; p += 2)
        for (std::size_t i = 0; i < g.n_points(); ++i) EXPECT_EQ(ens.w(p + 1, i), -ens.w(p, i));
}

TEST(Ensemble, DumpAndReload) {
    TimeGrid g(1.0, 0.5, 12);
    auto ens = generate_ensemble(g, 33, 2, 99, true);
    auto path = (std::filesystem::temp_directory_path() / "absde_ens_roundtrip.bin").string();
    save_ensemble(ens, path);
    auto back = load_ensemble(path);
    std::remove(path.c_str());
    EXPECT_EQ(back.raw(), ens.raw());
    EXPECT_EQ(back.seed(), 99u);
    EXPECT_TRUE(back.antithetic());
    EXPECT_TRUE(back.grid() == g);
    EXPECT_THROW(load_ensemble(path), Error);
}
