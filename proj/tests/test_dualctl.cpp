#include <gtest/gtest.h>

#include <cmath>

#include "absde/dualctl.hpp"
#include "absde/random.hpp"

using namespace absde;

namespace {

LinearAbsdeSpec flat_spec(double T, double theta) {
    LinearAbsdeSpec ls;
    ls.t_end = T;
    ls.theta = theta;
    ls.q = [](double, double) { return 1.0; };
    ls.p = [](double, double) { return 0.0; };
    ls.bound_mu = 0.5;
    return ls;
}

LinearAbsdeSpec full_spec() {
    LinearAbsdeSpec ls = flat_spec(1.0, 0.5);
    ls.mu = [](double t) { return 0.3 * std::cos(t); };
    ls.mu_bar = [](double t) { return 0.4 - 0.2 * t; };
    ls.sigma = [](double t) { return 0.25 + 0.1 * std::sin(t); };
    ls.sigma_bar = [](double t) { return -0.3 + 0.1 * t; };
    ls.l = [](double t) { return 0.2 * t; };
    ls.q = [](double t, double w) { return 1.0 + 0.5 * w + 0.1 * t * w * w; };
    ls.p = [](double, double w) { return 0.5 + 0.2 * w; };
    return ls;
}

}  // namespace

TEST(Duality, ZeroCoefficientsGiveOnePerPath) {
    auto ls = flat_spec(1.0, 0.5);
    TimeGrid g(1.0, 0.5, 30);
    auto ens = generate_ensemble(g, 500, 1, 1);
    auto r = duality_price(ls, 0.0, ens);
    EXPECT_EQ(r.mean, 1.0);
    EXPECT_EQ(r.stderr_, 0.0);
}

TEST(Duality, DeterministicExponential) {
    auto ls = flat_spec(1.0, 0.5);
    const double mu = 0.4, q0 = 1.5;
    ls.mu = [mu](double) { return mu; };
    ls.q = [q0](double, double) { return q0; };
    TimeGrid g(1.0, 0.5, 150);
    auto ens = generate_ensemble(g, 1000, 1, 2);
    for (double t : {0.0, 0.5}) {
        auto r = duality_price(ls, t, ens);
        double exact = q0 * std::exp(mu * (1.0 - t));
        EXPECT_LE(std::abs(r.mean - exact), 3.0 * r.stderr_ + q0 * mu * mu * g.dt());
    }
}

TEST(Duality, MatchesGridSolverOnFullInstance) {
    auto ls = full_spec();
    const std::size_t n = 150;
    auto spec = induced_spec(ls, n);
    auto grid = solve_absde_grid(spec);
    auto ens = generate_ensemble(spec.grid(), 100000, 1, 21);
    auto r = duality_price(ls, 0.0, ens);
    EXPECT_LE(std::abs(r.mean - grid.y_at(0, 0.0)), 3.0 * r.stderr_ + 5.0 * spec.grid().dt());
}

TEST(Duality, Errors) {
    auto ls = full_spec();
    auto ens = generate_ensemble(TimeGrid(1.0, 0.25, 50), 10, 1, 1);
    try {
        duality_price(ls, 0.0, ens);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::span_mismatch);
    }
    ls.bound_mu = 0.1;
    EXPECT_THROW(induced_spec(ls, 30), Error);
}

namespace {

// Five controls on [0, 1]; coefficients bounded by 0.3.
ControlProblem five_controls() {
    ControlProblem cp;
    for (double u : {0.0, 0.25, 0.5, 0.75, 1.0}) cp.control_set.points.push_back({u});
    cp.alpha = [](double, const std::vector<double>& u) { return 0.3 * (u[0] - 0.5); };
    cp.b = [](double, const std::vector<double>& u) { return 0.3 * (1.0 - u[0]); };
    cp.sigma_c = [](double, const std::vector<double>& u) { return 0.2 * u[0]; };
    cp.l_c = [](double, const std::vector<double>& u) { return 0.2 * u[0] * (1.0 - u[0]); };
    cp.q = [](double, double w) { return 1.0 + 0.5 * w; };
    cp.theta = 0.5;
    cp.t_end = 1.0;
    cp.bound_mu = 0.3;
    return cp;
}

ControlProblem single(const ControlProblem& cp, std::size_t c) {
    ControlProblem s = cp;
    s.control_set.points = {cp.control_set.points[c]};
    return s;
}

LinearAbsdeSpec linear_of(const ControlProblem& cp, const std::vector<double>& u) {
    LinearAbsdeSpec ls;
    ls.mu = [cp, u](double t) { return cp.alpha(t, u); };
    ls.mu_bar = [cp, u](double t) { return cp.b(t, u); };
    ls.sigma = [cp, u](double t) { return cp.sigma_c(t, u); };
    ls.l = [cp, u](double t) { return cp.l_c(t, u); };
    ls.q = cp.q;
    ls.p = [](double, double) { return 0.0; };
    ls.theta = cp.theta;
    ls.t_end = cp.t_end;
    ls.bound_mu = cp.bound_mu;
    return ls;
}

}  // namespace

TEST(ValueFunction, SingletonEqualsLinearSolve) {
    auto cp = five_controls();
    const std::size_t n = 60;
    for (std::size_t c : {0u, 3u}) {
        auto s = single(cp, c);
        auto v = value_function(s, n);
        auto lin = solve_absde_grid(induced_spec(linear_of(cp, cp.control_set.points[c]), n));
        for (std::size_t k = 0; k < v.y_values().size(); ++k) ASSERT_NEAR(v.y_values()[k], lin.y_values()[k], 1e-12);
        auto tb = extract_control(s, v);
        EXPECT_TRUE(tb.is_constant());
        EXPECT_EQ(tb.at(0, 0), 0u);
    }
}

TEST(ValueFunction, DominatingControlIsSelectedEverywhere) {
    ControlProblem cp;
    cp.control_set.points = {{0.0}, {1.0}};
    cp.alpha = [](double, const std::vector<double>& u) { return 0.1 + 0.1 * u[0]; };
    cp.b = [](double, const std::vector<double>& u) { return 0.1 + 0.2 * u[0]; };
    cp.sigma_c = [](double, const std::vector<double>&) { return 0.2; };
    cp.l_c = [](double, const std::vector<double>& u) { return 0.05 + 0.1 * u[0]; };
    cp.q = [](double, double w) { return 2.0 + 0.3 * std::tanh(w); };
    cp.theta = 0.5;
    cp.bound_mu = 0.3;
    const std::size_t n = 60;
    auto v = value_function(cp, n);
    auto star = value_function(single(cp, 1), n);
    for (std::size_t k = 0; k < v.y_values().size(); ++k) ASSERT_NEAR(v.y_values()[k], star.y_values()[k], 1e-12);
    auto tb = extract_control(cp, v);
    EXPECT_TRUE(tb.is_constant());
    EXPECT_EQ(tb.at(0, 0), 1u);
}

TEST(ValueFunction, DominatesConstantControlsAndFeedbackAttainsIt) {
    auto cp = five_controls();
    const std::size_t n = 60;
    auto v = value_function(cp, n);
    const double y0 = v.y_at(0, 0.0);
    auto ens = generate_ensemble(v.grid(), 40000, 1, 61);
    const double dt = v.grid().dt();
    for (std::size_t c = 0; c < cp.control_set.size(); ++c) {
        auto j = evaluate_objective(cp, constant_policy(c), ens);
        EXPECT_GE(y0, j.mean - (3.0 * j.stderr_ + 5.0 * dt)) << "control " << c;
    }
    auto tb = extract_control(cp, v);
    auto jf = evaluate_objective(cp, tb.policy(), ens);
    EXPECT_LE(std::abs(jf.mean - y0), 3.0 * jf.stderr_ + 5.0 * dt);
}

TEST(ValueFunction, MonotoneInTerminalProcess) {
    auto cp = five_controls();
    auto lo = value_function(cp, 60);
    cp.q = [](double t, double w) { return 1.0 + 0.5 * w + 0.2 * t * t; };
    auto hi = value_function(cp, 60);
    for (std::size_t k = 0; k < lo.y_values().size(); ++k) ASSERT_GE(hi.y_values()[k], lo.y_values()[k]);
}

TEST(ValueFunction, RejectsNegativeB) {
    auto cp = five_controls();
    cp.b = [](double, const std::vector<double>& u) { return 0.2 - 0.3 * u[0]; };
    try {
        value_function(cp, 60);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::negative_b);
    }
}

TEST(Objective, ZeroPayoffIsZero) {
    auto cp = five_controls();
    cp.q = [](double, double) { return 0.0; };
    cp.l_c = nullptr;
    auto ens = generate_ensemble(TimeGrid(1.0, 0.5, 30), 2000, 1, 3);
    auto j = evaluate_objective(cp, constant_policy(2), ens);
    EXPECT_EQ(j.mean, 0.0);
    EXPECT_EQ(j.stderr_, 0.0);
}

TEST(Objective, DeterministicOdeOracle) {
    ControlProblem cp;
    cp.control_set.points = {{0.0}};
    const double a = 0.3, l = 0.2, q0 = 1.2;
    cp.alpha = [a](double, const std::vector<double>&) { return a; };
    cp.l_c = [l](double, const std::vector<double>&) { return l; };
    cp.q = [q0](double, double) { return q0; };
    cp.theta = 0.5;
    cp.bound_mu = 0.3;
    TimeGrid g(1.0, 0.5, 300);
    auto ens = generate_ensemble(g, 200, 1, 4);
    auto j = evaluate_objective(cp, constant_policy(0), ens);
    double exact = q0 * std::exp(a) + l * (std::exp(a) - 1.0) / a;
    EXPECT_LE(std::abs(j.mean - exact), 3.0 * j.stderr_ + 2.0 * g.dt());
}

TEST(Objective, PrehistoryOfControlIsIrrelevant) {
    auto cp = five_controls();
    auto ens = generate_ensemble(TimeGrid(1.0, 0.5, 60), 3000, 1, 5);
    ControlPolicy a = [](std::ptrdiff_t step, double) { return step < 0 ? std::size_t{0} : std::size_t{2}; };
    ControlPolicy b = [](std::ptrdiff_t step, double) { return step < 0 ? std::size_t{4} : std::size_t{2}; };
    auto ja = evaluate_objective(cp, a, ens);
    auto jb = evaluate_objective(cp, b, ens);
    EXPECT_EQ(ja.mean, jb.mean);
    EXPECT_EQ(ja.stderr_, jb.stderr_);
}

TEST(Objective, SpanMismatch) {
    auto cp = five_controls();
    auto ens = generate_ensemble(TimeGrid(1.0, 0.25, 50), 10, 1, 1);
    try {
        evaluate_objective(cp, constant_policy(0), ens);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::span_mismatch);
    }
}

TEST(Lipschitz, LinearGeneratorsWithinDeclaredConstant) {
    auto spec = induced_spec(full_spec(), 60);
    ProbeBox box;
    box.t_hi = 1.0;
    double est = estimate_lipschitz(spec.gen(), box, 4000, 7);
    EXPECT_LE(est, spec.gen().lipschitz_c * 1.01);
    auto vs = value_spec(five_controls(), 60);
    EXPECT_LE(estimate_lipschitz(vs.gen(), box, 4000, 8), vs.gen().lipschitz_c * 1.01);
}
