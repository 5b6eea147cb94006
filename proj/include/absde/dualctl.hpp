#pragma once

// The linear anticipated equation with delay-type coefficients and its
// forward (delayed SDE) price, and the control problem whose value function
// solves the anticipated equation with the pointwise max generator.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "absde/absde.hpp"
#include "absde/bsde.hpp"
#include "absde/condexp.hpp"
#include "absde/core.hpp"
#include "absde/model.hpp"
#include "absde/paths.hpp"
#include "absde/sdde.hpp"

namespace absde {

/// -dY = (mu Y + mubar E[Y_{t+theta}] + sigma Z + sigmabar E[Z_{t+theta}] + l) dt - Z dW on [0, T],
/// Y = Q and Z = P on [T, T + theta]. Coefficients are deterministic functions of t.
struct LinearAbsdeSpec {
    std::function<double(double)> mu, mu_bar, sigma, sigma_bar, l;
    double theta = 0.0;
    double t_end = 1.0;
    std::function<double(double t, double w)> q;
    std::function<double(double t, double w)> p;
    double bound_mu = 1.0;
};

namespace detail {
inline double call_or_zero(const std::function<double(double)>& f, double t) { return f ? f(t) : 0.0; }
}  // namespace detail

/// Checks |coefficient| <= bound_mu on the grid points of [-theta, T + theta].
inline void check_linear_bounds(const LinearAbsdeSpec& ls, const TimeGrid& g) {
    const std::size_t lag = g.aligned_steps(ls.theta, "theta");
    for (std::ptrdiff_t i = -static_cast<std::ptrdiff_t>(lag); i <= static_cast<std::ptrdiff_t>(g.n_steps()); ++i) {
        double t = detail::signed_time(g, i);
        double worst = std::max({std::abs(detail::call_or_zero(ls.mu, t)), std::abs(detail::call_or_zero(ls.mu_bar, t)),
                                 std::abs(detail::call_or_zero(ls.sigma, t)),
                                 std::abs(detail::call_or_zero(ls.sigma_bar, t))});
        require(std::isfinite(worst) && worst <= ls.bound_mu * (1.0 + 1e-12), Errc::invalid_argument,
                strformat("coefficient magnitude %g exceeds bound %g at t = %g", worst, ls.bound_mu, t));
        if (i >= 0 && g.time(static_cast<std::size_t>(i)) <= ls.t_end)
            require(std::isfinite(detail::call_or_zero(ls.l, t)), Errc::invalid_argument, "l is not finite");
    }
}

/// The anticipated equation solved by the duality formula, on [0, T + theta].
inline ProblemSpec induced_spec(const LinearAbsdeSpec& ls, std::size_t n_steps) {
    require(static_cast<bool>(ls.q) && static_cast<bool>(ls.p), Errc::invalid_argument, "Q and P are required");
    TimeGrid g(ls.t_end, ls.theta, n_steps);
    check_linear_bounds(ls, g);
    Generator gen;
    gen.name = "linear";
    gen.f = [ls](double t, double y, double z, double ay, double az) {
        return detail::call_or_zero(ls.mu, t) * y + detail::call_or_zero(ls.mu_bar, t) * ay +
               detail::call_or_zero(ls.sigma, t) * z + detail::call_or_zero(ls.sigma_bar, t) * az +
               detail::call_or_zero(ls.l, t);
    };
    gen.lipschitz_c = ls.bound_mu;
    gen.uses_a_z = static_cast<bool>(ls.sigma_bar);
    TerminalData term{ls.q, ls.p};
    return ProblemSpec(g, DelayFunction::constant(ls.theta, g), DelayFunction::constant(ls.theta, g), gen, term);
}

/// Monte Carlo estimate of E[Y_t] from the closed formula
///   X_T Q_T + int_t^T X_s l_s ds + int_T^{T+theta} (Q_s mubar_{s-theta} + P_s sigmabar_{s-theta}) X_{s-theta} ds
/// with X the delayed SDE started from 1 at t (0 before). Integrals are
/// left-point sums on the ensemble grid.
inline MeanStderr duality_price(const LinearAbsdeSpec& ls, double t, const PathEnsemble& ens) {
    const TimeGrid& g = ens.grid();
    if (std::abs(g.t_end() - ls.t_end) > 1e-12 || std::abs(g.k_extra() - ls.theta) > 1e-12)
        fail(Errc::span_mismatch, strformat("ensemble spans [0, %g] with T = %g; need T = %g, T + theta = %g",
                                            g.span(), g.t_end(), ls.t_end, ls.t_end + ls.theta));
    require(t >= 0.0 && t <= ls.t_end, Errc::invalid_argument, "evaluation time outside [0, T]");
    check_linear_bounds(ls, g);
    SddeCoefficients coef;
    coef.mu = ls.mu;
    coef.mu_bar = ls.mu_bar;
    if (ls.sigma) coef.sigma = [f = ls.sigma](double s) { return std::vector<double>{f(s)}; };
    if (ls.sigma_bar) coef.sigma_bar = [f = ls.sigma_bar](double s) { return std::vector<double>{f(s)}; };
    coef.theta = ls.theta;
    coef.bound_mu = ls.bound_mu;
    StatePaths sp = simulate_sdde(coef, unit_prehistory(t), t, g.span(), ens);

    const std::size_t n_t = g.terminal_index();
    const std::size_t i0 = sp.grid_start();
    const std::size_t lag = sp.lag();
    const double dt = g.dt();
    std::vector<double> lt(n_t, 0.0), mb(g.n_steps(), 0.0), sb(g.n_steps(), 0.0);
    for (std::size_t i = i0; i < n_t; ++i) lt[i] = detail::call_or_zero(ls.l, g.time(i));
    for (std::size_t i = n_t; i < g.n_steps(); ++i) {
        double s = g.time(i) - ls.theta;
        mb[i] = detail::call_or_zero(ls.mu_bar, s);
        sb[i] = detail::call_or_zero(ls.sigma_bar, s);
    }
    return mean_stderr(ens.n_paths(), [&](std::size_t p) {
        double v = sp.x(p, sp.local(n_t)) * ls.q(ls.t_end, ens.w(p, n_t));
        for (std::size_t i = i0; i < n_t; ++i) v += sp.x(p, sp.local(i)) * lt[i] * dt;
        for (std::size_t i = n_t; i < g.n_steps(); ++i) {
            double w = ens.w(p, i);
            double xd = sp.x(p, sp.local(i) - lag);
            v += (ls.q(g.time(i), w) * mb[i] + ls.p(g.time(i), w) * sb[i]) * xd * dt;
        }
        return v;
    });
}

// ---------------------------------------------------------------------------
// Control
// ---------------------------------------------------------------------------

struct ControlProblem {
    ControlSet control_set;
    std::function<double(double t, const std::vector<double>& u)> alpha, b, sigma_c, l_c;
    std::function<double(double t, double w)> q;
    double theta = 0.0;
    double t_end = 1.0;
    double bound_mu = 1.0;
};

namespace detail {

inline double call_u(const std::function<double(double, const std::vector<double>&)>& f, double t,
                     const std::vector<double>& u) {
    return f ? f(t, u) : 0.0;
}

/// max_u [alpha y + z sigma + b a_y + l] and the first maximising index.
inline std::pair<double, std::size_t> hamiltonian(const ControlProblem& cp, double t, double y, double z, double ay) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < cp.control_set.size(); ++c) {
        const auto& u = cp.control_set.points[c];
        double v = call_u(cp.alpha, t, u) * y + z * call_u(cp.sigma_c, t, u) + call_u(cp.b, t, u) * ay +
                   call_u(cp.l_c, t, u);
        if (v > best) {
            best = v;
            arg = c;
        }
    }
    return {best, arg};
}

}  // namespace detail

/// Validates b >= 0 and the coefficient bound on the grid points of [-theta, T + theta].
inline void check_control_problem(const ControlProblem& cp, const TimeGrid& g) {
    require(cp.control_set.size() >= 1, Errc::invalid_argument, "control set is empty");
    require(static_cast<bool>(cp.q), Errc::invalid_argument, "Q is required");
    const std::size_t lag = g.aligned_steps(cp.theta, "theta");
    for (std::ptrdiff_t i = -static_cast<std::ptrdiff_t>(lag); i <= static_cast<std::ptrdiff_t>(g.n_steps()); ++i) {
        double t = detail::signed_time(g, i);
        for (std::size_t c = 0; c < cp.control_set.size(); ++c) {
            const auto& u = cp.control_set.points[c];
            double bv = detail::call_u(cp.b, t, u);
            if (bv < 0.0) fail(Errc::negative_b, strformat("b(%g, u) = %g < 0 for control %zu", t, bv, c));
            double worst = std::max({std::abs(detail::call_u(cp.alpha, t, u)), bv,
                                     std::abs(detail::call_u(cp.sigma_c, t, u)),
                                     std::abs(detail::call_u(cp.l_c, t, u))});
            require(std::isfinite(worst) && worst <= cp.bound_mu * (1.0 + 1e-12), Errc::invalid_argument,
                    strformat("coefficient magnitude %g exceeds bound %g at t = %g", worst, cp.bound_mu, t));
        }
    }
}

/// The anticipated equation with the max generator; delta = zeta = theta and Y = Q, Z = 0 on the band.
inline ProblemSpec value_spec(const ControlProblem& cp, std::size_t n_steps) {
    TimeGrid g(cp.t_end, cp.theta, n_steps);
    check_control_problem(cp, g);
    Generator gen;
    gen.name = "control-max";
    gen.f = [cp](double t, double y, double z, double ay, double) { return detail::hamiltonian(cp, t, y, z, ay).first; };
    gen.lipschitz_c = 3.0 * cp.bound_mu;
    gen.increasing_in_a_y = true;
    gen.uses_a_z = false;
    TerminalData term{cp.q, [](double, double) { return 0.0; }};
    return ProblemSpec(g, DelayFunction::constant(cp.theta, g), DelayFunction::constant(cp.theta, g), gen, term);
}

inline ValueSurface value_function(const ControlProblem& cp, std::size_t n_steps, const GridSettings& gs = {}) {
    return solve_absde_grid(value_spec(cp, n_steps), gs);
}

/// Argmax control index per (row, node) on [0, T).
class ControlTable {
public:
    ControlTable(TimeGrid grid, double x_max, std::size_t n_x)
        : grid_(grid), x_max_(x_max), n_x_(n_x), idx_(grid.terminal_index() * n_x, 0) {
        hx_ = 2.0 * x_max / static_cast<double>(n_x - 1);
    }

    std::size_t& at(std::size_t i, std::size_t j) { return idx_[i * n_x_ + j]; }
    std::size_t at(std::size_t i, std::size_t j) const { return idx_[i * n_x_ + j]; }
    std::size_t rows() const { return grid_.terminal_index(); }
    std::size_t n_x() const { return n_x_; }
    const TimeGrid& grid() const { return grid_; }

    std::size_t node_of(double w) const {
        double u = std::round((w + x_max_) / hx_);
        if (u < 0.0) return 0;
        return std::min(n_x_ - 1, static_cast<std::size_t>(u));
    }

    /// Feedback use: nearest node; steps before 0 reuse row 0 and steps at or
    /// after T reuse the last row (neither affects the objective).
    ControlPolicy policy() const {
        return [this](std::ptrdiff_t step, double w) {
            std::ptrdiff_t last = static_cast<std::ptrdiff_t>(rows()) - 1;
            std::size_t i = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(step, 0, last));
            return at(i, node_of(step < 0 ? 0.0 : w));
        };
    }

    bool is_constant() const {
        for (auto v : idx_)
            if (v != idx_.front()) return false;
        return true;
    }

    /// Node count per control index.
    std::vector<std::size_t> counts(std::size_t n_controls) const {
        std::vector<std::size_t> c(n_controls, 0);
        for (auto v : idx_) ++c.at(v);
        return c;
    }

private:
    TimeGrid grid_;
    double x_max_;
    std::size_t n_x_;
    double hx_ = 0.0;
    std::vector<std::size_t> idx_;
};

/// Replays the value-function sweep on `surface` and records the argmax.
/// With a finite control set the selection is exact, so epsilon only has to be >= 0.
inline ControlTable extract_control(const ControlProblem& cp, const ValueSurface& surface, double epsilon = 0.0,
                                    const GridSettings& gs = {}) {
    require(epsilon >= 0.0, Errc::invalid_argument, "epsilon must be >= 0");
    const TimeGrid& g = surface.grid();
    const std::size_t m = g.aligned_steps(cp.theta, "theta");
    const double dt = g.dt();
    ControlTable tb(g, surface.x_max(), surface.n_x());
    const QuadratureRule rule(gs.n_nodes);
    for (std::size_t i = 0; i < g.terminal_index(); ++i) {
        const double t = g.time(i);
        const SurfaceSlice next = surface.y_slice(i + 1, gs.interp, gs.extrap);
        const SurfaceSlice fut = surface.y_slice(i + m, gs.interp, gs.extrap);
        parallel_for(surface.n_x(), [&](std::size_t j) {
            const double x = surface.x(j);
            const double e = quad_condexp(next, x, dt, rule);
            const double v = quad_covariation(next, x, dt, rule);
            const double ay = m == 0 ? e : quad_condexp(fut, x, static_cast<double>(m) * dt, rule);
            tb.at(i, j) = detail::hamiltonian(cp, t, e, v, ay).second;
        });
    }
    return tb;
}

inline DensityCoefficients density_coefficients(const ControlProblem& cp) {
    DensityCoefficients dc;
    dc.alpha = cp.alpha;
    dc.b = cp.b;
    if (cp.sigma_c)
        dc.sigma = [f = cp.sigma_c](double t, const std::vector<double>& u) { return std::vector<double>{f(t, u)}; };
    return dc;
}

/// J(u) = E[X_T Q(T) + int_T^{T+theta} X_{s-theta} Q(s) b(s-theta, u_{s-theta}) ds + int_0^T X_s l(s, u_s) ds]
/// with X the controlled density; left-point sums on the ensemble grid.
inline MeanStderr evaluate_objective(const ControlProblem& cp, const ControlPolicy& ctrl, const PathEnsemble& ens) {
    const TimeGrid& g = ens.grid();
    if (std::abs(g.t_end() - cp.t_end) > 1e-12 || std::abs(g.k_extra() - cp.theta) > 1e-12)
        fail(Errc::span_mismatch, strformat("ensemble spans [0, %g] with T = %g; need T = %g, T + theta = %g",
                                            g.span(), g.t_end(), cp.t_end, cp.t_end + cp.theta));
    require(ens.dim() == 1, Errc::invalid_argument, "the control objective uses a scalar Brownian motion");
    check_control_problem(cp, g);
    const std::size_t lag = g.aligned_steps(cp.theta, "theta");
    DensityTables tb = density_tables(cp.control_set, density_coefficients(cp), g, lag, 1);
    StatePaths sp = simulate_density(tb, ctrl, ens, 0.0);
    const std::size_t n_t = g.terminal_index();
    const double dt = g.dt();
    std::vector<double> lt(n_t * cp.control_set.size());
    for (std::size_t i = 0; i < n_t; ++i)
        for (std::size_t c = 0; c < cp.control_set.size(); ++c)
            lt[i * cp.control_set.size() + c] = detail::call_u(cp.l_c, g.time(i), cp.control_set.points[c]);
    return mean_stderr(ens.n_paths(), [&](std::size_t p) {
        double v = sp.x(p, sp.local(n_t)) * cp.q(cp.t_end, ens.w(p, n_t));
        for (std::size_t i = 0; i < n_t; ++i) {
            std::size_t c = ctrl(static_cast<std::ptrdiff_t>(i), ens.w(p, i));
            v += sp.x(p, sp.local(i)) * lt[i * cp.control_set.size() + c] * dt;
        }
        for (std::size_t i = n_t; i < g.n_steps(); ++i) {
            std::ptrdiff_t sd = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(lag);
            double xd = sp.x(p, sp.local(i) - lag);
            if (xd == 0.0) continue;
            std::size_t cd = ctrl(sd, sd >= 0 ? ens.w(p, static_cast<std::size_t>(sd)) : 0.0);
            v += xd * cp.q(g.time(i), ens.w(p, i)) * tb.bb(sd, cd) * dt;
        }
        return v;
    });
}

}  // namespace absde
