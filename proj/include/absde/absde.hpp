#pragma once

// Solvers for the anticipated equation itself: the grid sweep on a
// ProblemSpec, the Monte Carlo Picard iteration with its weighted-norm trace,
// the monotone chain used by the comparison argument, and the delay
// sensitivity gap.

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "absde/bsde.hpp"
#include "absde/condexp.hpp"
#include "absde/core.hpp"
#include "absde/model.hpp"
#include "absde/paths.hpp"
#include "absde/random.hpp"

namespace absde {

inline SweepProblem sweep_problem(const TimeGrid& grid, const DelayFunction& delta, const DelayFunction& zeta,
                                  const Generator& gen, const TerminalData& term) {
    if (gen.g_z_joint && gen.uses_a_z && delta.shifts() != zeta.shifts())
        fail(Errc::joint_transform_delay_mismatch, "non-separable g_z requires delta == zeta");
    SweepProblem pb(grid);
    pb.f = gen.f;
    pb.band_y = term.xi;
    pb.band_z = term.eta;
    pb.y_shift = delta.shifts();
    pb.z_shift = zeta.shifts();
    pb.g_y = gen.g_y;
    pb.g_y_smooth = gen.g_y_smooth;
    pb.g_z = gen.g_z;
    pb.g_z_smooth = gen.g_z_smooth;
    pb.needs_a_z = gen.uses_a_z;
    pb.lipschitz_c = gen.lipschitz_c;
    return pb;
}

inline SweepProblem sweep_problem(const ProblemSpec& spec) {
    return sweep_problem(spec.grid(), spec.delta(), spec.zeta(), spec.gen(), spec.terminal());
}

/// Grid solution on [0, T+K]; the band carries xi, eta exactly.
inline ValueSurface solve_absde_grid(const ProblemSpec& spec, const GridSettings& gs = {}) {
    return sweep_grid(sweep_problem(spec), gs);
}

// ---------------------------------------------------------------------------
// Picard iteration
// ---------------------------------------------------------------------------

inline double contraction_beta(double c, double l) { return 12.0 * c * c * (2.0 * l + 1.0) + 2.0; }

/// sqrt(mean_p sum_i (|dY|^2 + |dZ|^2) e^{beta t_i} dt) over all rows.
inline double beta_norm_diff(const PathSolution& a, const PathSolution* b, const TimeGrid& grid, double beta) {
    require(!b || (a.n_paths == b->n_paths && a.n_rows == b->n_rows), Errc::invalid_argument,
            "path solutions differ in shape");
    const std::size_t n = a.n_paths;
    const double t_max = grid.time(a.n_rows - 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.n_rows; ++i) {
        double row = deterministic_sum(n, [&](std::size_t p) {
            double dy = a.Y(i, p) - (b ? b->Y(i, p) : 0.0);
            double dz = a.Z(i, p) - (b ? b->Z(i, p) : 0.0);
            return dy * dy + dz * dz;
        });
        acc += row * std::exp(beta * (grid.time(i) - t_max));
    }
    double v = std::exp(0.5 * beta * t_max) * std::sqrt(acc * grid.dt() / static_cast<double>(n));
    require(std::isfinite(v), Errc::invalid_argument, "beta-norm overflows; beta * (T + K) is too large");
    return v;
}

struct PicardSettings {
    /// <= 0 selects 1e-3 * (1 + norm of the first iterate). The same rule is
    /// applied to the unweighted norm, so early rows must settle too.
    double tol = 0.0;
    std::size_t max_iter = 25;
};

struct SolveReport {
    PathSolution sol;
    std::size_t iterations = 0;
    double beta_used = 0.0;
    /// delta_norms[k] = ||iterate_{k+1} - iterate_k||_beta, iterate_0 the initial guess.
    std::vector<double> delta_norms;
    /// ratio_trace[k] = delta_norms[k + 1] / delta_norms[k].
    std::vector<double> ratio_trace;
    double first_norm = 0.0;
    double tolerance = 0.0;
    /// Same quantities at beta = 0.
    double plain_tolerance = 0.0;
    double final_plain_delta = std::numeric_limits<double>::infinity();
    bool converged = false;
    double final_delta = std::numeric_limits<double>::infinity();
    double y0 = 0.0;
    double y0_stderr = 0.0;
    bool rank_reduced = false;

    /// Rows iteration,beta_norm,ratio (ratio empty on the first row).
    void write_trace(std::ostream& os) const {
        os << "iteration,beta_norm,ratio\n";
        for (std::size_t k = 0; k < delta_norms.size(); ++k) {
            os << k + 1 << "," << fmt_double(delta_norms[k]) << ",";
            if (k > 0) os << fmt_double(ratio_trace[k - 1]);
            os << "\n";
        }
    }

    void write_trace(const std::string& path) const {
        std::ofstream os(path);
        if (!os) fail(Errc::io_error, "cannot open " + path);
        write_trace(os);
    }

    void require_converged() const {
        if (!converged)
            fail(Errc::not_converged,
                 strformat("no convergence after %zu iterations (last difference %g, tol %g)", iterations,
                           final_delta, tolerance));
    }
};

/// Iterates (y, z) -> (Y, Z): the anticipated arguments of f are regressions of
/// g_Y(y_{t+delta}) and g_Z(z_{t+zeta}; z_t) on W_t, and (Y, Z) solves the
/// resulting standard equation by the regression recursion. Returns with
/// converged = false when max_iter is reached.
inline SolveReport solve_absde_picard(const ProblemSpec& spec, const PathEnsemble& ens, RegressionBasis basis = {},
                                      PicardSettings ps = {}) {
    const TimeGrid& grid = spec.grid();
    require(ens.grid() == grid, Errc::span_mismatch, "ensemble grid differs from the problem grid");
    require(ps.max_iter >= 1, Errc::invalid_argument, "max_iter must be >= 1");
    const Generator& gen = spec.gen();
    const std::size_t n = ens.n_paths();
    const std::size_t n_t = grid.terminal_index();
    const std::size_t rows = grid.n_points();
    const auto& ys = spec.delta().shifts();
    const auto& zs = spec.zeta().shifts();

    SolveReport rep;
    rep.beta_used = contraction_beta(gen.lipschitz_c, spec.l_const());

    PathSolution cur(n, rows);
    for (std::size_t i = n_t; i < rows; ++i) {
        double t = grid.time(i);
        parallel_for(n, [&](std::size_t p) {
            double w = ens.w(p, i);
            cur.Y(i, p) = spec.terminal().xi(t, w);
            cur.Z(i, p) = spec.terminal().eta(t, w);
        });
    }
    for (std::size_t i = 0; i < n_t; ++i)
        for (std::size_t p = 0; p < n; ++p) cur.Y(i, p) = cur.Y(n_t, p);

    RegressorCache regs(ens, basis);
    std::vector<double> ay(n_t * n, 0.0), az(n_t * n, 0.0), target(n);
    for (std::size_t k = 0; k < ps.max_iter; ++k) {
        for (std::size_t i = 0; i < n_t; ++i) {
            const Regressor& reg = regs.at(i);
            std::span<double> ay_row(ay.data() + i * n, n), az_row(az.data() + i * n, n);
            const std::size_t my = i + ys[i];
            parallel_for(n, [&](std::size_t p) { target[p] = gen.transform_y(cur.Y(my, p)); });
            reg.fitted(target, ay_row);
            if (gen.uses_a_z) {
                const std::size_t mz = i + zs[i];
                parallel_for(n, [&](std::size_t p) { target[p] = gen.transform_z(cur.Z(mz, p), cur.Z(i, p)); });
                reg.fitted(target, az_row);
            }
        }
        PathSolution next = cur;
        double se = mc_backward(regs, n_t, next, [&](std::size_t i, std::size_t p, double e, double z) {
            return gen.f(grid.time(i), e, z, ay[i * n + p], az[i * n + p]);
        });
        double d = beta_norm_diff(next, &cur, grid, rep.beta_used);
        double d0 = beta_norm_diff(next, &cur, grid, 0.0);
        if (k == 0) {
            rep.first_norm = beta_norm_diff(next, nullptr, grid, rep.beta_used);
            rep.tolerance = ps.tol > 0.0 ? ps.tol : 1e-3 * (1.0 + rep.first_norm);
            rep.plain_tolerance = ps.tol > 0.0 ? ps.tol : 1e-3 * (1.0 + beta_norm_diff(next, nullptr, grid, 0.0));
        } else {
            double prev = rep.delta_norms.back();
            rep.ratio_trace.push_back(prev > 0.0 ? d / prev : 0.0);
        }
        rep.delta_norms.push_back(d);
        rep.iterations = k + 1;
        rep.final_delta = d;
        rep.final_plain_delta = d0;
        rep.y0_stderr = se;
        cur = std::move(next);
        if (k > 0 && d <= rep.tolerance && d0 <= rep.plain_tolerance) {
            rep.converged = true;
            break;
        }
    }
    rep.y0 = cur.Y(0, 0);
    rep.sol = std::move(cur);
    rep.rank_reduced = regs.any_rank_reduced();
    return rep;
}

// ---------------------------------------------------------------------------
// Monotone chain
// ---------------------------------------------------------------------------

struct MonotoneChain {
    /// Solution under (f1, xi1).
    ValueSurface first;
    /// Each term solves the standard equation under (f2, xi2) with the
    /// anticipated argument read from the previous term (the first reads `first`).
    std::vector<ValueSurface> chain;
};

inline MonotoneChain monotone_iteration(const Generator& f1, const Generator& f2, const TerminalData& xi1,
                                        const TerminalData& xi2, const ProblemSpec& tmpl, std::size_t n_terms,
                                        const GridSettings& gs = {}, std::uint64_t probe_seed = 1) {
    const TimeGrid& grid = tmpl.grid();
    if (!f2.increasing_in_a_y)
        fail(Errc::monotonicity_precondition_failed, "f2 is not declared increasing in the anticipated Y argument");
    if (f1.uses_a_z || f2.uses_a_z)
        fail(Errc::monotonicity_precondition_failed, "generators may not depend on anticipated Z");
    require(n_terms >= 1, Errc::invalid_argument, "n_terms must be >= 1");

    SeededUniform rng(probe_seed, 0x5eu);
    for (int k = 0; k < 2000; ++k) {
        double t = rng.uniform(0.0, grid.t_end());
        double y = rng.uniform(-3, 3), z = rng.uniform(-3, 3), th = rng.uniform(-3, 3);
        double a = f1.f(t, y, z, f1.transform_y(th), 0.0);
        double b = f2.f(t, y, z, f2.transform_y(th), 0.0);
        if (!(a >= b - 1e-12 * (1.0 + std::abs(b))))
            fail(Errc::monotonicity_precondition_failed,
                 strformat("f1 < f2 at probe (t=%g, y=%g, z=%g, theta=%g)", t, y, z, th));
    }
    const double xm = gs.resolved_x_max(grid);
    ValueSurface layout(grid, xm, gs.n_x);
    for (std::size_t i = grid.terminal_index(); i < grid.n_points(); ++i)
        for (std::size_t j = 0; j < gs.n_x; ++j) {
            double t = grid.time(i), x = layout.x(j);
            if (xi1.xi(t, x) < xi2.xi(t, x))
                fail(Errc::monotonicity_precondition_failed, strformat("xi1 < xi2 at (t=%g, x=%g)", t, x));
        }

    MonotoneChain out{sweep_grid(sweep_problem(grid, tmpl.delta(), tmpl.zeta(), f1, xi1), gs), {}};
    SweepProblem pb2 = sweep_problem(grid, tmpl.delta(), tmpl.zeta(), f2, xi2);
    out.chain.reserve(n_terms);
    for (std::size_t k = 0; k < n_terms; ++k) {
        const ValueSurface& src = k == 0 ? out.first : out.chain.back();
        out.chain.push_back(sweep_grid(pb2, gs, &src));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Delay sensitivity
// ---------------------------------------------------------------------------

struct DelayGap {
    /// sup over t in [0, T) and |x| <= x_window of |u1 - u2|^2.
    double gap2 = 0.0;
    /// Bracket at the maximising node.
    double bracket_at_gap = 0.0;
    /// sup of the bracket over the same window.
    double bracket = 0.0;
    /// sup of gap^2 / bracket over the window (0 when both vanish).
    double ratio = 0.0;
    double t_at_gap = 0.0;
    double x_at_gap = 0.0;
};

/// Solves the template's equation under delta1 and delta2 and compares them
/// against int_t^T (delta2 - delta1) ds * E[|xi_T|^2 + int_T^{T+K} |xi|^2 ds + int_t^T |f(s,0,0,0)|^2 ds | W_t = x].
inline DelayGap delay_sensitivity(const ProblemSpec& tmpl, const DelayFunction& delta1, const DelayFunction& delta2,
                                  const GridSettings& gs = {}, double x_window = 1.0) {
    const TimeGrid& grid = tmpl.grid();
    const Generator& gen = tmpl.gen();
    require(!gen.uses_a_z, Errc::invalid_argument, "delay sensitivity covers generators without anticipated Z");
    const std::size_t n_t = grid.terminal_index();
    const auto& d1 = delta1.values();
    const auto& d2 = delta2.values();
    require(d1.size() == n_t + 1 && d2.size() == n_t + 1, Errc::invalid_argument, "delays not on this grid");
    for (std::size_t i = 0; i <= n_t; ++i)
        if (d1[i] > d2[i] + 1e-12)
            fail(Errc::delay_order_violated, strformat("delta1 > delta2 at t = %g", grid.time(i)));

    ProblemSpec s1(grid, delta1, tmpl.zeta(), gen, tmpl.terminal());
    ProblemSpec s2(grid, delta2, tmpl.zeta(), gen, tmpl.terminal());
    ValueSurface u1 = solve_absde_grid(s1, gs);
    ValueSurface u2 = solve_absde_grid(s2, gs);

    const double dt = grid.dt();
    const QuadratureRule rule(gs.n_nodes);
    // int_t^T |f(s,0,0,0,0)|^2 ds and int_t^T (delta2 - delta1) ds by trapezoid rows, from the top.
    std::vector<double> f_int(n_t + 1, 0.0), d_int(n_t + 1, 0.0);
    for (std::size_t i = n_t; i-- > 0;) {
        double fa = gen.f(grid.time(i), 0, 0, 0, 0), fb = gen.f(grid.time(i + 1), 0, 0, 0, 0);
        f_int[i] = f_int[i + 1] + 0.5 * (fa * fa + fb * fb) * dt;
        d_int[i] = d_int[i + 1] + 0.5 * ((d2[i] - d1[i]) + (d2[i + 1] - d1[i + 1])) * dt;
    }
    const auto& xi = tmpl.terminal().xi;

    DelayGap out;
    for (std::size_t i = 0; i < n_t; ++i) {
        const double t = grid.time(i);
        for (std::size_t j = 0; j < u1.n_x(); ++j) {
            const double x = u1.x(j);
            if (std::abs(x) > x_window) continue;
            double diff = u1.y(i, j) - u2.y(i, j);
            double g2 = diff * diff;
            auto sq = [&](std::size_t r) {
                double tr = grid.time(r);
                return quad_condexp([&](double w) { double v = xi(tr, w); return v * v; }, x, tr - t, rule);
            };
            double band = 0.0;
            for (std::size_t r = n_t; r < grid.n_steps(); ++r) band += 0.5 * (sq(r) + sq(r + 1)) * dt;
            double br = d_int[i] * (sq(n_t) + band + f_int[i]);
            out.bracket = std::max(out.bracket, br);
            if (g2 > out.gap2) {
                out.gap2 = g2;
                out.bracket_at_gap = br;
                out.t_at_gap = t;
                out.x_at_gap = x;
            }
            if (br > 0.0) out.ratio = std::max(out.ratio, g2 / br);
            else if (g2 > 0.0) out.ratio = std::numeric_limits<double>::infinity();
        }
    }
    return out;
}

}  // namespace absde
