#pragma once

// Backward solvers for Markovian (anticipated) BSDEs driven by W.
//
// Grid: Y_t = u(t, W_t), Z_t = v(t, W_t) on uniform spatial nodes; each step
// takes Gaussian conditional expectations of the next row (and, for the
// anticipated terms, of the already-computed row at t + delta).
// Monte Carlo: the same explicit recursion with regression in place of
// quadrature.

#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "absde/condexp.hpp"
#include "absde/core.hpp"
#include "absde/model.hpp"
#include "absde/paths.hpp"

namespace absde {

/// (t, x) -> (u, v) on the time grid times uniform nodes in [-x_max, x_max].
class ValueSurface {
public:
    ValueSurface(TimeGrid grid, double x_max, std::size_t n_x)
        : grid_(grid), x_max_(x_max), n_x_(n_x), y_(grid.n_points() * n_x, 0.0), z_(grid.n_points() * n_x, 0.0) {
        require(x_max > 0.0 && std::isfinite(x_max), Errc::invalid_argument, "x_max must be positive");
        require(n_x >= 4, Errc::invalid_argument, "n_x must be >= 4");
        hx_ = 2.0 * x_max / static_cast<double>(n_x - 1);
    }

    const TimeGrid& grid() const { return grid_; }
    double x_max() const { return x_max_; }
    std::size_t n_x() const { return n_x_; }
    double hx() const { return hx_; }
    double x(std::size_t j) const { return j == n_x_ - 1 ? x_max_ : -x_max_ + static_cast<double>(j) * hx_; }

    double& y(std::size_t i, std::size_t j) { return y_[i * n_x_ + j]; }
    double& z(std::size_t i, std::size_t j) { return z_[i * n_x_ + j]; }
    double y(std::size_t i, std::size_t j) const { return y_[i * n_x_ + j]; }
    double z(std::size_t i, std::size_t j) const { return z_[i * n_x_ + j]; }

    std::span<const double> y_row(std::size_t i) const { return {y_.data() + i * n_x_, n_x_}; }
    std::span<const double> z_row(std::size_t i) const { return {z_.data() + i * n_x_, n_x_}; }

    SurfaceSlice y_slice(std::size_t i, Interp interp = Interp::cubic, Extrapolation ex = Extrapolation::linear) const {
        return SurfaceSlice(-x_max_, hx_, y_row(i), interp, ex);
    }
    SurfaceSlice z_slice(std::size_t i, Interp interp = Interp::cubic, Extrapolation ex = Extrapolation::linear) const {
        return SurfaceSlice(-x_max_, hx_, z_row(i), interp, ex);
    }

    double y_at(std::size_t i, double x) const { return y_slice(i)(x); }
    double z_at(std::size_t i, double x) const { return z_slice(i)(x); }

    /// Node nearest to x (clamped).
    std::size_t node_of(double x) const {
        double u = std::round((x + x_max_) / hx_);
        if (u < 0.0) return 0;
        return std::min(n_x_ - 1, static_cast<std::size_t>(u));
    }

    bool same_layout(const ValueSurface& o) const { return grid_ == o.grid_ && x_max_ == o.x_max_ && n_x_ == o.n_x_; }

    const std::vector<double>& y_values() const { return y_; }
    const std::vector<double>& z_values() const { return z_; }

    /// Rows t,x,y,z.
    void write_csv(std::ostream& os) const {
        os << "t,x,y,z\n";
        for (std::size_t i = 0; i < grid_.n_points(); ++i)
            for (std::size_t j = 0; j < n_x_; ++j)
                os << fmt_double(grid_.time(i)) << "," << fmt_double(x(j)) << "," << fmt_double(y(i, j)) << ","
                   << fmt_double(z(i, j)) << "\n";
    }

    void write_csv(const std::string& path) const {
        std::ofstream os(path);
        if (!os) fail(Errc::io_error, "cannot open " + path);
        write_csv(os);
    }

private:
    TimeGrid grid_;
    double x_max_;
    std::size_t n_x_;
    double hx_ = 0.0;
    std::vector<double> y_;
    std::vector<double> z_;
};

struct GridSettings {
    std::size_t n_nodes = 16;
    /// 0 selects 6 sqrt(T + K).
    double x_max = 0.0;
    std::size_t n_x = 401;
    Interp interp = Interp::cubic;
    Extrapolation extrap = Extrapolation::linear;
    AdaptiveRule adaptive{};

    double resolved_x_max(const TimeGrid& g) const { return x_max > 0.0 ? x_max : 6.0 * std::sqrt(g.span()); }
};

/// Everything one backward grid sweep needs, independent of where it came from.
struct SweepProblem {
    explicit SweepProblem(TimeGrid g) : grid(g) {}

    TimeGrid grid;
    Generator::Fn f;
    std::function<double(double t, double x)> band_y;
    std::function<double(double t, double x)> band_z;
    /// Anticipation in steps at grid indices 0..n_T; empty means none.
    std::vector<std::size_t> y_shift;
    std::vector<std::size_t> z_shift;
    std::function<double(double)> g_y;
    bool g_y_smooth = true;
    std::function<double(double, double)> g_z;
    bool g_z_smooth = true;
    bool needs_a_z = true;
    double lipschitz_c = 1.0;
};

/// Backward sweep. With `source`, anticipated terms read that surface (its band
/// included) instead of the one being built.
inline ValueSurface sweep_grid(const SweepProblem& pb, const GridSettings& gs, const ValueSurface* source = nullptr) {
    const TimeGrid& g = pb.grid;
    const double dt = g.dt();
    if (!(dt * pb.lipschitz_c < 1.0))
        fail(Errc::stability_guard, strformat("dt * C = %g must be < 1; increase n_steps", dt * pb.lipschitz_c));
    ValueSurface s(g, gs.resolved_x_max(g), gs.n_x);
    if (source)
        require(source->same_layout(s), Errc::span_mismatch, "anticipation source has a different grid layout");
    const std::size_t n_t = g.terminal_index();
    const std::size_t nx = gs.n_x;

    for (std::size_t i = n_t; i < g.n_points(); ++i) {
        double t = g.time(i);
        for (std::size_t j = 0; j < nx; ++j) {
            s.y(i, j) = pb.band_y(t, s.x(j));
            s.z(i, j) = pb.band_z ? pb.band_z(t, s.x(j)) : 0.0;
            require(std::isfinite(s.y(i, j)) && std::isfinite(s.z(i, j)), Errc::invalid_argument,
                    strformat("terminal data not finite at t = %g, x = %g", t, s.x(j)));
        }
    }

    const QuadratureRule rule(gs.n_nodes);
    const ValueSurface& src = source ? *source : s;
    auto ty = [&](double v) { return pb.g_y ? pb.g_y(v) : v; };
    auto tz = [&](double fut, double now) { return pb.g_z ? pb.g_z(fut, now) : fut; };

    for (std::size_t i = n_t; i-- > 0;) {
        const double t = g.time(i);
        const std::size_t my = i + (pb.y_shift.empty() ? 0 : pb.y_shift[i]);
        const std::size_t mz = i + (pb.z_shift.empty() ? 0 : pb.z_shift[i]);
        const double hy = static_cast<double>(my - i) * dt;
        const double hz = static_cast<double>(mz - i) * dt;
        const SurfaceSlice next = s.y_slice(i + 1, gs.interp, gs.extrap);
        const SurfaceSlice fy = src.y_slice(my, gs.interp, gs.extrap);
        const SurfaceSlice fz = src.z_slice(mz, gs.interp, gs.extrap);

        parallel_for(nx, [&](std::size_t j) {
            const double x = s.x(j);
            const double e = quad_condexp(next, x, dt, rule);
            const double v = quad_covariation(next, x, dt, rule);
            double a_y;
            if (my == i) {
                a_y = ty(source ? src.y(i, j) : e);
            } else {
                auto fn = [&](double w) { return ty(fy(w)); };
                a_y = pb.g_y_smooth ? quad_condexp(fn, x, hy, rule) : quad_condexp(fn, x, hy, gs.adaptive);
            }
            double a_z = 0.0;
            if (pb.needs_a_z) {
                if (mz == i) {
                    a_z = tz(source ? src.z(i, j) : v, v);
                } else {
                    auto fn = [&](double w) { return tz(fz(w), v); };
                    a_z = pb.g_z_smooth ? quad_condexp(fn, x, hz, rule) : quad_condexp(fn, x, hz, gs.adaptive);
                }
            }
            const double drift = pb.f(t, e, v, a_y, a_z);
            if (!std::isfinite(drift))
                fail(Errc::non_finite_generator, strformat("generator not finite at t = %g, x = %g", t, x));
            s.y(i, j) = e + drift * dt;
            s.z(i, j) = v;
        });
    }
    return s;
}

/// Standard BSDE -dY = g(t, Y, Z) dt - Z dW, Y_T = terminal(W_T) on [0, T] of
/// `grid` (a grid with K > 0 simply carries the terminal value on the band).
/// The Z row at T and on the band is 0: it is not part of the solution.
inline ValueSurface solve_bsde_grid(const std::function<double(double t, double y, double z)>& g,
                                    const std::function<double(double x)>& terminal, const TimeGrid& grid,
                                    const GridSettings& gs = {}, double lipschitz_c = 1.0) {
    require(static_cast<bool>(g) && static_cast<bool>(terminal), Errc::invalid_argument, "callbacks missing");
    SweepProblem pb(grid);
    pb.f = [g](double t, double y, double z, double, double) { return g(t, y, z); };
    pb.band_y = [terminal](double, double x) { return terminal(x); };
    pb.needs_a_z = false;
    pb.lipschitz_c = lipschitz_c;
    return sweep_grid(pb, gs);
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

/// One Regressor per time step, built on first use from the ensemble states.
class RegressorCache {
public:
    RegressorCache(const PathEnsemble& ens, RegressionBasis basis)
        : ens_(&ens), basis_(basis), regs_(ens.grid().n_points()) {}

    const Regressor& at(std::size_t i) {
        require(i < regs_.size(), Errc::index_out_of_range, "regressor index out of range");
        if (!regs_[i]) regs_[i] = std::make_unique<Regressor>(ens_->states(i), basis_);
        return *regs_[i];
    }

    bool any_rank_reduced() const {
        for (const auto& r : regs_)
            if (r && r->rank_reduced()) return true;
        return false;
    }

    const PathEnsemble& ensemble() const { return *ens_; }

private:
    const PathEnsemble* ens_;
    RegressionBasis basis_;
    std::vector<std::unique_ptr<Regressor>> regs_;
};

/// Per-path (Y, Z) on grid rows 0..n_rows-1, stored time-major.
struct PathSolution {
    std::size_t n_paths = 0;
    std::size_t n_rows = 0;
    std::vector<double> y;
    std::vector<double> z;

    PathSolution() = default;
    PathSolution(std::size_t paths, std::size_t rows)
        : n_paths(paths), n_rows(rows), y(paths * rows, 0.0), z(paths * rows, 0.0) {}

    double& Y(std::size_t i, std::size_t p) { return y[i * n_paths + p]; }
    double& Z(std::size_t i, std::size_t p) { return z[i * n_paths + p]; }
    double Y(std::size_t i, std::size_t p) const { return y[i * n_paths + p]; }
    double Z(std::size_t i, std::size_t p) const { return z[i * n_paths + p]; }
    std::span<const double> y_row(std::size_t i) const { return {y.data() + i * n_paths, n_paths}; }
    std::span<const double> z_row(std::size_t i) const { return {z.data() + i * n_paths, n_paths}; }
};

/// Explicit regression recursion from row n_t (already filled in `sol`) down to 0:
///   Z_i = E[Y_{i+1} dW_i / dt | W_i],  E_i = E[Y_{i+1} | W_i],  Y_i = E_i + drift(i, p, E_i, Z_i) dt.
/// Returns a standard error for Y_0: that of the plain estimator
/// mean_p (Y_T + sum_i drift_i dt) along the paths.
template <typename Drift>
double mc_backward(RegressorCache& regs, std::size_t n_t, PathSolution& sol, Drift&& drift) {
    const PathEnsemble& ens = regs.ensemble();
    const std::size_t n = ens.n_paths();
    const double dt = ens.grid().dt();
    std::vector<double> target(n), fitted_e(n), fitted_z(n), plain(sol.y_row(n_t).begin(), sol.y_row(n_t).end());
    for (std::size_t i = n_t; i-- > 0;) {
        const Regressor& reg = regs.at(i);
        auto next = sol.y_row(i + 1);
        parallel_for(n, [&](std::size_t p) {
            double dw = ens.w(p, i + 1) - ens.w(p, i);
            target[p] = next[p] * dw / dt;
        });
        reg.fitted(target, fitted_z);
        reg.fitted(next, fitted_e);
        parallel_for(n, [&](std::size_t p) {
            double d = drift(i, p, fitted_e[p], fitted_z[p]);
            if (!std::isfinite(d))
                fail(Errc::non_finite_generator, strformat("generator not finite at step %zu", i));
            sol.Y(i, p) = fitted_e[p] + d * dt;
            sol.Z(i, p) = fitted_z[p];
            plain[p] += d * dt;
        });
    }
    if (n < 2) return 0.0;
    return mean_stderr(n, [&](std::size_t p) { return plain[p]; }).stderr_;
}

struct BsdeMcResult {
    PathSolution sol;
    double y0 = 0.0;
    double y0_stderr = 0.0;
    bool rank_reduced = false;
};

/// Monte Carlo solve of -dY = g(t, Y, Z) dt - Z dW on [0, T] with per-path
/// terminal values Y_T.
inline BsdeMcResult solve_bsde_mc(const std::function<double(double t, double y, double z)>& g,
                                  std::span<const double> terminal_values, const PathEnsemble& ens,
                                  RegressionBasis basis = {}) {
    const std::size_t n = ens.n_paths();
    require(terminal_values.size() == n, Errc::invalid_argument, "one terminal value per path required");
    const TimeGrid& grid = ens.grid();
    const std::size_t n_t = grid.terminal_index();
    RegressorCache regs(ens, basis);
    BsdeMcResult out;
    out.sol = PathSolution(n, n_t + 1);
    for (std::size_t p = 0; p < n; ++p) out.sol.Y(n_t, p) = terminal_values[p];
    out.y0_stderr = mc_backward(regs, n_t, out.sol, [&](std::size_t i, std::size_t, double e, double z) {
        return g(grid.time(i), e, z);
    });
    out.y0 = out.sol.Y(0, 0);
    out.rank_reduced = regs.any_rank_reduced();
    return out;
}

}  // namespace absde
