#pragma once

// Euler-Maruyama for the linear delayed SDE
//
//   dX_s = (mu_s X_s + mubar_{s-theta} X_{s-theta}) ds + (X_s sigma_s + X_{s-theta} sigmabar_{s-theta}) . dW_s
//
// and for the controlled density of the control problem, where the delayed
// drift coefficient is b(s - theta, u_{s-theta}) >= 0.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "absde/core.hpp"
#include "absde/model.hpp"
#include "absde/paths.hpp"

namespace absde {

struct SddeCoefficients {
    std::function<double(double)> mu;
    std::function<double(double)> mu_bar;
    /// d-vectors; an empty result is read as zero.
    std::function<std::vector<double>(double)> sigma;
    std::function<std::vector<double>(double)> sigma_bar;
    double theta = 0.0;
    double bound_mu = 1.0;
};

/// States on the local grid start - theta, ..., end; index lag() is `start`.
class StatePaths {
public:
    StatePaths(double start, double dt, std::size_t lag, std::size_t grid_start, std::size_t n_local,
               std::size_t n_paths)
        : start_(start), dt_(dt), lag_(lag), grid_start_(grid_start), n_local_(n_local), n_paths_(n_paths),
          x_(n_local * n_paths, 0.0) {}

    std::size_t n_paths() const { return n_paths_; }
    std::size_t n_local() const { return n_local_; }
    std::size_t lag() const { return lag_; }
    double dt() const { return dt_; }
    double start() const { return start_; }
    double time(std::size_t j) const { return start_ + (static_cast<double>(j) - static_cast<double>(lag_)) * dt_; }

    /// State at local index j (j < lag() is prehistory).
    double x(std::size_t p, std::size_t j) const { return x_[p * n_local_ + j]; }
    double& x(std::size_t p, std::size_t j) { return x_[p * n_local_ + j]; }

    /// Local index of ensemble-grid index i (i >= grid start).
    std::size_t local(std::size_t grid_index) const { return grid_index - grid_start_ + lag_; }
    std::size_t grid_start() const { return grid_start_; }

private:
    double start_;
    double dt_;
    std::size_t lag_;
    std::size_t grid_start_;
    std::size_t n_local_;
    std::size_t n_paths_;
    std::vector<double> x_;
};

namespace detail {

struct SimFrame {
    std::size_t lag;
    std::size_t i0;  // grid index of start
    std::size_t i1;  // grid index of end
};

inline SimFrame frame(const TimeGrid& g, double theta, double start, double end) {
    require(theta >= 0.0, Errc::invalid_argument, "theta must be >= 0");
    require(start <= end, Errc::invalid_argument, "start must not exceed end");
    std::size_t lag = g.aligned_steps(theta, "theta");
    std::size_t i0 = g.aligned_steps(start, "start");
    auto i1 = g.steps_in(end);
    if (end > g.span() + 1e-9 * g.dt() || !i1) {
        if (end > g.span() + 1e-9 * g.dt())
            fail(Errc::ensemble_span_mismatch,
                 strformat("ensemble covers [0, %g] but simulation needs [%g, %g]", g.span(), start, end));
        fail(Errc::misaligned_delay, strformat("end = %g is not a grid point", end));
    }
    return {lag, i0, *i1};
}

inline double signed_time(const TimeGrid& g, std::ptrdiff_t i) {
    return i >= 0 ? g.time(static_cast<std::size_t>(i)) : static_cast<double>(i) * g.dt();
}

inline std::vector<double> as_dvec(const std::function<std::vector<double>(double)>& fn, double t, std::size_t d) {
    if (!fn) return std::vector<double>(d, 0.0);
    auto v = fn(t);
    if (v.empty()) return std::vector<double>(d, 0.0);
    require(v.size() == d, Errc::invalid_argument, "diffusion coefficient has the wrong dimension");
    return v;
}

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double a : v) s += a * a;
    return std::sqrt(s);
}

}  // namespace detail

/// Simulates on [start, end] with prehistory X on [start - theta, start].
inline StatePaths simulate_sdde(const SddeCoefficients& coef, const std::function<double(double)>& prehistory,
                                double start, double end, const PathEnsemble& ens) {
    const TimeGrid& g = ens.grid();
    auto fr = detail::frame(g, coef.theta, start, end);
    const std::size_t d = ens.dim();
    const double dt = g.dt();
    const std::size_t n_local = fr.lag + (fr.i1 - fr.i0) + 1;

    // coefficient tables at local indices (time start - theta + j dt)
    std::vector<double> mu(n_local, 0.0), mub(n_local, 0.0), sg(n_local * d, 0.0), sgb(n_local * d, 0.0);
    for (std::size_t j = 0; j < n_local; ++j) {
        double t = detail::signed_time(g, static_cast<std::ptrdiff_t>(fr.i0 + j) - static_cast<std::ptrdiff_t>(fr.lag));
        mu[j] = coef.mu ? coef.mu(t) : 0.0;
        mub[j] = coef.mu_bar ? coef.mu_bar(t) : 0.0;
        auto s = detail::as_dvec(coef.sigma, t, d);
        auto sb = detail::as_dvec(coef.sigma_bar, t, d);
        std::copy(s.begin(), s.end(), sg.begin() + static_cast<std::ptrdiff_t>(j * d));
        std::copy(sb.begin(), sb.end(), sgb.begin() + static_cast<std::ptrdiff_t>(j * d));
        double worst = std::max({std::abs(mu[j]), std::abs(mub[j]), detail::norm2(s), detail::norm2(sb)});
        require(std::isfinite(worst) && worst <= coef.bound_mu * (1.0 + 1e-12), Errc::invalid_argument,
                strformat("coefficient magnitude %g exceeds the declared bound %g at t = %g", worst, coef.bound_mu, t));
    }

    StatePaths out(start, dt, fr.lag, fr.i0, n_local, ens.n_paths());
    std::vector<double> pre(fr.lag + 1);
    for (std::size_t j = 0; j <= fr.lag; ++j) {
        double t = j == fr.lag ? start : start - static_cast<double>(fr.lag - j) * dt;
        pre[j] = prehistory(t);
        require(std::isfinite(pre[j]), Errc::invalid_argument, "prehistory is not finite");
    }

    parallel_for(ens.n_paths(), [&](std::size_t p) {
        for (std::size_t j = 0; j <= fr.lag; ++j) out.x(p, j) = pre[j];
        for (std::size_t j = fr.lag; j + 1 < n_local; ++j) {
            const std::size_t i = fr.i0 + j - fr.lag;
            const std::size_t jd = j - fr.lag;  // delayed local index
            const double xn = out.x(p, j), xd = out.x(p, jd);
            double drift = mu[j] * xn + mub[jd] * xd;
            double diff = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                double dw = ens.w(p, i + 1, k) - ens.w(p, i, k);
                diff += (xn * sg[j * d + k] + xd * sgb[jd * d + k]) * dw;
            }
            out.x(p, j + 1) = xn + drift * dt + diff;
        }
    });
    return out;
}

/// X = 1 at `start`, 0 before.
inline std::function<double(double)> unit_prehistory(double start) {
    return [start](double s) { return s >= start - 1e-12 ? 1.0 : 0.0; };
}

// ---------------------------------------------------------------------------
// Controlled density
// ---------------------------------------------------------------------------

/// A finite subset of the control box; each point is a k-vector.
struct ControlSet {
    std::vector<std::vector<double>> points;
    std::size_t size() const { return points.size(); }
};

/// Feedback control as an index into a ControlSet, given the ensemble-grid
/// step (negative steps are prehistory) and the Brownian state there.
using ControlPolicy = std::function<std::size_t(std::ptrdiff_t step, double w)>;

inline ControlPolicy constant_policy(std::size_t index) {
    return [index](std::ptrdiff_t, double) { return index; };
}

struct DensityCoefficients {
    std::function<double(double t, const std::vector<double>& u)> alpha;
    std::function<double(double t, const std::vector<double>& u)> b;
    std::function<std::vector<double>(double t, const std::vector<double>& u)> sigma;
};

/// Coefficient tables over ensemble-grid steps -lag .. n_steps for every control.
struct DensityTables {
    std::size_t lag = 0;
    std::size_t n_controls = 0;
    std::size_t dim = 1;
    std::vector<double> alpha, b, sigma;  // [(step + lag) * n_controls + c] (sigma: * dim + k)

    std::size_t row(std::ptrdiff_t step) const { return static_cast<std::size_t>(step + static_cast<std::ptrdiff_t>(lag)); }
    double a(std::ptrdiff_t step, std::size_t c) const { return alpha[row(step) * n_controls + c]; }
    double bb(std::ptrdiff_t step, std::size_t c) const { return b[row(step) * n_controls + c]; }
    double s(std::ptrdiff_t step, std::size_t c, std::size_t k) const {
        return sigma[(row(step) * n_controls + c) * dim + k];
    }
};

inline DensityTables density_tables(const ControlSet& set, const DensityCoefficients& coef, const TimeGrid& g,
                                    std::size_t lag, std::size_t dim) {
    require(set.size() >= 1, Errc::invalid_argument, "control set is empty");
    DensityTables tb;
    tb.lag = lag;
    tb.n_controls = set.size();
    tb.dim = dim;
    const std::size_t rows = lag + g.n_points();
    tb.alpha.assign(rows * set.size(), 0.0);
    tb.b.assign(rows * set.size(), 0.0);
    tb.sigma.assign(rows * set.size() * dim, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double t = detail::signed_time(g, static_cast<std::ptrdiff_t>(r) - static_cast<std::ptrdiff_t>(lag));
        for (std::size_t c = 0; c < set.size(); ++c) {
            const auto& u = set.points[c];
            tb.alpha[r * set.size() + c] = coef.alpha ? coef.alpha(t, u) : 0.0;
            double bv = coef.b ? coef.b(t, u) : 0.0;
            if (bv < 0.0) fail(Errc::negative_b, strformat("b(%g, u) = %g < 0 for control %zu", t, bv, c));
            tb.b[r * set.size() + c] = bv;
            if (coef.sigma) {
                auto s = coef.sigma(t, u);
                if (!s.empty()) {
                    require(s.size() == dim, Errc::invalid_argument, "sigma has the wrong dimension");
                    for (std::size_t k = 0; k < dim; ++k) tb.sigma[(r * set.size() + c) * dim + k] = s[k];
                }
            }
        }
    }
    return tb;
}

/// Controlled density on [t0, end of ensemble]: X_{t0} = 1, zero before.
inline StatePaths simulate_density(const DensityTables& tb, const ControlPolicy& ctrl, const PathEnsemble& ens,
                                   double t0) {
    const TimeGrid& g = ens.grid();
    const double theta = static_cast<double>(tb.lag) * g.dt();
    auto fr = detail::frame(g, theta, t0, g.span());
    const std::size_t d = ens.dim();
    require(tb.dim == d, Errc::invalid_argument, "tables and ensemble differ in dimension");
    const double dt = g.dt();
    const std::size_t n_local = fr.lag + (fr.i1 - fr.i0) + 1;
    StatePaths out(t0, dt, fr.lag, fr.i0, n_local, ens.n_paths());
    const auto lag = static_cast<std::ptrdiff_t>(fr.lag);

    parallel_for(ens.n_paths(), [&](std::size_t p) {
        out.x(p, fr.lag) = 1.0;
        for (std::size_t j = fr.lag; j + 1 < n_local; ++j) {
            const std::size_t i = fr.i0 + j - fr.lag;
            const auto si = static_cast<std::ptrdiff_t>(i);
            const std::size_t jd = j - fr.lag;
            const double xn = out.x(p, j), xd = out.x(p, jd);
            std::size_t c = ctrl(si, ens.w(p, i));
            std::ptrdiff_t sd = si - lag;
            std::size_t cd = ctrl(sd, sd >= 0 ? ens.w(p, static_cast<std::size_t>(sd)) : 0.0);
            double drift = tb.a(si, c) * xn + tb.bb(sd, cd) * xd;
            double diff = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                double dw = ens.w(p, i + 1, k) - ens.w(p, i, k);
                diff += xn * tb.s(si, c, k) * dw;
            }
            out.x(p, j + 1) = xn + drift * dt + diff;
        }
    });
    return out;
}

inline StatePaths simulate_density(const ControlSet& set, const ControlPolicy& ctrl, const DensityCoefficients& coef,
                                   double theta, const PathEnsemble& ens, double t0) {
    auto lag = ens.grid().aligned_steps(theta, "theta");
    return simulate_density(density_tables(set, coef, ens.grid(), lag, ens.dim()), ctrl, ens, t0);
}

/// CSV of per-time statistics: t, mean, stderr and the requested quantiles.
inline void write_path_stats(const StatePaths& sp, const std::string& path,
                             const std::vector<double>& quantiles = {0.05, 0.5, 0.95}) {
    std::ofstream os(path);
    if (!os) fail(Errc::io_error, "cannot open " + path);
    os << "t,mean,stderr";
    for (double q : quantiles) os << ",q" << strformat("%g", q);
    os << "\n";
    std::vector<double> col(sp.n_paths());
    for (std::size_t j = 0; j < sp.n_local(); ++j) {
        auto ms = mean_stderr(sp.n_paths(), [&](std::size_t p) { return sp.x(p, j); });
        for (std::size_t p = 0; p < sp.n_paths(); ++p) col[p] = sp.x(p, j);
        std::sort(col.begin(), col.end());
        os << fmt_double(sp.time(j)) << "," << fmt_double(ms.mean) << "," << fmt_double(ms.stderr_);
        for (double q : quantiles) {
            auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(col.size() - 1)));
            os << "," << fmt_double(col[k]);
        }
        os << "\n";
    }
}

}  // namespace absde
