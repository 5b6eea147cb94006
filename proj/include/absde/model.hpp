#pragma once

// Problem-instance types for anticipated BSDEs
//
//   -dY_t = f(t, Y_t, Z_t, E^{F_t}[g_Y(Y_{t+delta(t)})], E^{F_t}[g_Z(Z_{t+zeta(t)}; Z_t)]) dt - Z_t dW_t
//   Y = xi, Z = eta on [T, T+K]
//
// together with the delay conditions (horizon bound and change-of-variable
// constant L) and a probe-based Lipschitz sanity check.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "absde/core.hpp"
#include "absde/random.hpp"

namespace absde {

/// Uniform grid on [0, T+K] in which T is an exact grid point.
class TimeGrid {
public:
    TimeGrid(double t_end, double k_extra, std::size_t n_steps)
        : t_end_(t_end), k_extra_(k_extra), n_steps_(n_steps) {
        require(std::isfinite(t_end) && t_end > 0.0, Errc::invalid_argument, "horizon T must be positive");
        require(std::isfinite(k_extra) && k_extra >= 0.0, Errc::invalid_argument, "anticipation K must be >= 0");
        require(n_steps >= 1, Errc::invalid_argument, "n_steps must be positive");
        dt_ = (t_end + k_extra) / static_cast<double>(n_steps);
        double idx = t_end / dt_;
        terminal_index_ = static_cast<std::size_t>(std::llround(idx));
        require(std::abs(idx - static_cast<double>(terminal_index_)) < 1e-7 && terminal_index_ >= 1,
                Errc::misaligned_delay,
                strformat("T=%g is not a grid point for %zu steps on [0, %g]", t_end, n_steps, t_end + k_extra));
    }

    double t_end() const { return t_end_; }
    double k_extra() const { return k_extra_; }
    double span() const { return t_end_ + k_extra_; }
    std::size_t n_steps() const { return n_steps_; }
    std::size_t n_points() const { return n_steps_ + 1; }
    double dt() const { return dt_; }
    /// Index of t = T.
    std::size_t terminal_index() const { return terminal_index_; }

    double time(std::size_t i) const {
        if (i == terminal_index_) return t_end_;
        if (i == n_steps_) return span();
        return static_cast<double>(i) * dt_;
    }

    /// Number of steps in a duration, if it is grid-aligned.
    std::optional<std::size_t> steps_in(double duration) const {
        double r = duration / dt_;
        double n = std::round(r);
        if (n < 0.0 || std::abs(r - n) > 1e-7) return std::nullopt;
        return static_cast<std::size_t>(n);
    }

    std::size_t aligned_steps(double duration, const char* what) const {
        auto n = steps_in(duration);
        require(n.has_value(), Errc::misaligned_delay,
                strformat("%s = %g is not a multiple of dt = %g", what, duration, dt_));
        return *n;
    }

    bool operator==(const TimeGrid& o) const {
        return t_end_ == o.t_end_ && k_extra_ == o.k_extra_ && n_steps_ == o.n_steps_;
    }

private:
    double t_end_;
    double k_extra_;
    std::size_t n_steps_;
    double dt_ = 0.0;
    std::size_t terminal_index_ = 0;
};

enum class DelayKind { constant, monotone_shift, tabulated };

inline const char* to_string(DelayKind k) {
    switch (k) {
    case DelayKind::constant: return "constant";
    case DelayKind::monotone_shift: return "monotone-shift";
    case DelayKind::tabulated: return "tabulated";
    }
    return "?";
}

/// delta(t_i) tabulated on the grid points of [0, T]. By default values are
/// snapped to the nearest grid multiple and the largest rounding is recorded.
class DelayFunction {
public:
    enum class Snap { nearest, exact };

    static DelayFunction constant(double c, const TimeGrid& grid, Snap snap = Snap::nearest) {
        require(std::isfinite(c) && c >= 0.0, Errc::invalid_argument, "constant delay must be >= 0");
        return DelayFunction(DelayKind::constant, std::vector<double>(grid.terminal_index() + 1, c), grid, snap);
    }

    static DelayFunction monotone_shift(const std::function<double(double)>& delta, const TimeGrid& grid,
                                        Snap snap = Snap::nearest) {
        std::vector<double> v(grid.terminal_index() + 1);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = delta(grid.time(i));
        return DelayFunction(DelayKind::monotone_shift, std::move(v), grid, snap);
    }

    static DelayFunction tabulated(std::vector<double> values, const TimeGrid& grid, Snap snap = Snap::nearest) {
        require(values.size() == grid.terminal_index() + 1, Errc::invalid_argument,
                "tabulated delay needs one value per grid point of [0, T]");
        return DelayFunction(DelayKind::tabulated, std::move(values), grid, snap);
    }

    DelayKind kind() const { return kind_; }
    const std::vector<double>& values() const { return raw_; }
    /// Anticipation in whole grid steps at grid index i in [0, n_T].
    std::size_t shift(std::size_t i) const { return shift_.at(i); }
    const std::vector<std::size_t>& shifts() const { return shift_; }
    double max_rounding() const { return max_rounding_; }
    bool snapped() const { return snap_ == Snap::nearest; }
    double dt() const { return dt_; }
    bool is_zero() const {
        for (auto s : shift_)
            if (s != 0) return false;
        return true;
    }
    /// The change-of-variable constant L for the constant kind.
    double l_const() const { return kind_ == DelayKind::constant ? 1.0 : std::numeric_limits<double>::quiet_NaN(); }

private:
    DelayFunction(DelayKind kind, std::vector<double> raw, const TimeGrid& grid, Snap snap)
        : kind_(kind), raw_(std::move(raw)), snap_(snap), dt_(grid.dt()) {
        shift_.resize(raw_.size());
        for (std::size_t i = 0; i < raw_.size(); ++i) {
            require(std::isfinite(raw_[i]) && raw_[i] >= 0.0, Errc::invalid_argument,
                    strformat("delay must be finite and >= 0 (index %zu)", i));
            double steps = std::round(raw_[i] / dt_);
            shift_[i] = static_cast<std::size_t>(steps);
            max_rounding_ = std::max(max_rounding_, std::abs(raw_[i] - steps * dt_));
        }
    }

    DelayKind kind_;
    std::vector<double> raw_;
    std::vector<std::size_t> shift_;
    Snap snap_;
    double dt_;
    double max_rounding_ = 0.0;
};

struct DelayReport {
    bool ok = false;
    double k_eff = 0.0;
    double l_eff = std::numeric_limits<double>::infinity();
    std::optional<std::size_t> first_violation;
    std::string message;
};

/// Checks the horizon condition s + delta(s) <= T + K (throws on failure) and
/// certifies the change-of-variable constant L. Constant delays give L = 1;
/// monotone shifts give the largest reciprocal slope of s -> s + delta(s);
/// a tabulated delay is certified only when that map is strictly increasing.
inline DelayReport validate_delay(const DelayFunction& delay, const TimeGrid& grid) {
    const auto& raw = delay.values();
    require(raw.size() == grid.terminal_index() + 1, Errc::invalid_argument,
            "delay is not tabulated on the grid points of [0, T]");
    const double dt = grid.dt();
    DelayReport rep;
    double reach = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double s = grid.time(i);
        if (!delay.snapped()) {
            double steps = raw[i] / dt;
            if (std::abs(steps - std::round(steps)) > kGridEps * 1e2)
                fail(Errc::non_grid_anticipation,
                     strformat("s + delta(s) = %.12g at s = %g is not a grid point", s + raw[i], s));
        }
        double target = static_cast<double>(i + delay.shift(i)) * dt;
        if (target > grid.span() + kGridEps * dt || s + raw[i] > grid.span() + 1e-7 * dt)
            fail(Errc::horizon_violation,
                 strformat("s + delta(s) = %.12g exceeds T + K = %.12g at s = %g", s + raw[i], grid.span(), s));
        reach = std::max(reach, delay.shift(i) * dt + s);
    }
    rep.k_eff = std::max(0.0, reach - grid.t_end());

    auto certify_monotone = [&]() {
        double l = 0.0;
        for (std::size_t i = 0; i + 1 < raw.size(); ++i) {
            double rise = (grid.time(i + 1) + raw[i + 1]) - (grid.time(i) + raw[i]);
            if (!(rise > 0.0)) {
                rep.ok = false;
                rep.l_eff = std::numeric_limits<double>::infinity();
                rep.first_violation = i;
                rep.message = strformat("s + delta(s) is not strictly increasing at s = %g: no finite L", grid.time(i));
                return;
            }
            l = std::max(l, dt / rise);
        }
        rep.ok = true;
        rep.l_eff = l;
    };

    switch (delay.kind()) {
    case DelayKind::constant:
        rep.ok = true;
        rep.l_eff = 1.0;
        rep.k_eff = delay.max_rounding() <= 1e-7 * dt ? raw[0] : delay.shift(0) * dt;
        break;
    case DelayKind::monotone_shift:
    case DelayKind::tabulated:
        certify_monotone();
        break;
    }
    return rep;
}

/// Generator of the anticipated equation. The anticipated arguments reach f
/// already conditioned: a_y = E^{F_t}[g_y(Y_{t+delta})], a_z = E^{F_t}[g_z(Z_{t+zeta}; z)].
struct Generator {
    using Fn = std::function<double(double t, double y, double z, double a_y, double a_z)>;

    std::string name;
    Fn f;
    /// Pointwise transform of the anticipated Y value; empty means identity.
    std::function<double(double)> g_y;
    /// Pointwise transform of the anticipated Z value, given the present z; empty means identity.
    std::function<double(double future, double present)> g_z;
    bool g_y_smooth = true;
    bool g_z_smooth = true;
    /// g_z reads the present z (non-separable).
    bool g_z_joint = false;
    double lipschitz_c = 1.0;
    /// Declared: f is nondecreasing in a_y.
    bool increasing_in_a_y = false;
    bool uses_a_z = true;

    double transform_y(double y) const { return g_y ? g_y(y) : y; }
    double transform_z(double future, double present) const { return g_z ? g_z(future, present) : future; }
};

struct TerminalData {
    std::function<double(double t, double w)> xi;
    std::function<double(double t, double w)> eta;
};

/// A validated instance. Immutable after construction.
class ProblemSpec {
public:
    ProblemSpec(TimeGrid grid, DelayFunction delta, DelayFunction zeta, Generator gen, TerminalData terminal,
                std::size_t brownian_dim = 1)
        : grid_(grid), delta_(std::move(delta)), zeta_(std::move(zeta)), gen_(std::move(gen)),
          terminal_(std::move(terminal)), dim_(brownian_dim) {
        require(static_cast<bool>(gen_.f), Errc::invalid_argument, "generator callback missing");
        require(static_cast<bool>(terminal_.xi) && static_cast<bool>(terminal_.eta), Errc::invalid_argument,
                "terminal callbacks missing");
        require(gen_.lipschitz_c > 0.0, Errc::invalid_argument, "declared Lipschitz constant must be > 0");
        require(dim_ >= 1, Errc::invalid_argument, "brownian_dim must be >= 1");
        delta_report_ = validate_delay(delta_, grid_);
        zeta_report_ = validate_delay(zeta_, grid_);
        require(delta_report_.ok, Errc::invalid_argument, "delta fails the L condition: " + delta_report_.message);
        require(zeta_report_.ok, Errc::invalid_argument, "zeta fails the L condition: " + zeta_report_.message);
        if (gen_.g_z_joint && delta_.shifts() != zeta_.shifts())
            fail(Errc::joint_transform_delay_mismatch, "non-separable g_z requires delta == zeta");
        for (std::size_t i = 0; i <= grid_.terminal_index(); ++i) {
            double v = gen_.f(grid_.time(i), 0.0, 0.0, 0.0, 0.0);
            require(std::isfinite(v), Errc::non_finite_generator,
                    strformat("f(t, 0, 0, 0, 0) is not finite at t = %g", grid_.time(i)));
        }
    }

    const TimeGrid& grid() const { return grid_; }
    const DelayFunction& delta() const { return delta_; }
    const DelayFunction& zeta() const { return zeta_; }
    const Generator& gen() const { return gen_; }
    const TerminalData& terminal() const { return terminal_; }
    std::size_t brownian_dim() const { return dim_; }
    /// Largest L certified for delta and zeta.
    double l_const() const { return std::max(delta_report_.l_eff, zeta_report_.l_eff); }
    const DelayReport& delta_report() const { return delta_report_; }
    const DelayReport& zeta_report() const { return zeta_report_; }

private:
    TimeGrid grid_;
    DelayFunction delta_;
    DelayFunction zeta_;
    Generator gen_;
    TerminalData terminal_;
    std::size_t dim_;
    DelayReport delta_report_;
    DelayReport zeta_report_;
};

struct ProbeBox {
    double t_lo = 0.0, t_hi = 1.0;
    double y_lo = -1.0, y_hi = 1.0;
    double z_lo = -1.0, z_hi = 1.0;
    double a_y_lo = -1.0, a_y_hi = 1.0;
    double a_z_lo = -1.0, a_z_hi = 1.0;
};

/// Largest observed difference quotient |f(p) - f(q)| / (|dy| + |dz| + |da_y| + |da_z|)
/// over random probe pairs. Pairs alternate between a joint perturbation and
/// single-coordinate perturbations, so coordinate slopes are sampled directly.
inline double estimate_lipschitz(const Generator& gen, const ProbeBox& box, std::size_t n_probes, std::uint64_t seed) {
    require(n_probes >= 2, Errc::invalid_argument, "need at least 2 probes");
    require(static_cast<bool>(gen.f), Errc::invalid_argument, "generator callback missing");
    SeededUniform rng(seed, 0x11u);
    const double lo[4] = {box.y_lo, box.z_lo, box.a_y_lo, box.a_z_lo};
    const double hi[4] = {box.y_hi, box.z_hi, box.a_y_hi, box.a_z_hi};
    for (int k = 0; k < 4; ++k)
        require(std::isfinite(lo[k]) && std::isfinite(hi[k]) && lo[k] <= hi[k], Errc::invalid_argument,
                "probe box must be finite");
    double best = 0.0;
    for (std::size_t p = 0; p < n_probes; ++p) {
        double t = rng.uniform(box.t_lo, box.t_hi);
        double a[4], b[4];
        for (int k = 0; k < 4; ++k) a[k] = rng.uniform(lo[k], hi[k]);
        int mode = static_cast<int>(p % 5);
        for (int k = 0; k < 4; ++k) {
            bool move = mode == 0 || mode - 1 == k;
            b[k] = move ? rng.uniform(lo[k], hi[k]) : a[k];
        }
        double fa = gen.f(t, a[0], a[1], a[2], a[3]);
        double fb = gen.f(t, b[0], b[1], b[2], b[3]);
        if (!std::isfinite(fa) || !std::isfinite(fb))
            fail(Errc::non_finite_generator, strformat("non-finite generator value at t = %g", t));
        double dist = 0.0;
        for (int k = 0; k < 4; ++k) dist += std::abs(a[k] - b[k]);
        if (dist <= 1e-300) continue;
        best = std::max(best, std::abs(fa - fb) / dist);
    }
    return best;
}

}  // namespace absde
