#pragma once

// Named generators, terminal data and complete problems. A ProblemConfig is
// the plain-data description shared by the catalog and config files.

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "absde/core.hpp"
#include "absde/dualctl.hpp"
#include "absde/model.hpp"

namespace absde {

using ParamMap = std::map<std::string, double>;

struct ProblemConfig {
    std::string name = "custom";
    double horizon = 1.0;
    std::size_t steps = 300;
    /// "constant" or "proportional" (delta(s) = value * s).
    std::string delay_kind = "constant";
    double delay = 0.5;
    /// K; negative means "equal to the largest delay".
    double anticipation = -1.0;
    std::string generator;
    ParamMap gen_params;
    std::string terminal;
    ParamMap term_params;

    double resolved_k() const {
        if (anticipation >= 0.0) return anticipation;
        return delay_kind == "proportional" ? delay * horizon : delay;
    }
};

namespace detail {

inline double param(const ParamMap& m, const std::string& key, double fallback) {
    auto it = m.find(key);
    return it == m.end() ? fallback : it->second;
}

inline void check_params(const ParamMap& m, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [k, v] : m) {
        if (!known.count(k)) fail(Errc::config_error, "unknown key '" + k + "' in [" + where + "]");
        if (!std::isfinite(v)) fail(Errc::config_error, "key '" + k + "' in [" + where + "] is not finite");
    }
}

}  // namespace detail

/// Parameter names accepted by each generator and terminal id.
inline const std::map<std::string, std::set<std::string>>& generator_params() {
    static const std::map<std::string, std::set<std::string>> m = {
        {"shifted-linear", {"shift"}},
        {"anticipated-linear", {"a"}},
        {"anticipated-linear-negpart", {"a"}},
        {"abs-z", {"k"}},
        {"linear", {"mu", "mu_bar", "sigma", "sigma_bar", "l"}},
        {"control-max", {"scale"}},
    };
    return m;
}

inline const std::map<std::string, std::set<std::string>>& terminal_params() {
    static const std::map<std::string, std::set<std::string>> m = {
        {"time-scaled-w", {}},
        {"constant", {"c"}},
        {"square", {"s", "r", "o"}},
        {"affine-quadratic", {"q0", "q1", "q2", "p0", "p1"}},
    };
    return m;
}

inline void check_config(const ProblemConfig& c) {
    auto g = generator_params().find(c.generator);
    if (g == generator_params().end()) fail(Errc::config_error, "unknown generator id '" + c.generator + "'");
    auto t = terminal_params().find(c.terminal);
    if (t == terminal_params().end()) fail(Errc::config_error, "unknown terminal id '" + c.terminal + "'");
    detail::check_params(c.gen_params, g->second, "generator");
    detail::check_params(c.term_params, t->second, "terminal");
    if (c.delay_kind != "constant" && c.delay_kind != "proportional")
        fail(Errc::config_error, "unknown delay.kind '" + c.delay_kind + "'");
    if (!(c.horizon > 0.0)) fail(Errc::config_error, "horizon must be positive");
    if (!(c.delay >= 0.0)) fail(Errc::config_error, "delay.value must be >= 0");
    if (c.steps < 10 || c.steps > 1000000) fail(Errc::config_error, "steps must lie in [10, 1e6]");
}

inline TerminalData make_terminal(const ProblemConfig& c) {
    const auto& p = c.term_params;
    const double T = c.horizon;
    if (c.terminal == "time-scaled-w")
        return {[](double t, double w) { return t * w; }, [](double t, double) { return t; }};
    if (c.terminal == "constant") {
        double v = detail::param(p, "c", 0.0);
        return {[v](double, double) { return v; }, [](double, double) { return 0.0; }};
    }
    if (c.terminal == "square") {
        // s w^2 + r (t - T) + o, with Z = 2 s w
        double s = detail::param(p, "s", 1.0), r = detail::param(p, "r", 1.0), o = detail::param(p, "o", 0.0);
        return {[=](double t, double w) { return s * w * w + r * (t - T) + o; },
                [s](double, double w) { return 2.0 * s * w; }};
    }
    if (c.terminal == "affine-quadratic") {
        double q0 = detail::param(p, "q0", 1.0), q1 = detail::param(p, "q1", 0.0), q2 = detail::param(p, "q2", 0.0);
        double p0 = detail::param(p, "p0", 0.0), p1 = detail::param(p, "p1", 0.0);
        return {[=](double, double w) { return q0 + q1 * w + q2 * w * w; },
                [=](double, double w) { return p0 + p1 * w; }};
    }
    fail(Errc::config_error, "unknown terminal id '" + c.terminal + "'");
}

inline LinearAbsdeSpec make_linear(const ProblemConfig& c) {
    require(c.generator == "linear", Errc::config_error, "problem does not use the linear generator");
    const auto& p = c.gen_params;
    double mu = detail::param(p, "mu", 0.3), mb = detail::param(p, "mu_bar", 0.4);
    double sg = detail::param(p, "sigma", 0.25), sb = detail::param(p, "sigma_bar", -0.3);
    double l = detail::param(p, "l", 0.2);
    LinearAbsdeSpec ls;
    ls.mu = [mu](double) { return mu; };
    ls.mu_bar = [mb](double) { return mb; };
    ls.sigma = [sg](double) { return sg; };
    ls.sigma_bar = [sb](double) { return sb; };
    ls.l = [l](double) { return l; };
    ls.theta = c.delay;
    ls.t_end = c.horizon;
    auto term = make_terminal(c);
    ls.q = term.xi;
    ls.p = term.eta;
    ls.bound_mu = std::max({std::abs(mu), std::abs(mb), std::abs(sg), std::abs(sb), 1e-12});
    return ls;
}

/// Five-point control grid on [0, 1]: alpha = s(u - 1/2), b = s(1 - u),
/// sigma = (2s/3) u, l = (2s/3) u (1 - u), with s the "scale" parameter.
inline ControlProblem make_control(const ProblemConfig& c) {
    require(c.generator == "control-max", Errc::config_error, "problem does not use the control generator");
    const double s = detail::param(c.gen_params, "scale", 0.3);
    require(s > 0.0, Errc::config_error, "scale must be positive");
    ControlProblem cp;
    for (double u : {0.0, 0.25, 0.5, 0.75, 1.0}) cp.control_set.points.push_back({u});
    cp.alpha = [s](double, const std::vector<double>& u) { return s * (u[0] - 0.5); };
    cp.b = [s](double, const std::vector<double>& u) { return s * (1.0 - u[0]); };
    cp.sigma_c = [s](double, const std::vector<double>& u) { return 2.0 * s / 3.0 * u[0]; };
    cp.l_c = [s](double, const std::vector<double>& u) { return 2.0 * s / 3.0 * u[0] * (1.0 - u[0]); };
    cp.q = make_terminal(c).xi;
    cp.theta = c.delay;
    cp.t_end = c.horizon;
    cp.bound_mu = s;
    return cp;
}

inline Generator make_generator(const ProblemConfig& c) {
    const auto& p = c.gen_params;
    const double d = c.delay;
    Generator g;
    g.name = c.generator;
    if (c.generator == "shifted-linear") {
        double sh = detail::param(p, "shift", d);
        require(sh > 0.0, Errc::config_error, "shifted-linear needs shift > 0");
        g.f = [sh](double t, double, double, double ay, double) { return -ay / (t + sh); };
        g.lipschitz_c = 1.0 / sh;
        g.uses_a_z = false;
        return g;
    }
    if (c.generator == "anticipated-linear" || c.generator == "anticipated-linear-negpart") {
        require(d > 0.0 || p.count("a"), Errc::config_error, "anticipated-linear needs a or a positive delay");
        double a = detail::param(p, "a", -2.0 / d);
        g.f = [a](double, double, double, double ay, double) { return a * ay; };
        g.lipschitz_c = std::max(std::abs(a), 1e-12);
        g.uses_a_z = false;
        g.increasing_in_a_y = a >= 0.0;
        if (c.generator == "anticipated-linear-negpart") {
            g.g_y = [](double y) { return std::min(y, 0.0); };
            g.g_y_smooth = false;
        }
        return g;
    }
    if (c.generator == "abs-z") {
        require(d > 0.0 || p.count("k"), Errc::config_error, "abs-z needs k or a positive delay");
        double k = detail::param(p, "k", std::sqrt(kPi / (2.0 * d)));
        g.f = [k](double, double, double, double, double az) { return -k * az; };
        g.g_z = [](double fut, double now) { return std::abs(fut - now); };
        g.g_z_joint = true;
        g.g_z_smooth = false;
        g.lipschitz_c = std::max(std::abs(k), 1e-12);
        return g;
    }
    fail(Errc::config_error, "generator '" + c.generator + "' is not a plain generator");
}

inline ProblemSpec build_spec(const ProblemConfig& c) {
    check_config(c);
    if (c.generator == "linear") return induced_spec(make_linear(c), c.steps);
    if (c.generator == "control-max") return value_spec(make_control(c), c.steps);
    TimeGrid g(c.horizon, c.resolved_k(), c.steps);
    DelayFunction d = c.delay_kind == "constant"
                          ? DelayFunction::constant(c.delay, g)
                          : DelayFunction::monotone_shift([v = c.delay](double s) { return v * s; }, g);
    return ProblemSpec(g, d, d, make_generator(c), make_terminal(c));
}

struct CatalogEntry {
    std::string id;
    std::string description;
    ProblemConfig config;
    /// Steps used for Monte Carlo runs.
    std::size_t picard_steps = 60;
    std::function<double(double t, double x)> exact_u;
    std::function<double(double t, double x)> exact_v;
    std::optional<double> y0_target;
};

inline std::vector<CatalogEntry> catalog() {
    std::vector<CatalogEntry> out;
    {
        CatalogEntry e;
        e.id = "ex43";
        e.description = "f = -E[Y_{t+d}]/(t+d), Y = tW on the band; solution (tW, t)";
        e.config = {e.id, 1.0, 300, "constant", 0.5, -1.0, "shifted-linear", {}, "time-scaled-w", {}};
        e.picard_steps = 60;
        e.exact_u = [](double t, double x) { return t * x; };
        e.exact_v = [](double t, double) { return t; };
        e.y0_target = 0.0;
        out.push_back(e);
    }
    {
        CatalogEntry e;
        e.id = "ex52";
        e.description = "f = a E[Y_{t+d}], a = -2/d, Y = c = -1 on the band; Y_t = c + ac(T - t)";
        e.config = {e.id, 1.0, 200, "constant", 1.0, -1.0, "anticipated-linear", {{"a", -2.0}}, "constant",
                    {{"c", -1.0}}};
        e.picard_steps = 80;
        e.exact_u = [](double t, double) { return -1.0 + 2.0 * (1.0 - t); };
        e.exact_v = [](double, double) { return 0.0; };
        e.y0_target = 1.0;
        out.push_back(e);
    }
    {
        CatalogEntry e;
        e.id = "ex52-prime";
        e.description = "f = a E[min(Y_{t+d}, 0)], a = -2/d, zero band; solution (0, 0)";
        e.config = {e.id, 1.0, 200, "constant", 1.0, -1.0, "anticipated-linear-negpart", {{"a", -2.0}}, "constant",
                    {{"c", 0.0}}};
        e.picard_steps = 80;
        e.exact_u = [](double, double) { return 0.0; };
        e.exact_v = [](double, double) { return 0.0; };
        e.y0_target = 0.0;
        out.push_back(e);
    }
    {
        CatalogEntry e;
        e.id = "ex53";
        e.description = "f = -sqrt(pi/2d) E|Z_{t+d} - Z_t|, band (W^2 - 2T + t, 2W); solution W^2 - 2T + t";
        e.config = {e.id, 1.0, 150, "constant", 0.5, -1.0, "abs-z", {}, "square",
                    {{"s", 1.0}, {"r", 1.0}, {"o", -1.0}}};
        e.picard_steps = 60;
        e.exact_u = [](double t, double x) { return x * x - 2.0 + t; };
        e.exact_v = [](double, double x) { return 2.0 * x; };
        e.y0_target = -2.0;
        out.push_back(e);
    }
    {
        CatalogEntry e;
        e.id = "ex53-prime";
        e.description = "same generator, band (4W^2 - 4(T - t), 8W); solution 4W^2 - 4(T - t)";
        e.config = {e.id, 1.0, 150, "constant", 0.5, -1.0, "abs-z", {}, "square",
                    {{"s", 4.0}, {"r", 4.0}, {"o", 0.0}}};
        e.picard_steps = 60;
        e.exact_u = [](double t, double x) { return 4.0 * x * x - 4.0 * (1.0 - t); };
        e.exact_v = [](double, double x) { return 8.0 * x; };
        e.y0_target = -4.0;
        out.push_back(e);
    }
    {
        CatalogEntry e;
        e.id = "eq2-linear";
        e.description = "linear equation with anticipated Y and Z at lag theta; priced by the delayed SDE";
        e.config = {e.id,
                    1.0,
                    150,
                    "constant",
                    0.5,
                    -1.0,
                    "linear",
                    {},
                    "affine-quadratic",
                    {{"q0", 1.0}, {"q1", 0.5}, {"q2", 0.1}, {"p0", 0.5}, {"p1", 0.2}}};
        e.picard_steps = 60;
        out.push_back(e);
    }
    {
        CatalogEntry e;
        e.id = "sec6-control";
        e.description = "value function of the delayed-density control problem, five controls";
        e.config = {e.id, 1.0, 60, "constant", 0.5, -1.0, "control-max", {}, "affine-quadratic",
                    {{"q0", 1.0}, {"q1", 0.5}}};
        e.picard_steps = 60;
        out.push_back(e);
    }
    return out;
}

inline std::vector<std::string> catalog_ids() {
    std::vector<std::string> ids;
    for (const auto& e : catalog()) ids.push_back(e.id);
    return ids;
}

inline std::optional<CatalogEntry> find_entry(const std::string& id) {
    for (auto& e : catalog())
        if (e.id == id) return e;
    return std::nullopt;
}

}  // namespace absde
