#pragma once

// Front end behind tools/absde_lab: parses a RunConfig and dispatches one
// command. Exit codes: 0 success, 1 check failure, 2 usage or config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "absde/absde.hpp"
#include "absde/catalog.hpp"
#include "absde/config.hpp"
#include "absde/dualctl.hpp"
#include "absde/validate.hpp"
#include "json.hpp"

namespace absde {

struct RunConfig {
    std::string command;
    std::string problem;
    std::optional<std::size_t> n_steps;
    std::optional<std::size_t> n_paths;
    std::optional<std::size_t> n_x;
    std::optional<double> x_max;
    std::optional<std::size_t> n_nodes;
    std::optional<std::size_t> degree;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    std::string out;
    std::string format;
    bool all = false;
    std::vector<std::string> only;
    std::size_t refinements = 4;
    std::size_t max_iter = 25;
};

inline constexpr std::uint64_t kDefaultSeed = 7;
inline constexpr std::size_t kDefaultPaths = 100000;

inline const std::vector<std::string>& check_groups() {
    static const std::vector<std::string> g = {"ex43",      "ex52",      "ex53",        "comparison", "estimates",
                                               "delay",     "contraction", "duality",   "control"};
    return g;
}

namespace detail {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Problem {
    ProblemConfig config;
    std::optional<CatalogEntry> entry;
};

inline Problem resolve_problem(const std::string& name) {
    if (auto e = find_entry(name)) return {e->config, e};
    if (std::filesystem::is_regular_file(name)) return {load_config(name), std::nullopt};
    std::string ids;
    for (const auto& id : catalog_ids()) ids += (ids.empty() ? "" : ", ") + id;
    throw UsageError("problem '" + name + "' is neither a catalog id (" + ids + ") nor a config file");
}

inline GridSettings grid_settings(const RunConfig& rc) {
    GridSettings gs;
    if (rc.n_x) gs.n_x = *rc.n_x;
    if (rc.x_max) gs.x_max = *rc.x_max;
    if (rc.n_nodes) gs.n_nodes = *rc.n_nodes;
    return gs;
}

inline RegressionBasis basis(const RunConfig& rc) {
    RegressionBasis b;
    if (rc.degree) b.degree = *rc.degree;
    return b;
}

inline std::uint64_t resolved_seed(const RunConfig& rc) {
    if (rc.seed) return *rc.seed;
    if (const char* env = std::getenv("ABSDE_LAB_SEED")) {
        std::string s(env);
        char* end = nullptr;
        unsigned long long v = std::strtoull(s.c_str(), &end, 10);
        if (s.empty() || end != s.c_str() + s.size() || s[0] == '-')
            throw UsageError("ABSDE_LAB_SEED must be a non-negative integer, got '" + s + "'");
        return v;
    }
    return kDefaultSeed;
}

/// Round near-zero values so the summary never shows "-0.000".
inline std::string summary_value(double v) {
    if (std::abs(v) < 5e-4) v = 0.0;
    return strformat("%.3f", v);
}

inline std::string target_text(const std::optional<CatalogEntry>& e) {
    if (e && e->y0_target) return strformat("%g", *e->y0_target);
    return "none";
}

/// Writes to --out, or to `fallback` when no path is given and fallback is set.
template <typename Writer>
void emit(const RunConfig& rc, std::ostream* fallback, Writer&& w) {
    if (!rc.out.empty()) {
        std::ofstream os(rc.out, std::ios::binary);
        if (!os) fail(Errc::io_error, "cannot open " + rc.out);
        w(os);
        return;
    }
    if (fallback) w(*fallback);
}

inline void require_format(const RunConfig& rc, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed)
        if (rc.format == a) return;
    throw UsageError("--format " + rc.format + " is not available for " + rc.command);
}

using Json = nlohmann::ordered_json;

inline int cmd_solve(const RunConfig& rc, std::ostream& out) {
    require_format(rc, {"csv", "json"});
    Problem pb = resolve_problem(rc.problem);
    if (rc.n_steps) pb.config.steps = *rc.n_steps;
    auto spec = build_spec(pb.config);
    auto gs = grid_settings(rc);
    auto s = solve_absde_grid(spec, gs);
    const double y0 = s.y_at(0, 0.0);
    out << "Y0 ≈ " << summary_value(y0) << " (target " << target_text(pb.entry) << ")\n";
    Json j;
    j["command"] = "solve";
    j["problem"] = rc.problem;
    j["n_steps"] = pb.config.steps;
    j["dt"] = spec.grid().dt();
    j["x_max"] = s.x_max();
    j["n_x"] = s.n_x();
    j["y0"] = y0;
    if (pb.entry && pb.entry->y0_target) j["target"] = *pb.entry->y0_target;
    if (pb.entry && pb.entry->exact_u) {
        auto e = surface_error(s, pb.entry->exact_u, pb.entry->exact_v);
        out << "max interior error: u " << g(e.u) << ", v " << g(e.v) << "\n";
        j["error_u"] = e.u;
        j["error_v"] = e.v;
    }
    emit(rc, nullptr, [&](std::ostream& os) {
        if (rc.format == "json") os << j.dump(2) << "\n";
        else s.write_csv(os);
    });
    return 0;
}

inline int cmd_picard(const RunConfig& rc, std::ostream& out) {
    require_format(rc, {"csv", "json"});
    Problem pb = resolve_problem(rc.problem);
    pb.config.steps = rc.n_steps ? *rc.n_steps : pb.entry ? pb.entry->picard_steps : pb.config.steps;
    auto spec = build_spec(pb.config);
    const std::uint64_t seed = resolved_seed(rc);
    const std::size_t n_paths = rc.n_paths.value_or(kDefaultPaths);
    auto ens = generate_ensemble(spec.grid(), n_paths, 1, seed);
    PicardSettings ps;
    ps.max_iter = rc.max_iter;
    auto rep = solve_absde_picard(spec, ens, basis(rc), ps);
    out << "Y0 ≈ " << summary_value(rep.y0) << " (target " << target_text(pb.entry) << ")\n";
    out << strformat("stderr %s, %zu iterations, beta %s, %s\n", g(rep.y0_stderr).c_str(), rep.iterations,
                     g(rep.beta_used).c_str(), rep.converged ? "converged" : "NOT converged");
    emit(rc, nullptr, [&](std::ostream& os) {
        if (rc.format == "csv") {
            rep.write_trace(os);
            return;
        }
        Json j;
        j["command"] = "picard";
        j["problem"] = rc.problem;
        j["n_steps"] = pb.config.steps;
        j["n_paths"] = n_paths;
        j["seed"] = seed;
        j["beta"] = rep.beta_used;
        j["iterations"] = rep.iterations;
        j["converged"] = rep.converged;
        j["tolerance"] = rep.tolerance;
        j["delta_norms"] = rep.delta_norms;
        j["ratios"] = rep.ratio_trace;
        j["y0"] = rep.y0;
        j["y0_stderr"] = rep.y0_stderr;
        os << j.dump(2) << "\n";
    });
    return rep.converged ? 0 : 1;
}

inline int cmd_duality(const RunConfig& rc, std::ostream& out) {
    require_format(rc, {"csv", "json"});
    Problem pb = resolve_problem(rc.problem);
    if (pb.config.generator != "linear")
        throw UsageError("duality needs a problem with the linear generator, '" + rc.problem + "' uses '" +
                         pb.config.generator + "'");
    if (rc.n_steps) pb.config.steps = *rc.n_steps;
    auto ls = make_linear(pb.config);
    auto spec = induced_spec(ls, pb.config.steps);
    const double grid_y0 = solve_absde_grid(spec, grid_settings(rc)).y_at(0, 0.0);
    const std::uint64_t seed = resolved_seed(rc);
    const std::size_t n_paths = rc.n_paths.value_or(kDefaultPaths);
    auto ens = generate_ensemble(spec.grid(), n_paths, 1, seed);
    auto r = duality_price(ls, 0.0, ens);
    const double tol = 3.0 * r.stderr_ + 5.0 * spec.grid().dt();
    const bool ok = std::abs(r.mean - grid_y0) <= tol;
    out << "Y0 ≈ " << summary_value(r.mean) << " (target " << summary_value(grid_y0) << " from the grid solver)\n";
    out << "stderr " << g(r.stderr_) << ", tolerance " << g(tol) << (ok ? ", agree" : ", DISAGREE") << "\n";
    emit(rc, nullptr, [&](std::ostream& os) {
        if (rc.format == "csv") {
            os << "duality_price,stderr,grid_y0,tolerance\n"
               << fmt_double(r.mean) << "," << fmt_double(r.stderr_) << "," << fmt_double(grid_y0) << ","
               << fmt_double(tol) << "\n";
            return;
        }
        Json j;
        j["command"] = "duality";
        j["problem"] = rc.problem;
        j["n_steps"] = pb.config.steps;
        j["n_paths"] = n_paths;
        j["seed"] = seed;
        j["duality_price"] = r.mean;
        j["stderr"] = r.stderr_;
        j["grid_y0"] = grid_y0;
        j["tolerance"] = tol;
        j["agree"] = ok;
        os << j.dump(2) << "\n";
    });
    return ok ? 0 : 1;
}

inline int cmd_control(const RunConfig& rc, std::ostream& out) {
    require_format(rc, {"csv", "json"});
    Problem pb = resolve_problem(rc.problem);
    if (pb.config.generator != "control-max")
        throw UsageError("control needs a problem with the control-max generator, '" + rc.problem + "' uses '" +
                         pb.config.generator + "'");
    if (rc.n_steps) pb.config.steps = *rc.n_steps;
    auto cp = make_control(pb.config);
    auto gs = grid_settings(rc);
    auto v = value_function(cp, pb.config.steps, gs);
    auto tb = extract_control(cp, v, 0.0, gs);
    const std::uint64_t seed = resolved_seed(rc);
    const std::size_t n_paths = rc.n_paths.value_or(kDefaultPaths);
    auto ens = generate_ensemble(v.grid(), n_paths, 1, seed);
    auto jf = evaluate_objective(cp, tb.policy(), ens);
    const double y0 = v.y_at(0, 0.0), tol = 3.0 * jf.stderr_ + 5.0 * v.grid().dt();
    const bool ok = std::abs(jf.mean - y0) <= tol;
    out << "Y0 ≈ " << summary_value(y0) << " (target none)\n";
    out << "feedback objective " << g(jf.mean) << " ± " << g(jf.stderr_) << (ok ? ", attains Y0" : ", MISSES Y0")
        << "\n";
    auto counts = tb.counts(cp.control_set.size());
    emit(rc, nullptr, [&](std::ostream& os) {
        if (rc.format == "csv") {
            os << "t,x,control\n";
            for (std::size_t i = 0; i < tb.rows(); ++i)
                for (std::size_t j = 0; j < tb.n_x(); ++j)
                    os << fmt_double(v.grid().time(i)) << "," << fmt_double(v.x(j)) << "," << tb.at(i, j) << "\n";
            return;
        }
        Json j;
        j["command"] = "control";
        j["problem"] = rc.problem;
        j["n_steps"] = pb.config.steps;
        j["n_paths"] = n_paths;
        j["seed"] = seed;
        j["y0"] = y0;
        j["feedback_objective"] = jf.mean;
        j["feedback_stderr"] = jf.stderr_;
        j["tolerance"] = tol;
        j["control_counts"] = counts;
        os << j.dump(2) << "\n";
    });
    return ok ? 0 : 1;
}

inline std::vector<CheckResult> run_group(const std::string& group, const ValidationSettings& vs) {
    if (group == "ex43") return check_example_43(vs);
    if (group == "ex52") return check_counterexample_52(vs);
    if (group == "ex53") return check_counterexample_53(vs);
    if (group == "comparison") return check_comparison_suite(vs.comparison_instances, vs.seed, vs.grid);
    if (group == "estimates") return check_basic_estimates(vs.estimate_instances, vs.seed, vs);
    if (group == "delay") return {check_delay_sensitivity_suite(vs)};
    if (group == "contraction") {
        std::vector<CheckResult> out;
        for (const auto& id : contraction_problems()) {
            auto v = check_contraction(id, vs);
            out.insert(out.end(), v.begin(), v.end());
        }
        return out;
    }
    if (group == "duality") return check_duality_suite(vs.duality_instances, vs);
    if (group == "control") return check_control(vs);
    throw UsageError("unknown check group '" + group + "'");
}

inline int cmd_validate(const RunConfig& rc, std::ostream& out) {
    require_format(rc, {"csv", "json", "junit"});
    if (!rc.all && rc.only.empty()) throw UsageError("validate needs --all or --only GROUP");
    if (rc.all && !rc.only.empty()) throw UsageError("--all and --only are exclusive");
    for (const auto& gname : rc.only)
        if (std::find(check_groups().begin(), check_groups().end(), gname) == check_groups().end())
            throw UsageError("unknown check group '" + gname + "'");
    ValidationSettings vs;
    vs.seed = resolved_seed(rc);
    if (rc.n_paths) vs.n_paths = *rc.n_paths;
    vs.grid = grid_settings(rc);
    std::vector<CheckResult> rs;
    for (const auto& gname : check_groups()) {
        if (!rc.all && std::find(rc.only.begin(), rc.only.end(), gname) == rc.only.end()) continue;
        auto v = run_group(gname, vs);
        rs.insert(rs.end(), v.begin(), v.end());
    }
    emit(rc, &out, [&](std::ostream& os) {
        if (rc.format == "junit") {
            write_junit_report(os, rs);
        } else if (rc.format == "csv") {
            os << "name,passed,kind,observed,bound_or_target,tolerance\n";
            for (const auto& r : rs)
                os << r.name << "," << (r.passed ? "true" : "false") << "," << to_string(r.kind) << ","
                   << fmt_double(r.observed) << "," << fmt_double(r.bound_or_target) << ","
                   << fmt_double(r.tolerance) << "\n";
        } else {
            write_json_report(os, rs, vs.seed);
        }
    });
    std::size_t failed = 0;
    for (const auto& r : rs) failed += r.passed ? 0 : 1;
    if (!rc.out.empty()) out << strformat("%zu checks, %zu failed\n", rs.size(), failed);
    return failed == 0 ? 0 : 1;
}

inline int cmd_converge(const RunConfig& rc, std::ostream& out) {
    require_format(rc, {"csv", "json"});
    Problem pb = resolve_problem(rc.problem);
    if (!pb.entry || !pb.entry->exact_u)
        throw UsageError("converge needs a catalog problem with a known solution");
    const std::size_t base = rc.n_steps.value_or(pb.config.steps);
    auto gs = grid_settings(rc);
    std::vector<double> dts, errs;
    std::vector<SurfaceError> table;
    for (std::size_t k = 0; k < rc.refinements; ++k) {
        ProblemConfig c = pb.config;
        c.steps = base << k;
        if (c.steps > 1000000) throw UsageError("refinement exceeds 1e6 steps");
        auto spec = build_spec(c);
        auto e = surface_error(solve_absde_grid(spec, gs), pb.entry->exact_u, pb.entry->exact_v);
        dts.push_back(spec.grid().dt());
        errs.push_back(e.max());
        table.push_back(e);
    }
    bool fit = std::all_of(errs.begin(), errs.end(), [](double e) { return e > 1e-12; });
    double slope = fit ? loglog_slope(dts, errs) : std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k < dts.size(); ++k) out << "dt " << g(dts[k]) << "  error " << g(errs[k]) << "\n";
    if (fit) out << "fitted slope ≈ " << strformat("%.3f", slope) << "\n";
    else out << "fitted slope undefined (error at round-off level)\n";
    emit(rc, nullptr, [&](std::ostream& os) {
        if (rc.format == "csv") {
            os << "dt,error_u,error_v,error\n";
            for (std::size_t k = 0; k < dts.size(); ++k)
                os << fmt_double(dts[k]) << "," << fmt_double(table[k].u) << "," << fmt_double(table[k].v) << ","
                   << fmt_double(errs[k]) << "\n";
            return;
        }
        Json j;
        j["command"] = "converge";
        j["problem"] = rc.problem;
        j["dt"] = dts;
        j["error"] = errs;
        if (fit) j["slope"] = slope;
        else j["slope"] = nullptr;
        os << j.dump(2) << "\n";
    });
    return 0;
}

}  // namespace detail

inline int run(const RunConfig& rc, std::ostream& out) {
    if (rc.threads) set_max_threads(rc.threads);
    if (rc.command == "solve") return detail::cmd_solve(rc, out);
    if (rc.command == "picard") return detail::cmd_picard(rc, out);
    if (rc.command == "duality") return detail::cmd_duality(rc, out);
    if (rc.command == "control") return detail::cmd_control(rc, out);
    if (rc.command == "validate") return detail::cmd_validate(rc, out);
    if (rc.command == "converge") return detail::cmd_converge(rc, out);
    throw detail::UsageError("unknown command '" + rc.command + "'");
}

/// Parses argv and runs; never throws.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    RunConfig rc;
    CLI::App app{"Anticipated BSDE laboratory: grid and Monte Carlo solvers, duality, control, validation"};
    app.require_subcommand(1);
    auto add_common = [&rc](CLI::App* sub, bool mc, bool has_problem) {
        if (has_problem) sub->add_option("problem", rc.problem, "catalog id or config file")->required();
        sub->add_option("--n-steps", rc.n_steps, "time steps on [0, T+K]")->check(CLI::Range(10, 1000000));
        sub->add_option("--n-x", rc.n_x, "spatial nodes")->check(CLI::Range(11, 100001));
        sub->add_option("--x-max", rc.x_max, "half-width of the spatial grid")->check(CLI::PositiveNumber);
        sub->add_option("--n-nodes", rc.n_nodes, "Gauss-Hermite nodes")->check(CLI::Range(2, 64));
        if (mc) {
            sub->add_option("--n-paths", rc.n_paths, "Monte Carlo paths")->check(CLI::Range(2, 10000000));
            sub->add_option("--degree", rc.degree, "regression polynomial degree")->check(CLI::Range(0, 12));
            sub->add_option("--seed", rc.seed, "seed (default $ABSDE_LAB_SEED, else 7)");
        }
        sub->add_option("--threads", rc.threads, "worker cap, 0 = all cores")->check(CLI::Range(0, 1024));
        sub->add_option("--out", rc.out, "report file");
        sub->add_option("--format", rc.format, "csv, json (validate: also junit)")
            ->check(CLI::IsMember({"csv", "json", "junit"}));
    };
    add_common(app.add_subcommand("solve", "grid solve, surface as CSV"), false, true);
    auto* pic = app.add_subcommand("picard", "Monte Carlo Picard iteration with its norm trace");
    add_common(pic, true, true);
    pic->add_option("--max-iter", rc.max_iter, "iteration cap")->check(CLI::Range(1, 1000));
    add_common(app.add_subcommand("duality", "delayed-SDE price against the grid solve"), true, true);
    add_common(app.add_subcommand("control", "value function and extracted feedback control"), true, true);
    auto* val = app.add_subcommand("validate", "reproduction checks");
    add_common(val, true, false);
    val->add_flag("--all", rc.all, "run every check group");
    val->add_option("--only", rc.only, "check groups to run")->delimiter(',');
    auto* conv = app.add_subcommand("converge", "error against the exact solution under dt refinement");
    add_common(conv, false, true);
    conv->add_option("--refinements", rc.refinements, "number of dt halvings + 1")->check(CLI::Range(2, 12));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }
    rc.command = app.get_subcommands().front()->get_name();
    if (rc.format.empty()) rc.format = rc.command == "validate" ? "json" : "csv";
    try {
        return run(rc, out);
    } catch (const detail::UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.code() == Errc::not_converged ? 1 : 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace absde
