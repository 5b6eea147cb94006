// Acceptance run: one PASS/FAIL line per criterion, failing checks listed
// underneath. Exit status 0 iff every criterion passes.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "absde/validate.hpp"

using namespace absde;

namespace {

struct Criterion {
    int id;
    std::string title;
    std::function<std::vector<CheckResult>()> run;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename Fn>
std::vector<CheckResult> timed(const std::string& name, double budget, Fn&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<CheckResult> rs = fn();
    double s = seconds_since(t0);
    rs.push_back(inequality_check(name, s, budget, 0.0, "wall seconds on one worker"));
    return rs;
}

std::string report_bytes(const std::vector<CheckResult>& rs, std::uint64_t seed) {
    std::ostringstream os;
    write_json_report(os, rs, seed);
    return os.str();
}

}  // namespace

int main() {
    // timings are single-worker figures
    set_max_threads(1);
    ValidationSettings vs;

    std::vector<Criterion> criteria = {
        {1, "linear exact solution on the grid, n_steps 300, under 30 s",
         [&] {
             return timed("ex43.runtime", 30.0, [&] {
                 auto spec = detail::catalog_spec("ex43", 300);
                 auto entry = *find_entry("ex43");
                 auto s = solve_absde_grid(spec, vs.grid);
                 auto e = detail::surface_error(s, entry.exact_u, entry.exact_v);
                 return std::vector<CheckResult>{inequality_check("ex43.grid_error", e.max(), 1e-2, 0.0)};
             });
         }},
        {2, "anticipated-Z pair: Y0 = -2 and -4, comparison inverted", [&] { return check_counterexample_53(vs); }},
        {3, "decreasing anticipated term: Y0 = 1 against 0, comparison violated",
         [&] { return check_counterexample_52(vs); }},
        {4, "Picard contraction on five catalog problems, 1e5 paths, under 2 min each",
         [&] {
             std::vector<CheckResult> out;
             for (const auto& id : contraction_problems()) {
                 auto rs = timed("contraction." + id + ".runtime", 120.0, [&] { return check_contraction(id, vs); });
                 out.insert(out.end(), rs.begin(), rs.end());
             }
             return out;
         }},
        {5, "delayed-SDE duality on 10 random linear instances", [&] { return check_duality_suite(10, vs); }},
        {6, "control value dominates 20 constant controls; feedback attains it", [&] { return check_control(vs); }},
        {7, "comparison suite, 20 conforming instances and negative controls",
         [&] { return check_comparison_suite(20, vs.seed, vs.grid); }},
        {8, "energy, sup and anticipated estimates on 20 instances", [&] { return check_basic_estimates(20, vs.seed, vs); }},
        {9, "delay gap shrinks as the delays meet, bounded constant",
         [&] { return std::vector<CheckResult>{check_delay_sensitivity_suite(vs)}; }},
        {10, "repeated runs give byte-identical reports",
         [&] {
             ValidationSettings small = vs;
             small.n_paths = 20000;
             auto run = [&](unsigned threads) {
                 set_max_threads(threads);
                 std::vector<CheckResult> rs = check_contraction("ex53", small);
                 auto d = check_duality_suite(2, small);
                 rs.insert(rs.end(), d.begin(), d.end());
                 auto c = check_basic_estimates(2, small.seed, small);
                 rs.insert(rs.end(), c.begin(), c.end());
                 set_max_threads(1);
                 return report_bytes(rs, small.seed);
             };
             std::string a = run(1), b = run(1), c = run(3);
             return std::vector<CheckResult>{
                 flag_check("determinism.same_flags", a == b, strformat("%zu bytes", a.size())),
                 flag_check("determinism.thread_count", a == c, "1 worker against 3 workers")};
         }},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<CheckResult> rs;
        std::string error;
        try {
            rs = c.run();
        } catch (const std::exception& e) {
            error = e.what();
        }
        bool ok = error.empty() && all_passed(rs);
        std::printf("%s [%2d] %s (%zu checks, %.1f s)\n", ok ? "PASS" : "FAIL", c.id, c.title.c_str(), rs.size(),
                    seconds_since(t0));
        if (!error.empty()) std::printf("       error: %s\n", error.c_str());
        for (const auto& r : rs)
            if (!r.passed)
                std::printf("       %s: observed %.6g, reference %.6g, tolerance %.3g; %s\n", r.name.c_str(),
                            r.observed, r.bound_or_target, r.tolerance, r.details.c_str());
        std::fflush(stdout);
        failed += ok ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
