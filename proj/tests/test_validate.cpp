#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "absde/validate.hpp"

using namespace absde;

namespace {

ValidationSettings small() {
    ValidationSettings vs;
    vs.n_paths = 20000;
    vs.estimate_paths = 4000;
    return vs;
}

void expect_all_pass(const std::vector<CheckResult>& rs) {
    ASSERT_FALSE(rs.empty());
    for (const auto& r : rs) EXPECT_TRUE(r.passed) << r.name << ": " << r.details;
}

}  // namespace

TEST(CheckResult, EqualityAndInequalitySemantics) {
    SeededUniform rng(3);
    for (int k = 0; k < 500; ++k) {
        double obs = rng.uniform(-2, 2), ref = rng.uniform(-2, 2), tol = rng.uniform(0, 1);
        EXPECT_EQ(equality_check("e", obs, ref, tol).passed, std::abs(obs - ref) <= tol);
        EXPECT_EQ(inequality_check("i", obs, ref, tol).passed, obs <= ref + tol);
    }
    EXPECT_FALSE(equality_check("nan", std::nan(""), 0.0, 1.0).passed);
    EXPECT_FALSE(inequality_check("inf", INFINITY, 0.0, 1.0).passed);
    EXPECT_TRUE(flag_check("f", true).passed);
}

TEST(Validate, Example43) {
    auto rs = check_example_43(small());
    expect_all_pass(rs);
    EXPECT_EQ(rs[0].name, "ex43.grid_error");
    EXPECT_LE(rs[0].observed, 1e-2);
    // v error is exactly dt on this linear solution, so the ratio is one half
    EXPECT_NEAR(rs[1].observed, 0.5, 1e-6);
}

TEST(Validate, Counterexamples) {
    auto a = check_counterexample_52();
    expect_all_pass(a);
    EXPECT_NEAR(a[0].observed, 1.0, 1e-10);
    EXPECT_NEAR(a[1].observed, 0.0, 1e-12);
    auto b = check_counterexample_53();
    expect_all_pass(b);
}

TEST(Validate, ComparisonSuite) {
    auto rs = check_comparison_suite(4, 11);
    expect_all_pass(rs);
    std::size_t conforming = 0, negative = 0, delay = 0;
    for (const auto& r : rs) {
        conforming += r.name.rfind("comparison.conforming.", 0) == 0;
        negative += r.name.rfind("comparison.negative.", 0) == 0;
        delay += r.name.rfind("comparison.delay_order.", 0) == 0;
    }
    EXPECT_EQ(conforming, 4u);
    EXPECT_EQ(negative, 2u);
    EXPECT_EQ(delay, 1u);
}

TEST(Validate, BasicEstimates) {
    auto vs = small();
    auto rs = check_basic_estimates(4, 5, vs);
    expect_all_pass(rs);
    EXPECT_NEAR(rs[0].observed, 0.75 * std::exp(2.0) - 0.25, 1e-12);
    EXPECT_NEAR(rs[0].bound_or_target, std::exp(2.0), 1e-12);
    EXPECT_EQ(rs[2].name, "estimates.zero_data");
    EXPECT_EQ(rs[2].observed, 0.0);
}

TEST(Validate, DelaySensitivity) {
    auto r = check_delay_sensitivity_suite();
    EXPECT_TRUE(r.passed) << r.details;
    EXPECT_LE(r.observed, 10.0);
}

TEST(Validate, ContractionAndDuality) {
    auto vs = small();
    expect_all_pass(check_contraction("ex43", vs));
    expect_all_pass(check_contraction("eq2-linear", vs));
    expect_all_pass(check_duality_suite(2, vs));
}

TEST(Validate, Control) {
    auto vs = small();
    vs.constant_controls = 6;
    expect_all_pass(check_control(vs));
}

TEST(Reports, JsonIsStableAcrossThreadCounts) {
    auto vs = small();
    vs.n_paths = 5000;
    set_max_threads(1);
    auto a = check_contraction("ex52", vs);
    std::ostringstream ja;
    write_json_report(ja, a, vs.seed);
    set_max_threads(2);
    auto b = check_contraction("ex52", vs);
    std::ostringstream jb;
    write_json_report(jb, b, vs.seed);
    set_max_threads(0);
    EXPECT_EQ(ja.str(), jb.str());
    auto parsed = nlohmann::json::parse(ja.str());
    EXPECT_EQ(parsed["seed"], vs.seed);
    ASSERT_EQ(parsed["checks"].size(), a.size());
    for (const auto& key : {"name", "passed", "kind", "observed", "bound_or_target", "tolerance", "details"})
        EXPECT_TRUE(parsed["checks"][0].contains(key)) << key;
}

TEST(Reports, JunitListsFailures) {
    std::vector<CheckResult> rs = {equality_check("good", 1.0, 1.0, 0.0), inequality_check("bad", 2.0, 1.0, 0.5, "x<y")};
    std::ostringstream os;
    write_junit_report(os, rs);
    const std::string xml = os.str();
    EXPECT_NE(xml.find("tests=\"2\""), std::string::npos);
    EXPECT_NE(xml.find("failures=\"1\""), std::string::npos);
    EXPECT_NE(xml.find("<failure"), std::string::npos);
    EXPECT_NE(xml.find("name=\"bad\""), std::string::npos);
}

TEST(Reports, SubSeedsDiffer) {
    EXPECT_NE(detail::sub_seed(7, 1), detail::sub_seed(7, 2));
    EXPECT_NE(detail::sub_seed(7, 1), detail::sub_seed(8, 1));
    EXPECT_EQ(detail::sub_seed(7, 1), detail::sub_seed(7, 1));
}
