#include "mlmc/engine.hpp"

#include "mlmc/hierarchy.hpp"
#include "mlmc/presets.hpp"
#include "mlmc/stats.hpp"

#include <doctest.h>

#include <cmath>

using namespace mlmc;

namespace {

SyntheticSampler ex1_sampler() {
    Preset p = preset_by_name("ex1-gmres");
    return SyntheticSampler({p.reference_value, p.constants, p.rates});
}

} // namespace

TEST_CASE("blocked kernel is identical for every worker count") {
    auto sampler = ex1_sampler();
    for (std::int64_t count : {100, 4096, 10000}) {
        auto one = sample_level_blocked(sampler, 1, 0.125, 0.25, 99, 7, count, 1);
        auto two = sample_level_blocked(sampler, 1, 0.125, 0.25, 99, 7, count, 2);
        CHECK(one.count == two.count);
        CHECK(one.mean == two.mean);   // bitwise
        CHECK(one.m2 == two.m2);       // bitwise
        CHECK(one.work == two.work);   // bitwise

        auto serial = sample_level_serial(sampler, 1, 0.125, 0.25, 99, 7, count);
        CHECK(serial.count == one.count);
        CHECK(serial.mean == doctest::Approx(one.mean).epsilon(1e-12));
        CHECK(serial.variance() == doctest::Approx(one.variance()).epsilon(1e-10));
        CHECK(serial.work == doctest::Approx(one.work).epsilon(1e-12));
    }
}

TEST_CASE("welford merge equals one-pass accumulation") {
    WelfordAccumulator whole, left, right;
    RngStream rng(123, 0, 0);
    for (int i = 0; i < 1000; ++i) {
        double x = rng.normal() * 3.0 + 1.0;
        whole.add(x, 1.0);
        (i < 400 ? left : right).add(x, 1.0);
    }
    left.merge(right);
    CHECK(left.count == whole.count);
    CHECK(left.mean == doctest::Approx(whole.mean).epsilon(1e-13));
    CHECK(left.variance() == doctest::Approx(whole.variance()).epsilon(1e-12));
}

TEST_CASE("run_fixed_hierarchy on the synthetic sampler concentrates") {
    Preset p = preset_by_name("ex2");
    SyntheticSampler sampler({2.0, p.constants, p.rates});
    Hierarchy h{{1.0}, {1000000.0}, HierarchyKind::integer_feasible};
    auto [estimate, stats] = run_fixed_hierarchy(h, sampler, 404);
    double expected = 2.0 - p.constants.qw;
    CHECK(std::abs(estimate - expected) < 4.0 * std::sqrt(p.constants.v0 / 1e6));
    CHECK(stats[0].count == 1000000);
    CHECK(stats[0].work_done >=
          stats[0].count * level_work(1.0, p.rates) * (1.0 - 1e-12));
}

TEST_CASE("run_fixed_hierarchy with a deterministic sampler is exact") {
    GbmParams quiet;
    quiet.vol = 0.0;
    GbmMilsteinSampler sampler(quiet);
    Hierarchy h{{1.0, 0.5, 0.25}, {10.0, 10.0, 10.0}, HierarchyKind::integer_feasible};
    auto [estimate, stats] = run_fixed_hierarchy(h, sampler, 1);

    // Telescoping of the deterministic scheme values.
    RngStream r(0, 0, 0);
    double expected = quiet.payoff_scale * std::exp(-quiet.discount_rate) *
                      (gbm_milstein_path(0.25, quiet, r) - 1.0);
    CHECK(estimate == doctest::Approx(expected).epsilon(1e-14));
    for (const auto& s : stats) CHECK(s.var_diff == 0.0);

    Hierarchy bad{{1.0}, {1.0}, HierarchyKind::integer_feasible};
    CHECK_THROWS_AS(run_fixed_hierarchy(bad, sampler, 1), std::invalid_argument);
}

TEST_CASE("computational_theta follows the expected bias") {
    ProblemRates rates{1.0, 2.0, 1, 1.0};
    CHECK(computational_theta(0.1, 1.0, 0.05, rates) == doctest::Approx(0.5));
    CHECK(computational_theta(0.1, 1e-8, 0.05, rates) == doctest::Approx(1.0));
    CHECK_THROWS_AS(computational_theta(0.01, 1.0, 0.05, rates), infeasible_error);

    // With the theorem's finest mesh this is exactly the optimal split.
    Preset p = preset_by_name("ex1-gmres");
    OptimalSetup s = p.setup(0.01);
    s.h_max.reset();
    for (int levels : {0, 2, 4}) {
        auto oh = optimal_hierarchy_fixed_L(s, levels);
        double theta = computational_theta(s.tol, oh.hierarchy.mesh_sizes.back(),
                                           p.constants.qw, p.rates);
        CHECK(theta == doctest::Approx(oh.theta).epsilon(1e-9));
    }
}

TEST_CASE("calibration recovers the synthetic constants") {
    Preset p = preset_by_name("ex1-gmres");
    auto sampler = ex1_sampler();
    Hierarchy h{{0.5, 0.25, 0.125, 0.0625, 0.03125},
                {10000.0, 10000.0, 10000.0, 10000.0, 10000.0},
                HierarchyKind::integer_feasible};
    auto [estimate, stats] = run_fixed_hierarchy(h, sampler, 8080);
    (void)estimate;
    auto fitted = calibrate_constants(stats, p.rates, 3, p.constants.c_alpha);
    CHECK(fitted.qw == doctest::Approx(p.constants.qw).epsilon(0.10));
    CHECK(fitted.qs == doctest::Approx(p.constants.qs).epsilon(0.10));
    CHECK(fitted.v0 == doctest::Approx(p.constants.v0).epsilon(0.10));
}

TEST_CASE("calibration floors and scaling") {
    ProblemRates rates{1.0, 2.0, 1, 1.0};
    // Zero-variance data floors qs and v0.
    std::vector<LevelStats> flat{{0, 100, 1.0, 0.0, 100.0, 1.0},
                                 {1, 100, 0.01, 0.0, 200.0, 0.5},
                                 {2, 100, 0.005, 0.0, 400.0, 0.25}};
    auto fitted = calibrate_constants(flat, rates, 5, 2.0);
    CHECK(fitted.qs == doctest::Approx(1e-12));
    CHECK(fitted.v0 == doctest::Approx(1e-12));
    CHECK(fitted.qw > 0.0);

    // Scaling payoffs by c scales qw by c and qs, v0 by c^2.
    Preset p = preset_by_name("ex1-gmres");
    auto sampler = ex1_sampler();
    Hierarchy h{{0.5, 0.25, 0.125}, {5000.0, 5000.0, 5000.0},
                HierarchyKind::integer_feasible};
    auto stats = run_fixed_hierarchy(h, sampler, 17).second;
    const double c = 3.0;
    auto scaled_stats = stats;
    for (auto& s : scaled_stats) {
        s.mean_diff *= c;
        s.var_diff *= c * c;
    }
    auto base = calibrate_constants(stats, p.rates, 3, 2.0);
    auto scaled = calibrate_constants(scaled_stats, p.rates, 3, 2.0);
    CHECK(scaled.qw == doctest::Approx(c * base.qw).epsilon(1e-9));
    CHECK(scaled.qs == doctest::Approx(c * c * base.qs).epsilon(1e-9));
    CHECK(scaled.v0 == doctest::Approx(c * c * base.v0).epsilon(1e-9));

    // Too few levels.
    std::vector<LevelStats> shallow{{0, 100, 1.0, 0.5, 100.0, 1.0},
                                    {1, 100, 0.1, 0.1, 200.0, 0.5}};
    CHECK_THROWS_AS(calibrate_constants(shallow, rates, 5, 2.0), calibration_error);
}

TEST_CASE("error_report splits the budget") {
    ProblemRates rates{1.0, 2.0, 1, 1.0};
    ModelConstants k{0.05, 0.2, 1.0, 2.0};
    // bias = 0.05 * 0.09 = 0.0045 < 0.005; stat = 2*sqrt(6e-6) just below 0.005.
    std::vector<LevelStats> stats{{0, 100000, 1.0, 0.4, 1e5, 0.5},
                                  {1, 1000, 0.01, 0.002, 1e5, 0.09}};
    auto report = error_report(stats, k, 0.5, 0.01, rates);
    CHECK(report.bias_estimate == doctest::Approx(0.0045));
    CHECK(report.satisfied);

    stats[0].var_diff *= 4.0; // statistical error alone breaks the budget
    auto failed = error_report(stats, k, 0.5, 0.01, rates);
    CHECK(!failed.satisfied);
    CHECK(failed.bias_estimate == report.bias_estimate);
}

TEST_CASE("cmlmc is deterministic across worker counts") {
    Preset p = preset_by_name("ex1-gmres");
    auto sampler = ex1_sampler();
    OptimalSetup setup = p.setup(0.02);
    ModeSpec mode{HierarchyMode::optimal_nongeometric, {}, {}};
    auto a = cmlmc(p.continuation, setup, sampler, mode, p.mesh_rule(), 42, 1);
    auto b = cmlmc(p.continuation, setup, sampler, mode, p.mesh_rule(), 42, 2);
    nlohmann::json ja = a, jb = b;
    CHECK(ja.dump() == jb.dump());
    CHECK(a.estimate == b.estimate);
    CHECK(a.total_work == b.total_work);
}

TEST_CASE("cmlmc terminates and meets its budgets") {
    Preset p = preset_by_name("ex1-gmres");
    auto sampler = ex1_sampler();
    OptimalSetup setup = p.setup(0.01);
    ModeSpec mode{HierarchyMode::optimal_nongeometric, {}, {}};
    auto report = cmlmc(p.continuation, setup, sampler, mode, p.mesh_rule(), 7);

    CHECK(report.bias_estimate + report.stat_error_estimate <= 0.01);
    CHECK(report.theta_used > 0.0);
    CHECK(report.theta_used < 1.0);

    // Work accounting: the total is exactly the sum of the increments.
    double from_trace = 0.0;
    for (const auto& it : report.iterations) from_trace += it.work_increment;
    CHECK(report.total_work == from_trace);

    // Level statistics respect the work model.
    const auto& final_h = report.iterations.back().hierarchy;
    for (const auto& s : report.final_stats) {
        CHECK(s.var_diff >= 0.0);
        CHECK(s.count >= 2);
        CHECK(s.work_done >= s.count * level_work(s.h, p.rates) * (1.0 - 1e-12));
    }

    // Variance budget with the calibrated constants and realized counts.
    const auto& cal = report.iterations.back().calibrated;
    double model_var = 0.0;
    for (const auto& s : report.final_stats)
        model_var += level_variance_model(s.level, final_h, cal, p.rates) / s.count;
    double budget = std::pow(report.theta_used * 0.01 / cal.c_alpha, 2.0);
    CHECK(model_var <= budget * (1.0 + 1e-9));
}

TEST_CASE("cmlmc with a deterministic sampler stops at the schedule end") {
    GbmParams quiet;
    quiet.vol = 0.0;
    GbmMilsteinSampler sampler(quiet);
    Preset p = preset_by_name("ex2");
    OptimalSetup setup = p.setup(0.01);
    ModeSpec mode{HierarchyMode::geometric, {}, {}};
    auto report = cmlmc(p.continuation, setup, sampler, mode, p.mesh_rule(), 5);
    CHECK(report.stat_error_estimate == 0.0);
    int at_target = 0;
    for (const auto& it : report.iterations)
        if (it.tol == 0.01) ++at_target;
    CHECK(at_target == 1);

    RngStream r(0, 0, 0);
    double exact_limit = quiet.payoff_scale * std::exp(-quiet.discount_rate) *
                         (std::exp(quiet.drift) - 1.0);
    CHECK(std::abs(report.estimate - exact_limit) < 0.01);
}

TEST_CASE("sample reuse does not bias the estimator") {
    Preset p = preset_by_name("ex1-gmres");
    auto sampler = ex1_sampler();
    ModeSpec mode{HierarchyMode::optimal_nongeometric, {}, {}};
    const int runs = 200;
    const double tol = 0.04;
    std::vector<double> continued, from_scratch;
    for (int r = 0; r < runs; ++r) {
        OptimalSetup setup = p.setup(tol);
        auto report = cmlmc(p.continuation, setup, sampler, mode, p.mesh_rule(),
                            static_cast<std::uint64_t>(r));
        continued.push_back(report.estimate);

        // Fresh single-pass run on the realized level meshes and counts.
        Hierarchy final_h;
        final_h.kind = HierarchyKind::integer_feasible;
        for (const auto& s : report.final_stats) {
            final_h.mesh_sizes.push_back(s.h);
            final_h.samples.push_back(static_cast<double>(s.count));
        }
        auto [estimate, stats] =
            run_fixed_hierarchy(final_h, sampler, static_cast<std::uint64_t>(r) + 1000000);
        (void)stats;
        from_scratch.push_back(estimate);
    }
    double d = ks_statistic_two_sample(continued, from_scratch);
    double crit = 1.628 * std::sqrt(2.0 / runs);
    CHECK(d < crit);
}

TEST_CASE("cmlmc reports non-convergence with the partial trace") {
    Preset p = preset_by_name("ex1-gmres");
    auto sampler = ex1_sampler();
    OptimalSetup setup = p.setup(0.001);
    ContinuationConfig starved = p.continuation;
    starved.max_iterations = 2; // far too few to walk the schedule down
    ModeSpec mode{HierarchyMode::optimal_nongeometric, {}, {}};
    try {
        cmlmc(starved, setup, sampler, mode, p.mesh_rule(), 11);
        FAIL("expected convergence_error");
    } catch (const convergence_error& e) {
        CHECK(e.partial.iterations.size() == 2);
        CHECK(e.partial.total_work > 0.0);
    }
}

TEST_CASE("sampler failures carry the level context") {
    struct BrokenSampler final : Sampler {
        SamplePair sample_pair(int level, double, double, RngStream&) const override {
            if (level == 1) throw std::runtime_error("backend exploded");
            return {1.0, 0.0, 1.0};
        }
    } broken;
    Hierarchy h{{1.0, 0.5}, {4.0, 4.0}, HierarchyKind::integer_feasible};
    try {
        run_fixed_hierarchy(h, broken, 3);
        FAIL("expected propagation");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("level 1") != std::string::npos);
        CHECK(std::string(e.what()).find("backend exploded") != std::string::npos);
    }
}

TEST_CASE("run report serialization") {
    Preset p = preset_by_name("ex1-gmres");
    auto sampler = ex1_sampler();
    OptimalSetup setup = p.setup(0.05);
    ModeSpec mode{HierarchyMode::geometric, {}, {}};
    auto report = cmlmc(p.continuation, setup, sampler, mode, p.mesh_rule(), 3);

    nlohmann::json j = report;
    CHECK(j.at("estimate").get<double>() == report.estimate);
    CHECK(j.at("iterations").size() == report.iterations.size());
    CHECK(j.at("final_stats").size() == report.final_stats.size());

    std::string csv = iteration_trace_csv(report);
    CHECK(csv.rfind("iteration,tol,L,theta,bias,stat,work\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    CHECK(lines == report.iterations.size() + 1);
}
