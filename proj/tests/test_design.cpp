#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "srsrr/design.hpp"
#include "srsrr/moments.hpp"
#include "test_helpers.hpp"

using namespace srsrr;

namespace {

Population one_stratum_0123() {
    CovariateSchema s;
    s.mode = PopulationMode::oracle;
    s.j1 = 1;
    s.j2 = 1;
    PopulationBuilder b(s);
    for (int i = 0; i < 4; ++i)
        b.add_oracle_unit("u" + std::to_string(i), "A", {1.0 * i}, {1.0 * i}, {}, {}, 1.0, 0.0);
    return b.build();
}

ResolvedThresholds no_rejection() { return ResolvedThresholds{}; }

SampleSelection make_selection(const Population& pop, const std::vector<std::vector<int>>& ids) {
    SampleSelection sel;
    sel.z.assign(pop.size(), 0);
    sel.sampled = ids;
    for (const auto& stratum : ids)
        for (int i : stratum) sel.z[i] = 1;
    return sel;
}

Assignment make_assignment(const Population& pop, const std::vector<std::vector<int>>& treated) {
    Assignment asg;
    asg.t.assign(pop.size(), 0);
    asg.treated = treated;
    for (const auto& stratum : treated)
        for (int i : stratum) asg.t[i] = 1;
    return asg;
}

} // namespace

TEST_CASE("hand-computed M_S on the four-point stratum") {
    Population pop = one_stratum_0123();
    DesignPlan plan;
    plan.strata = {{"A", 2, 1}};
    ResolvedPlan rp = validate_plan(pop, plan, PlanStrictness::design_only);
    auto moments = stratum_moments(pop);
    // sample {2,3}: delta = 2.5 - 1.5 = 1, metric = (1/2 - 1/4) * 5/3 = 5/12
    SampleSelection sel = make_selection(pop, {{2, 3}});
    CHECK(mahalanobis_sampling(pop, moments, rp, sel) == Catch::Approx(2.4).margin(1e-12));
    // balanced sample {0,3} has mean 1.5 = population mean -> M_S = 0
    SampleSelection balanced = make_selection(pop, {{0, 3}});
    CHECK(mahalanobis_sampling(pop, moments, rp, balanced) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("hand-computed M_T on the four-point stratum") {
    Population pop = one_stratum_0123();
    DesignPlan plan;
    plan.strata = {{"A", 4, 2}};
    ResolvedPlan rp = validate_plan(pop, plan);
    SampleSelection sel = make_selection(pop, {{0, 1, 2, 3}});
    Assignment asg = make_assignment(pop, {{2, 3}});
    // tau_X = 2.5 - 0.5 = 2, metric = (4 / (2*2)) * 5/3 = 5/3, M_T = 4 / (5/3)
    CHECK(mahalanobis_assignment(pop, sel, rp, asg) == Catch::Approx(2.4).margin(1e-12));
    Assignment balanced = make_assignment(pop, {{0, 3}});
    CHECK(mahalanobis_assignment(pop, sel, rp, balanced) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("singular sampling metric is reported") {
    Population pop = one_stratum_0123();
    DesignPlan plan;
    plan.strata = {{"A", 4, 2}}; // n = N -> metric factor 1/n - 1/N = 0
    ResolvedPlan rp = validate_plan(pop, plan);
    auto moments = stratum_moments(pop);
    SampleSelection sel = make_selection(pop, {{0, 1, 2, 3}});
    CHECK_THROWS_AS(mahalanobis_sampling(pop, moments, rp, sel), SingularMatrixError);
}

TEST_CASE("M_S and M_T are invariant under nonsingular affine maps") {
    // two strata, two-dimensional W = X
    CovariateSchema s;
    s.mode = PopulationMode::oracle;
    s.j1 = 2;
    s.j2 = 2;
    PopulationBuilder builder(s);
    RngStream rng(404, 0);
    CovariateSchema s2 = s;
    PopulationBuilder mapped(s2);
    // affine map: [2 1; -1 3] v + [5, -7]
    auto apply = [](double a, double b) {
        return Vector{2.0 * a + 1.0 * b + 5.0, -1.0 * a + 3.0 * b - 7.0};
    };
    for (int k = 0; k < 2; ++k) {
        for (int i = 0; i < 6; ++i) {
            const double a = rng.normal(), b = rng.normal();
            const std::string id = "u" + std::to_string(k * 6 + i);
            const std::string stratum = k ? "B" : "A";
            builder.add_oracle_unit(id, stratum, {a, b}, {a, b}, {}, {}, 0.0, 0.0);
            const Vector m = apply(a, b);
            mapped.add_oracle_unit(id, stratum, m, m, {}, {}, 0.0, 0.0);
        }
    }
    Population pop = builder.build(), pop2 = mapped.build();
    DesignPlan plan;
    plan.strata = {{"A", 4, 2}, {"B", 4, 2}};
    ResolvedPlan rp = validate_plan(pop, plan);
    auto m1 = stratum_moments(pop), m2 = stratum_moments(pop2);

    SampleSelection sel = make_selection(pop, {{0, 2, 3, 5}, {6, 7, 9, 10}});
    CHECK(mahalanobis_sampling(pop, m1, rp, sel) ==
          Catch::Approx(mahalanobis_sampling(pop2, m2, rp, sel)).epsilon(1e-10));
    Assignment asg = make_assignment(pop, {{0, 3}, {7, 9}});
    CHECK(mahalanobis_assignment(pop, sel, rp, asg) ==
          Catch::Approx(mahalanobis_assignment(pop2, sel, rp, asg)).epsilon(1e-10));
}

TEST_CASE("stratified sampling: every subset equiprobable, strata independent") {
    CovariateSchema s;
    s.mode = PopulationMode::oracle;
    s.j1 = 1;
    s.j2 = 1;
    PopulationBuilder b(s);
    for (int i = 0; i < 8; ++i)
        b.add_oracle_unit("u" + std::to_string(i), i < 4 ? "A" : "B", {1.0 * i}, {1.0 * i}, {},
                          {}, 0.0, 0.0);
    Population pop = b.build();
    DesignPlan plan;
    plan.strata = {{"A", 2, 1}, {"B", 2, 1}};
    ResolvedPlan rp = validate_plan(pop, plan, PlanStrictness::design_only);
    auto moments = stratum_moments(pop);
    DesignEngine engine(pop, moments, rp, no_rejection());
    RngStream rng(2718, 0);

    std::map<std::pair<int, int>, int> joint;
    std::map<int, int> marg_a, marg_b;
    auto subset_code = [](const std::vector<int>& ids) {
        return (ids[0] % 4) * 4 + (ids[1] % 4);
    };
    const int R = 120000;
    for (int r = 0; r < R; ++r) {
        SampleSelection sel = engine.stratified_sample(rng);
        const int ca = subset_code(sel.sampled[0]);
        const int cb = subset_code(sel.sampled[1]);
        ++joint[{ca, cb}];
        ++marg_a[ca];
        ++marg_b[cb];
    }
    REQUIRE(marg_a.size() == 6);
    REQUIRE(marg_b.size() == 6);
    const double se6 = std::sqrt((1.0 / 6) * (5.0 / 6) / R);
    for (const auto& [code, count] : marg_a)
        CHECK(std::fabs(count / double(R) - 1.0 / 6) < 5 * se6);
    // independence: joint frequency ~ product of marginals
    for (const auto& [codes, count] : joint) {
        const double expected =
            marg_a[codes.first] / double(R) * marg_b[codes.second] / double(R);
        const double se = std::sqrt(expected * (1 - expected) / R);
        CHECK(std::fabs(count / double(R) - expected) < 5 * se + 1e-9);
    }
}

TEST_CASE("full-census plan selects everything") {
    Population pop = one_stratum_0123();
    DesignPlan plan;
    plan.strata = {{"A", 4, 2}};
    ResolvedPlan rp = validate_plan(pop, plan);
    auto moments = stratum_moments(pop);
    DesignEngine engine(pop, moments, rp, no_rejection());
    RngStream rng(1, 2);
    SampleSelection sel = engine.stratified_sample(rng);
    for (int i = 0; i < 4; ++i) CHECK(sel.z[i] == 1);
}

TEST_CASE("per-unit inclusion frequency approximates f_k") {
    Population pop = testutil::small_twostage_population();
    DesignPlan plan;
    plan.strata = {{"A", 4, 2}, {"B", 4, 2}};
    ResolvedPlan rp = validate_plan(pop, plan);
    auto moments = stratum_moments(pop);
    DesignEngine engine(pop, moments, rp, no_rejection());
    RngStream rng(33, 4);
    std::vector<int> hits(pop.size(), 0);
    const int R = 60000;
    for (int r = 0; r < R; ++r) {
        SampleSelection sel = engine.stratified_sample(rng);
        for (int i = 0; i < pop.size(); ++i) hits[i] += sel.z[i];
    }
    const double f = 4.0 / 6.0;
    const double se = std::sqrt(f * (1 - f) / R);
    for (int i = 0; i < pop.size(); ++i)
        CHECK(std::fabs(hits[i] / double(R) - f) < 4.5 * se);
}

TEST_CASE("treated frequency approximates e_k1 under plain randomization") {
    Population pop = testutil::small_twostage_population();
    DesignPlan plan;
    plan.strata = {{"A", 4, 2}, {"B", 4, 2}};
    ResolvedPlan rp = validate_plan(pop, plan);
    auto moments = stratum_moments(pop);
    DesignEngine engine(pop, moments, rp, no_rejection());
    RngStream rng(55, 6);
    std::vector<int> treated(pop.size(), 0), sampled(pop.size(), 0);
    const int R = 60000;
    for (int r = 0; r < R; ++r) {
        auto [sel, asg] = engine.draw(rng);
        CHECK(asg.attempts == 1);
        for (int i = 0; i < pop.size(); ++i) {
            sampled[i] += sel.z[i];
            treated[i] += asg.t[i];
        }
    }
    for (int i = 0; i < pop.size(); ++i) {
        const double cond = treated[i] / double(sampled[i]);
        const double se = std::sqrt(0.25 / sampled[i]);
        CHECK(std::fabs(cond - 0.5) < 4.5 * se);
    }
}

TEST_CASE("rejective sampling accepts only below the threshold and repeats geometrically") {
    Population pop = testutil::medium_population();
    DesignPlan plan;
    plan.strata = {{"A", 20, 10}, {"B", 20, 10}};
    plan.sampling.p = 0.2;
    plan.assignment.p = 0.25;
    ResolvedPlan rp = validate_plan(pop, plan);
    ResolvedThresholds th = resolve_thresholds(plan, pop.dim(Block::W), pop.dim(Block::X));
    auto moments = stratum_moments(pop);
    DesignEngine engine(pop, moments, rp, th);
    RngStream rng(66, 7);

    // calibration example: a = chi^2 quantile at the acceptance level
    CHECK(th.a_s == Catch::Approx(chi2_quantile(1, 0.2)));
    CHECK(calibrate_threshold(1, 0.01) == Catch::Approx(chi2_quantile(1, 0.01)));
    CHECK(std::isinf(calibrate_threshold(3, 1.0)));

    double total_attempts_s = 0.0, total_attempts_t = 0.0;
    const int R = 4000;
    for (int r = 0; r < R; ++r) {
        SampleSelection sel = engine.rejective_sample(rng);
        REQUIRE(sel.m_s <= th.a_s);
        // stored balance must match a from-scratch recomputation
        REQUIRE(mahalanobis_sampling(pop, moments, rp, sel) ==
                Catch::Approx(sel.m_s).margin(1e-10));
        Assignment asg = engine.rerandomize(sel, rng);
        REQUIRE(asg.m_t <= th.a_t);
        REQUIRE(mahalanobis_assignment(pop, sel, rp, asg) ==
                Catch::Approx(asg.m_t).margin(1e-10));
        total_attempts_s += sel.attempts;
        total_attempts_t += asg.attempts;
    }
    // geometric oracle: mean attempts = 1 / acceptance rate; at n = 40 the
    // asymptotic calibration is accurate to within a few percent
    CHECK(total_attempts_s / R == Catch::Approx(5.0).epsilon(0.2));
    CHECK(total_attempts_t / R == Catch::Approx(4.0).epsilon(0.2));
}

TEST_CASE("rejective sampling with infinite threshold always accepts at once") {
    Population pop = testutil::small_twostage_population();
    DesignPlan plan;
    plan.strata = {{"A", 4, 2}, {"B", 4, 2}};
    plan.sampling.p = 1.0;
    ResolvedPlan rp = validate_plan(pop, plan);
    ResolvedThresholds th = resolve_thresholds(plan, 1, 1);
    auto moments = stratum_moments(pop);
    DesignEngine engine(pop, moments, rp, th);
    RngStream rng(77, 8);
    for (int r = 0; r < 200; ++r) CHECK(engine.rejective_sample(rng).attempts == 1);
}

TEST_CASE("exhausted rejection loop carries the best draw") {
    Population pop = testutil::small_twostage_population();
    DesignPlan plan;
    plan.strata = {{"A", 4, 2}, {"B", 4, 2}};
    plan.sampling.a = 1e-9; // effectively unattainable
    plan.max_attempts = 25;
    ResolvedPlan rp = validate_plan(pop, plan);
    ResolvedThresholds th = resolve_thresholds(plan, 1, 1);
    auto moments = stratum_moments(pop);
    DesignEngine engine(pop, moments, rp, th);
    RngStream rng(88, 9);
    try {
        engine.rejective_sample(rng);
        FAIL("expected MaxAttemptsError");
    } catch (const MaxAttemptsError& e) {
        CHECK(e.best_selection.m_s > 1e-9);
        CHECK(e.best_selection.m_s < kInf);
        // the carried draw is the lowest-M_S attempt; verify it is at least a
        // valid selection
        CHECK(e.best_selection.sampled.size() == 2);
    }
}

TEST_CASE("joint draw enforces both criteria simultaneously") {
    Population pop = testutil::small_twostage_population();
    DesignPlan plan;
    plan.strata = {{"A", 4, 2}, {"B", 4, 2}};
    SECTION("no thresholds: single attempt") {
        ResolvedPlan rp = validate_plan(pop, plan);
        ResolvedThresholds th = resolve_thresholds(plan, 1, 1);
        auto moments = stratum_moments(pop);
        DesignEngine engine(pop, moments, rp, th);
        RngStream rng(99, 10);
        auto [sel, asg] = engine.joint_srsrr(rng);
        CHECK(sel.attempts == 1);
    }
    SECTION("finite thresholds: acceptance and attempt counts") {
        Population med = testutil::medium_population();
        DesignPlan mplan;
        mplan.strata = {{"A", 20, 10}, {"B", 20, 10}};
        mplan.sampling.p = 0.5;
        mplan.assignment.p = 0.5;
        ResolvedPlan rp = validate_plan(med, mplan);
        ResolvedThresholds th = resolve_thresholds(mplan, 1, 1);
        auto moments = stratum_moments(med);
        DesignEngine engine(med, moments, rp, th);
        RngStream rng(111, 11);
        double attempts = 0.0;
        const int R = 3000;
        for (int r = 0; r < R; ++r) {
            auto [sel, asg] = engine.joint_srsrr(rng);
            REQUIRE(sel.m_s <= th.a_s);
            REQUIRE(asg.m_t <= th.a_t);
            attempts += sel.attempts;
        }
        // expected attempts ~ 1/(p_S p_T) = 4 at the asymptotic levels
        CHECK(attempts / R == Catch::Approx(4.0).epsilon(0.15));
    }
}

TEST_CASE("draw export has the documented header") {
    Population pop = testutil::small_twostage_population();
    DesignPlan plan;
    plan.strata = {{"A", 4, 2}, {"B", 4, 2}};
    ResolvedPlan rp = validate_plan(pop, plan);
    auto moments = stratum_moments(pop);
    DesignEngine engine(pop, moments, rp, no_rejection());
    RngStream rng(123, 12);
    auto [sel, asg] = engine.draw(rng);
    const std::string csv = export_draw_csv(pop, sel, &asg);
    CHECK(csv.rfind("unit_id,z,t,attempt_count,m_s,m_t\n", 0) == 0);
}
