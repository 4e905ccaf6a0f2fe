#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "srsrr/special.hpp"
#include "srsrr/truncnorm.hpp"

using namespace srsrr;

namespace {

struct MomentSummary {
    double mean, var, se_mean, se_var;
};

MomentSummary draw_moments(const TruncSpec& spec, int n, RngStream& rng) {
    double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = sample_trunc_first_coord(spec, rng);
        sum += x;
        sum2 += x * x;
        sum4 += x * x * x * x;
    }
    MomentSummary m;
    m.mean = sum / n;
    m.var = sum2 / n - m.mean * m.mean;
    m.se_mean = std::sqrt(m.var / n);
    const double var_of_sq = sum4 / n - (sum2 / n) * (sum2 / n);
    m.se_var = std::sqrt(var_of_sq / n);
    return m;
}

} // namespace

TEST_CASE("untruncated sampler reproduces the standard normal") {
    RngStream rng(101, 0);
    for (int j : {1, 2, 3, 6}) {
        TruncSpec spec{j, kInf};
        const auto m = draw_moments(spec, 1000000, rng);
        CHECK(std::fabs(m.mean) < 4.0 * m.se_mean);
        CHECK(std::fabs(m.var - 1.0) < 4.0 * m.se_var);
    }
}

TEST_CASE("empirical variance matches nu(J,a) within 4 standard errors") {
    RngStream rng(202, 1);
    struct Case { int j; double a; };
    for (const Case c : {Case{1, 0.5}, Case{2, 0.0201007}, Case{2, 1.0}, Case{4, 2.0},
                         Case{7, 5.0}}) {
        TruncSpec spec{c.j, c.a};
        const auto m = draw_moments(spec, 1000000, rng);
        const double expected = nu_factor(c.j, c.a);
        INFO("J=" << c.j << " a=" << c.a);
        CHECK(std::fabs(m.mean) < 4.0 * m.se_mean);
        CHECK(std::fabs(m.var - expected) < 4.0 * m.se_var);
    }
}

TEST_CASE("no draw ever implies a squared norm beyond the threshold") {
    RngStream rng(303, 2);
    for (int j : {1, 2, 5}) {
        const double a = 1.3;
        TruncSpec spec{j, a};
        for (int i = 0; i < 200000; ++i) {
            const double x = sample_trunc_first_coord(spec, rng);
            // |first coordinate| <= norm <= sqrt(a), structurally
            REQUIRE(x * x <= a + 1e-12);
        }
    }
}

TEST_CASE("spec validation") {
    RngStream rng(1, 1);
    CHECK_THROWS_AS(sample_trunc_first_coord(TruncSpec{0, 1.0}, rng), ValidationError);
    CHECK_THROWS_AS(sample_trunc_first_coord(TruncSpec{2, 0.0}, rng), ValidationError);
    CHECK_THROWS_AS(sample_trunc_first_coord(TruncSpec{2, -1.0}, rng), ValidationError);
}
