#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "srsrr/special.hpp"

using namespace srsrr;

TEST_CASE("chi2_cdf closed forms at J=2 and J=4") {
    // P(chi^2_2 <= a) = 1 - exp(-a/2)
    for (double a : {0.01, 0.0201007, 0.5, 1.0, 3.0, 10.0}) {
        CHECK(chi2_cdf(2, a) == Catch::Approx(1.0 - std::exp(-a / 2.0)).margin(1e-12));
        // P(chi^2_4 <= a) = 1 - exp(-a/2)(1 + a/2)
        CHECK(chi2_cdf(4, a) ==
              Catch::Approx(1.0 - std::exp(-a / 2.0) * (1.0 + a / 2.0)).margin(1e-12));
    }
    CHECK(chi2_cdf(4, 0.0201007) == Catch::Approx(5.0166e-5).epsilon(1e-3));
}

TEST_CASE("chi2_cdf endpoints and monotonicity") {
    for (int j : {1, 2, 3, 4, 7, 20}) {
        CHECK(chi2_cdf(j, 0.0) == 0.0);
        CHECK(chi2_cdf(j, kInf) == 1.0);
        double prev = -1.0;
        for (double x = 0.0; x <= 50.0; x += 0.37) {
            const double p = chi2_cdf(j, x);
            CHECK(p >= prev);
            CHECK(p <= 1.0);
            prev = p;
        }
    }
}

TEST_CASE("chi2_quantile closed forms") {
    CHECK(chi2_quantile(2, 0.01) == Catch::Approx(-2.0 * std::log(0.99)).margin(1e-12));
    CHECK(chi2_quantile(2, 0.5) == Catch::Approx(2.0 * std::log(2.0)).margin(1e-12));
}

TEST_CASE("chi2_quantile round-trips through the cdf") {
    for (int j : {1, 2, 3, 4, 5, 10, 40}) {
        for (double p : {1e-6, 1e-3, 0.01, 0.1, 0.5, 0.9, 0.99, 0.9999}) {
            const double x = chi2_quantile(j, p);
            CHECK(chi2_cdf(j, x) == Catch::Approx(p).margin(1e-10));
        }
    }
}

TEST_CASE("chi2_quantile monotone in p") {
    for (int j : {1, 3, 8}) {
        double prev = 0.0;
        for (double p = 0.02; p < 1.0; p += 0.02) {
            const double x = chi2_quantile(j, p);
            CHECK(x > prev);
            prev = x;
        }
    }
}

TEST_CASE("chi2 input validation") {
    CHECK_THROWS_AS(chi2_cdf(0, 1.0), NumericError);
    CHECK_THROWS_AS(chi2_cdf(2, -0.1), NumericError);
    CHECK_THROWS_AS(chi2_quantile(2, 0.0), NumericError);
    CHECK_THROWS_AS(chi2_quantile(2, 1.0), NumericError);
}

TEST_CASE("nu_factor closed forms and limits") {
    CHECK(nu_factor(3, kInf) == 1.0);
    // nu_{2,a} = [1 - e^{-a/2}(1+a/2)] / [1 - e^{-a/2}]
    const double a = 0.0201007;
    const double expected =
        (1.0 - std::exp(-a / 2.0) * (1.0 + a / 2.0)) / (1.0 - std::exp(-a / 2.0));
    CHECK(nu_factor(2, a) == Catch::Approx(expected).margin(1e-12));
    CHECK(nu_factor(2, a) == Catch::Approx(0.0050166).epsilon(1e-3));
    // nu_{4,a} via the J=4 and J=6 closed forms
    const double num = 1.0 - std::exp(-a / 2.0) * (1.0 + a / 2.0 + a * a / 8.0);
    const double den = 1.0 - std::exp(-a / 2.0) * (1.0 + a / 2.0);
    CHECK(nu_factor(4, a) == Catch::Approx(num / den).margin(1e-12));
}

TEST_CASE("nu_factor strictly increasing in a, bounded by one") {
    for (int j : {1, 2, 5}) {
        double prev = 0.0;
        for (double a = 0.05; a < 30.0; a *= 1.6) {
            const double v = nu_factor(j, a);
            CHECK(v > prev);
            CHECK(v <= 1.0);
            prev = v;
        }
    }
    CHECK_THROWS_AS(nu_factor(2, 0.0), NumericError);
}

TEST_CASE("normal quantile agrees with the cdf") {
    for (double p : {1e-9, 1e-4, 0.025, 0.3, 0.5, 0.8, 0.975, 1.0 - 1e-6}) {
        const double z = normal_quantile(p);
        CHECK(normal_cdf(z) == Catch::Approx(p).margin(1e-12));
    }
    CHECK(normal_quantile(0.975) == Catch::Approx(1.959963984540054).margin(1e-12));
    CHECK_THROWS_AS(normal_quantile(0.0), NumericError);
}
