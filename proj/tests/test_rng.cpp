#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "srsrr/rng.hpp"

using namespace srsrr;

TEST_CASE("identical (seed, index) gives byte-identical sequences") {
    RngStream a(123456789, 17);
    RngStream b(123456789, 17);
    for (int i = 0; i < 10000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("distinct stream indices decorrelate") {
    RngStream a(99, 0);
    RngStream b(99, 1);
    int agree = 0;
    const int n = 4096;
    for (int i = 0; i < n; ++i)
        if ((a.next_u64() & 1u) == (b.next_u64() & 1u)) ++agree;
    // expectation n/2, sd = sqrt(n)/2 = 32; allow 6 sd
    CHECK(std::fabs(agree - n / 2) < 6 * 32);
}

TEST_CASE("uniform01 lies in [0,1) with mean near one half") {
    RngStream rng(5, 5);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(sum / n == Catch::Approx(0.5).margin(4.0 / std::sqrt(12.0 * n)));
}

TEST_CASE("uniform_below is unbiased over small ranges") {
    RngStream rng(31, 2);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) ++counts[rng.uniform_below(7)];
    for (int c : counts) CHECK(std::fabs(c - n / 7.0) < 5.0 * std::sqrt(n / 7.0));
}

TEST_CASE("normal draws have unit variance and zero mean") {
    RngStream rng(77, 8);
    double sum = 0.0, sumsq = 0.0;
    const int n = 400000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sumsq += z * z;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(mean == Catch::Approx(0.0).margin(4.0 / std::sqrt(static_cast<double>(n))));
    CHECK(var == Catch::Approx(1.0).margin(4.0 * std::sqrt(2.0 / n)));
}

TEST_CASE("student t3 has the right scale") {
    RngStream rng(123, 9);
    // var(t_3) = 3, so the empirical second moment over many draws should be
    // near 3; t_3 has heavy tails, allow a generous band.
    double sumsq = 0.0;
    const int n = 400000;
    for (int i = 0; i < n; ++i) {
        const double t = rng.student_t3();
        sumsq += t * t;
    }
    CHECK(sumsq / n == Catch::Approx(3.0).epsilon(0.15));
}

TEST_CASE("gamma sampler matches mean and variance") {
    RngStream rng(2024, 3);
    for (double shape : {1.0, 1.5, 3.0, 7.5}) {
        double sum = 0.0, sumsq = 0.0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) {
            const double g = rng.gamma_shape_ge1(shape);
            sum += g;
            sumsq += g * g;
        }
        const double mean = sum / n;
        const double var = sumsq / n - mean * mean;
        CHECK(mean == Catch::Approx(shape).epsilon(0.02));
        CHECK(var == Catch::Approx(shape).epsilon(0.06));
    }
}
