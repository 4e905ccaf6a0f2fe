#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace srsrr {

// Deterministic stream family: a stream is fully determined by
// (master_seed, stream_index), independent of call sites or thread
// scheduling.  Streams with distinct indices are derived through
// splitmix64, so they do not overlap in practice.
//
// Generator: xoshiro256++ seeded from a splitmix64 expansion of the
// (seed, index) pair.
class RngStream {
public:
    RngStream() : RngStream(0, 0) {}

    RngStream(std::uint64_t master_seed, std::uint64_t stream_index)
        : master_seed_(master_seed), stream_index_(stream_index) {
        std::uint64_t sm = master_seed ^ mix64(stream_index + 0x9E3779B97F4A7C15ULL);
        for (auto& w : s_) w = splitmix_next(sm);
        if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
        have_cached_normal_ = false;
    }

    std::uint64_t master_seed() const { return master_seed_; }
    std::uint64_t stream_index() const { return stream_index_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1]; safe as a log() argument.
    double uniform_pos() { return 1.0 - uniform01(); }

    // Unbiased integer in [0, bound) via rejection.
    std::uint64_t uniform_below(std::uint64_t bound) {
        const std::uint64_t threshold = (-bound) % bound;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // Standard normal, Box-Muller with one cached value.
    double normal() {
        if (have_cached_normal_) {
            have_cached_normal_ = false;
            return cached_normal_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        const double theta = 2.0 * pi() * uniform01();
        cached_normal_ = r * std::sin(theta);
        have_cached_normal_ = true;
        return r * std::cos(theta);
    }

    double exponential() { return -std::log(uniform_pos()); }

    // chi-squared with j degrees of freedom (sum of squared normals;
    // only used for small j).
    double chi_squared(int j) {
        double s = 0.0;
        for (int i = 0; i < j; ++i) {
            double z = normal();
            s += z * z;
        }
        return s;
    }

    // Student t with 3 degrees of freedom: normal / sqrt(chisq_3 / 3).
    double student_t3() { return normal() / std::sqrt(chi_squared(3) / 3.0); }

    // Gamma(shape, 1) for shape >= 1, Marsaglia-Tsang.
    double gamma_shape_ge1(double shape) {
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform_pos();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
        }
    }

private:
    static constexpr double pi() { return 3.141592653589793238462643383279502884; }

    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix_next(std::uint64_t& state) {
        state += 0x9E3779B97F4A7C15ULL;
        return mix64(state);
    }

    static std::uint64_t mix64(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t master_seed_;
    std::uint64_t stream_index_;
    std::uint64_t s_[4];
    bool have_cached_normal_;
    double cached_normal_ = 0.0;
};

} // namespace srsrr
