#pragma once

#include <cmath>

#include "srsrr/error.hpp"
#include "srsrr/rng.hpp"
#include "srsrr/special.hpp"

namespace srsrr {

// Distribution of the first coordinate of a standard J-dimensional normal
// conditioned on the squared norm being at most `threshold`.
struct TruncSpec {
    int dim = 1;              // J
    double threshold = kInf;  // a; +inf means no truncation

    void validate() const {
        if (dim < 1) throw ValidationError("TruncSpec: dimension must be >= 1");
        if (!(threshold > 0.0)) throw ValidationError("TruncSpec: threshold must be positive");
    }
};

namespace detail {

// Beta(1/2, (J-1)/2) draw: squared first coordinate of a uniform direction
// on the (J-1)-sphere.
inline double squared_direction_cosine(int j, RngStream& rng) {
    if (j == 1) return 1.0;
    if (j == 2) {
        // Beta(1/2, 1/2) quantile is sin^2(pi u / 2)
        const double s = std::sin(1.570796326794896619 * rng.uniform01());
        return s * s;
    }
    const double z = rng.normal();
    const double g1 = z * z; // chi^2_1
    const double g2 = 2.0 * rng.gamma_shape_ge1(0.5 * (j - 1)); // chi^2_{j-1}, j >= 3
    return g1 / (g1 + g2);
}

} // namespace detail

// Exact draw of L_{J,a} by radial decomposition: the squared radius is a
// chi^2_J truncated to [0, a] (sampled through its inverse CDF, so no
// rejection loop even at acceptance levels of 0.001), the direction cosine
// is Beta(1/2,(J-1)/2), and the sign is symmetric.
inline double sample_trunc_first_coord(const TruncSpec& spec, RngStream& rng) {
    spec.validate();
    const double accept = chi2_cdf(spec.dim, spec.threshold);
    if (accept <= 0.0) throw NumericError("sample_trunc_first_coord: zero acceptance region");
    const double u = rng.uniform01() * accept;
    const double r2 = u > 0.0 ? chi2_quantile(spec.dim, u) : 0.0;
    const double b = detail::squared_direction_cosine(spec.dim, rng);
    const double magnitude = std::sqrt(r2 * b);
    return (rng.next_u64() & 1u) ? magnitude : -magnitude;
}

} // namespace srsrr
