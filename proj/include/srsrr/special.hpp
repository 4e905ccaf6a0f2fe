#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "srsrr/error.hpp"

namespace srsrr {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

namespace detail {

// Regularized lower incomplete gamma P(a, x).
// Series expansion for x < a + 1, Lentz continued fraction otherwise.
// Absolute error well below 1e-13 over the ranges used here.
inline double gamma_p(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    const double log_prefix = a * std::log(x) - x - std::lgamma(a);
    if (x < a + 1.0) {
        // P(a,x) = x^a e^-x / Gamma(a) * sum_n x^n / (a(a+1)...(a+n))
        double term = 1.0 / a;
        double sum = term;
        double ap = a;
        for (int n = 0; n < 500; ++n) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::fabs(term) < std::fabs(sum) * 1e-17) break;
        }
        return std::exp(log_prefix) * sum;
    }
    // Q(a,x) via continued fraction (Lentz), P = 1 - Q.
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-17) break;
    }
    return 1.0 - std::exp(log_prefix) * h;
}

} // namespace detail

// P(chi^2_J <= x).
inline double chi2_cdf(int j, double x) {
    if (j < 1) throw NumericError("chi2_cdf: degrees of freedom must be >= 1");
    if (x < 0.0) throw NumericError("chi2_cdf: x must be nonnegative");
    if (std::isinf(x)) return 1.0;
    return detail::gamma_p(0.5 * j, 0.5 * x);
}

inline double chi2_pdf(int j, double x) {
    if (x < 0.0) return 0.0;
    if (x == 0.0) return j == 2 ? 0.5 : (j == 1 ? kInf : 0.0);
    const double half_j = 0.5 * j;
    return std::exp((half_j - 1.0) * std::log(x) - 0.5 * x - half_j * std::log(2.0) -
                    std::lgamma(half_j));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Inverse standard normal CDF (Wichura, algorithm AS 241, double precision).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw NumericError("normal_quantile: p must be in (0,1)");
    const double q = p - 0.5;
    double r;
    if (std::fabs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                   1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                 1.3314166789178437745e+2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                   5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                 4.2313330701600911252e+1) * r + 1.0);
    }
    r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double value;
    if (r <= 5.0) {
        r -= 1.6;
        value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                      2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                    3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                  4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
                (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                      1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                    6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                  2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                      1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                    2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                  5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
                (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                      1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                    1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                  5.99832206555887937690e-1) * r + 1.0);
    }
    return q < 0.0 ? -value : value;
}

// Quantile of chi^2_J: the x with chi2_cdf(j, x) = p.
// Closed forms at j = 1, 2; otherwise Wilson-Hilferty start plus
// safeguarded Newton on the CDF.
inline double chi2_quantile(int j, double p) {
    if (j < 1) throw NumericError("chi2_quantile: degrees of freedom must be >= 1");
    if (!(p > 0.0 && p < 1.0)) throw NumericError("chi2_quantile: p must be in (0,1)");
    if (j == 1) {
        const double z = normal_quantile(0.5 * (1.0 + p));
        return z * z;
    }
    if (j == 2) return -2.0 * std::log1p(-p);

    const double z = normal_quantile(p);
    const double c = 2.0 / (9.0 * j);
    double x = j * std::pow(1.0 - c + z * std::sqrt(c), 3.0);
    if (!(x > 0.0)) x = 1e-8;

    double lo = 0.0;
    double hi = kInf;
    for (int it = 0; it < 200; ++it) {
        const double f = chi2_cdf(j, x) - p;
        if (f > 0.0) hi = x; else lo = x;
        const double dfdx = chi2_pdf(j, x);
        double step = dfdx > 0.0 ? f / dfdx : 0.0;
        double next = x - step;
        if (!(next > lo && (next < hi))) {
            next = std::isinf(hi) ? 2.0 * x : 0.5 * (lo + hi);
        }
        if (std::fabs(next - x) <= 1e-14 * (1.0 + std::fabs(x))) {
            x = next;
            break;
        }
        x = next;
    }
    return x;
}

// nu_{J,a} = P(chi^2_{J+2} <= a) / P(chi^2_J <= a), the variance of the
// first coordinate of a standard J-normal conditioned on squared norm <= a.
inline double nu_factor(int j, double a) {
    if (j < 1) throw NumericError("nu_factor: dimension must be >= 1");
    if (!(a > 0.0)) throw NumericError("nu_factor: threshold must be positive");
    if (std::isinf(a)) return 1.0;
    const double denom = chi2_cdf(j, a);
    if (denom <= 0.0) throw NumericError("nu_factor: zero acceptance probability");
    return chi2_cdf(j + 2, a) / denom;
}

} // namespace srsrr
