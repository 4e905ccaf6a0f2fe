#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "srsrr/design.hpp"
#include "srsrr/linalg.hpp"
#include "srsrr/moments.hpp"
#include "srsrr/plan.hpp"
#include "srsrr/population.hpp"
#include "srsrr/truncnorm.hpp"

namespace srsrr {

// Observed outcomes of a realized draw in oracle mode: y_i = t_i ? Y_i(1) : Y_i(0),
// defined for sampled units only.
inline Vector realize_outcomes(const Population& pop, const SampleSelection& sel,
                               const Assignment& asg) {
    Vector y(pop.size(), std::nan(""));
    for (int i = 0; i < pop.size(); ++i)
        if (sel.z[i]) y[i] = asg.t[i] ? pop.y1(i) : pop.y0(i);
    return y;
}

// Reconstruct the realized design and outcomes from an analysis-mode file.
struct ObservedDesign {
    SampleSelection selection;
    Assignment assignment;
    Vector outcomes;
};

inline ObservedDesign observed_design(const Population& pop) {
    if (!pop.has_observed_data())
        throw ValidationError("population carries no observed z/t/y columns");
    ObservedDesign od;
    od.selection.z.assign(pop.size(), 0);
    od.assignment.t.assign(pop.size(), 0);
    od.selection.sampled.resize(pop.num_strata());
    od.assignment.treated.resize(pop.num_strata());
    od.outcomes.assign(pop.size(), std::nan(""));
    for (int i = 0; i < pop.size(); ++i) {
        if (pop.z_obs(i) != 1) continue;
        const int k = pop.stratum_of(i);
        od.selection.z[i] = 1;
        od.selection.sampled[k].push_back(i);
        od.outcomes[i] = pop.y_obs(i);
        if (pop.t_obs(i) == 1) {
            od.assignment.t[i] = 1;
            od.assignment.treated[k].push_back(i);
        }
    }
    return od;
}

// Plan implied by an observed design (used when analyzing data files).
inline ResolvedPlan plan_from_selection(const Population& pop, const ObservedDesign& od,
                                        PlanStrictness strictness = PlanStrictness::full) {
    DesignPlan plan;
    for (int k = 0; k < pop.num_strata(); ++k) {
        DesignPlan::StratumCounts c;
        c.stratum = pop.stratum_label(k);
        c.n = static_cast<int>(od.selection.sampled[k].size());
        c.n1 = static_cast<int>(od.assignment.treated[k].size());
        plan.strata.push_back(c);
    }
    return validate_plan(pop, plan, strictness);
}

// ---------------------------------------------------------------------------
// Point estimate
// ---------------------------------------------------------------------------

struct DiffInMeans {
    double tau_hat = 0.0;
    Vector per_stratum;
};

// tau_hat_[k] = Ybar_[k]1 - Ybar_[k]0; tau_hat = sum_k Pi_[k] tau_hat_[k].
inline DiffInMeans diff_in_means(const Population& pop, const SampleSelection& sel,
                                 const Assignment& asg, const Vector& y) {
    DiffInMeans out;
    out.per_stratum.resize(pop.num_strata());
    for (int k = 0; k < pop.num_strata(); ++k) {
        double sum1 = 0.0, sum0 = 0.0;
        int n1 = 0, n0 = 0;
        for (int i : sel.sampled[k]) {
            if (asg.t[i]) {
                sum1 += y[i];
                ++n1;
            } else {
                sum0 += y[i];
                ++n0;
            }
        }
        if (n1 == 0 || n0 == 0)
            throw ValidationError("stratum '" + pop.stratum_label(k) +
                                  "' has an empty treatment arm");
        out.per_stratum[k] = sum1 / n1 - sum0 / n0;
        out.tau_hat += pop.stratum_share(k) * out.per_stratum[k];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-stratum sample statistics shared by the variance estimator and the
// covariate adjustment. All divisors are (arm size - 1) or (n_[k] - 1).
// ---------------------------------------------------------------------------

struct StratumSampleStats {
    int n = 0, n1 = 0, n0 = 0;
    double mean_y1 = 0.0, mean_y0 = 0.0;
    double s2_y1 = 0.0, s2_y0 = 0.0;
    Vector s_x_y1, s_x_y0;
    Vector s_w_y1, s_w_y0;
    Vector s_e_y1, s_e_y0;
    Vector s_c_y1, s_c_y0;
    Vector mean_x1, mean_x0;
    Vector mean_c1, mean_c0;
    Vector mean_e_sampled;
    Matrix cond_cov_x; // S^2_[k]X|S
    Matrix cond_cov_c; // S^2_[k]C|S
};

struct SampleStats {
    std::vector<StratumSampleStats> strata;
};

inline SampleStats compute_sample_stats(const Population& pop, const SampleSelection& sel,
                                        const Assignment& asg, const Vector& y) {
    SampleStats stats;
    const int j2 = pop.dim(Block::X), j1 = pop.dim(Block::W);
    const int j3 = pop.dim(Block::E), j4 = pop.dim(Block::C);
    for (int k = 0; k < pop.num_strata(); ++k) {
        StratumSampleStats s;
        const auto& ids = sel.sampled[k];
        s.n = static_cast<int>(ids.size());
        for (int i : ids) (asg.t[i] ? s.n1 : s.n0) += 1;
        if (s.n1 < 2 || s.n0 < 2)
            throw ValidationError("stratum '" + pop.stratum_label(k) +
                                  "' needs at least 2 units per arm for variance estimation");

        for (int i : ids) (asg.t[i] ? s.mean_y1 : s.mean_y0) += y[i];
        s.mean_y1 /= s.n1;
        s.mean_y0 /= s.n0;

        auto arm_block_mean = [&](Block b, int want_t) {
            Vector m(pop.dim(b), 0.0);
            for (int i : ids) {
                if (static_cast<int>(asg.t[i]) != want_t) continue;
                const double* row = pop.covariate_row(i, b);
                for (std::size_t j = 0; j < m.size(); ++j) m[j] += row[j];
            }
            const double denom = want_t ? s.n1 : s.n0;
            for (double& v : m) v /= denom;
            return m;
        };

        Vector mean_w1, mean_w0, mean_e1, mean_e0;
        if (j2 > 0) {
            s.mean_x1 = arm_block_mean(Block::X, 1);
            s.mean_x0 = arm_block_mean(Block::X, 0);
        }
        if (j1 > 0) {
            mean_w1 = arm_block_mean(Block::W, 1);
            mean_w0 = arm_block_mean(Block::W, 0);
        }
        if (j3 > 0) {
            mean_e1 = arm_block_mean(Block::E, 1);
            mean_e0 = arm_block_mean(Block::E, 0);
            s.mean_e_sampled.assign(j3, 0.0);
            for (int i : ids) {
                const double* row = pop.covariate_row(i, Block::E);
                for (int j = 0; j < j3; ++j) s.mean_e_sampled[j] += row[j];
            }
            for (double& v : s.mean_e_sampled) v /= s.n;
        }
        if (j4 > 0) {
            s.mean_c1 = arm_block_mean(Block::C, 1);
            s.mean_c0 = arm_block_mean(Block::C, 0);
        }

        auto arm_cross = [&](Block b, int want_t, const Vector& mean_b, double mean_y,
                             Vector& out) {
            const int d = pop.dim(b);
            out.assign(d, 0.0);
            for (int i : ids) {
                if (static_cast<int>(asg.t[i]) != want_t) continue;
                const double* row = pop.covariate_row(i, b);
                const double dy = y[i] - mean_y;
                for (int j = 0; j < d; ++j) out[j] += (row[j] - mean_b[j]) * dy;
            }
            const double denom = (want_t ? s.n1 : s.n0) - 1.0;
            for (double& v : out) v /= denom;
        };

        for (int i : ids) {
            const double dy = asg.t[i] ? y[i] - s.mean_y1 : y[i] - s.mean_y0;
            (asg.t[i] ? s.s2_y1 : s.s2_y0) += dy * dy;
        }
        s.s2_y1 /= s.n1 - 1;
        s.s2_y0 /= s.n0 - 1;

        if (j2 > 0) {
            arm_cross(Block::X, 1, s.mean_x1, s.mean_y1, s.s_x_y1);
            arm_cross(Block::X, 0, s.mean_x0, s.mean_y0, s.s_x_y0);
        }
        if (j1 > 0) {
            arm_cross(Block::W, 1, mean_w1, s.mean_y1, s.s_w_y1);
            arm_cross(Block::W, 0, mean_w0, s.mean_y0, s.s_w_y0);
        }
        if (j3 > 0) {
            arm_cross(Block::E, 1, mean_e1, s.mean_y1, s.s_e_y1);
            arm_cross(Block::E, 0, mean_e0, s.mean_y0, s.s_e_y0);
        }
        if (j4 > 0) {
            arm_cross(Block::C, 1, s.mean_c1, s.mean_y1, s.s_c_y1);
            arm_cross(Block::C, 0, s.mean_c0, s.mean_y0, s.s_c_y0);
        }

        auto conditional_cov = [&](Block b) {
            const int d = pop.dim(b);
            Vector mean(d, 0.0);
            for (int i : ids) {
                const double* row = pop.covariate_row(i, b);
                for (int j = 0; j < d; ++j) mean[j] += row[j];
            }
            for (double& v : mean) v /= s.n;
            Matrix cov(d, d);
            for (int i : ids) {
                const double* row = pop.covariate_row(i, b);
                for (int a = 0; a < d; ++a)
                    for (int bb = a; bb < d; ++bb)
                        cov(a, bb) += (row[a] - mean[a]) * (row[bb] - mean[bb]);
            }
            for (int a = 0; a < d; ++a)
                for (int bb = a; bb < d; ++bb) {
                    cov(a, bb) /= s.n - 1;
                    cov(bb, a) = cov(a, bb);
                }
            return cov;
        };
        if (j2 > 0) s.cond_cov_x = conditional_cov(Block::X);
        if (j4 > 0) s.cond_cov_c = conditional_cov(Block::C);

        stats.strata.push_back(std::move(s));
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Variance components (Section on conservative variance estimation)
// ---------------------------------------------------------------------------

struct VarianceComponents {
    double v_tt = 0.0;   // conservative variance of sqrt(n) tau_hat
    Matrix v_xx;         // estimated from sampled units
    Vector v_xtau;
    Vector v_wtau;
    Matrix v_ww;         // population-known, never estimated
    double r2_w = 0.0, r2_x = 0.0;
    bool clamped = false;
    bool degenerate = false;  // v_tt = 0, correlations undefined
    int n = 0;
    int j1 = 0, j2 = 0;
    double a_s = kInf, a_t = kInf;
};

inline VarianceComponents variance_components(const Population& pop,
                                              const PopulationMoments& moments,
                                              const ResolvedPlan& plan,
                                              const ResolvedThresholds& thresholds,
                                              const SampleStats& stats) {
    VarianceComponents vc;
    vc.n = plan.n_total;
    vc.j1 = pop.dim(Block::W);
    vc.j2 = pop.dim(Block::X);
    vc.a_s = thresholds.a_s;
    vc.a_t = thresholds.a_t;
    const int K = plan.num_strata();
    if (vc.j2 > 0) {
        vc.v_xx = Matrix(vc.j2, vc.j2);
        vc.v_xtau.assign(vc.j2, 0.0);
    }
    if (vc.j1 > 0) {
        vc.v_ww = Matrix(vc.j1, vc.j1);
        vc.v_wtau.assign(vc.j1, 0.0);
    }
    for (int k = 0; k < K; ++k) {
        const auto& s = stats.strata[k];
        const double pi_pop = pop.stratum_share(k);
        const double weight = pi_pop * pi_pop / plan.pi_k[k];
        const double e1 = plan.e_k1[k], e0 = plan.e_k0[k], fk = plan.f_k[k];
        vc.v_tt += weight * (s.s2_y1 / e1 + s.s2_y0 / e0);
        if (vc.j2 > 0) {
            const double wx = weight / (e1 * e0);
            for (int a = 0; a < vc.j2; ++a) {
                for (int b = 0; b < vc.j2; ++b) vc.v_xx(a, b) += wx * s.cond_cov_x(a, b);
                vc.v_xtau[a] += weight * (s.s_x_y1[a] / e1 + s.s_x_y0[a] / e0);
            }
        }
        if (vc.j1 > 0) {
            const auto& sw = moments.strata[k].cov_w;
            for (int a = 0; a < vc.j1; ++a) {
                for (int b = 0; b < vc.j1; ++b)
                    vc.v_ww(a, b) += weight * (1.0 - fk) * sw(a, b);
                vc.v_wtau[a] += weight * (1.0 - fk) * (s.s_w_y1[a] - s.s_w_y0[a]);
            }
        }
    }
    if (vc.v_tt <= 0.0) {
        vc.degenerate = true;
        return vc;
    }
    if (vc.j1 > 0) {
        SpdMatrix ww(vc.v_ww, "V_WW");
        vc.r2_w = ww.inverse_quadratic_form(vc.v_wtau) / vc.v_tt;
    }
    if (vc.j2 > 0) {
        SpdMatrix xx(vc.v_xx, "estimated V_XX");
        vc.r2_x = xx.inverse_quadratic_form(vc.v_xtau) / vc.v_tt;
    }
    if (vc.r2_w + vc.r2_x > 1.0) vc.clamped = true;
    return vc;
}

// Convolution weights (normal, W-truncated, X-truncated). When the
// estimated multiple correlations exceed one jointly, the normal weight is
// clamped at zero and the truncated weights renormalized proportionally.
struct ConvolutionWeights {
    double normal = 1.0, w = 0.0, x = 0.0;
    bool clamped = false;
};

inline ConvolutionWeights convolution_weights(double r2_w, double r2_x) {
    ConvolutionWeights cw;
    const double sum = r2_w + r2_x;
    if (sum > 1.0) {
        cw.clamped = true;
        cw.normal = 0.0;
        cw.w = r2_w / sum;
        cw.x = r2_x / sum;
    } else {
        cw.normal = 1.0 - sum;
        cw.w = r2_w;
        cw.x = r2_x;
    }
    return cw;
}

struct ConvolutionSpec {
    double v_tt = 1.0;
    ConvolutionWeights weights;
    TruncSpec trunc_w{1, kInf};
    TruncSpec trunc_x{1, kInf};
    long long mc_draws = 2000000;
};

struct QuantileEstimate {
    double value = 0.0;
    double mc_se = 0.0;  // order-statistic standard error; 0 for closed forms
};

namespace detail {

// Type-7 interpolated order statistic of an unsorted sample; buf is consumed.
inline double type7_quantile(std::vector<double>& buf, double xi) {
    const std::size_t m = buf.size();
    const double h = (static_cast<double>(m) - 1.0) * xi;
    std::size_t lo = static_cast<std::size_t>(h);
    if (lo >= m - 1) lo = m - 2;
    const double frac = h - static_cast<double>(lo);
    std::nth_element(buf.begin(), buf.begin() + lo, buf.end());
    const double v0 = buf[lo];
    const double v1 = *std::min_element(buf.begin() + lo + 1, buf.end());
    return v0 + frac * (v1 - v0);
}

} // namespace detail

// Monte Carlo xi-quantile of V^{1/2}(sqrt(w_n) eps + sqrt(w_w) L_{J1,aS}
// + sqrt(w_x) L_{J2,aT}).
inline QuantileEstimate convolution_quantile(const ConvolutionSpec& spec, double xi,
                                             RngStream& rng) {
    if (!(xi > 0.0 && xi < 1.0))
        throw ValidationError("convolution_quantile: xi must be in (0,1)");
    if (spec.mc_draws < 1000) throw ValidationError("convolution_quantile: too few draws");
    const double sd_n = std::sqrt(std::max(spec.weights.normal, 0.0));
    const double sd_w = std::sqrt(std::max(spec.weights.w, 0.0));
    const double sd_x = std::sqrt(std::max(spec.weights.x, 0.0));
    const double scale = std::sqrt(spec.v_tt);
    std::vector<double> draws(static_cast<std::size_t>(spec.mc_draws));
    for (auto& d : draws) {
        double v = 0.0;
        if (sd_n > 0.0) v += sd_n * rng.normal();
        if (sd_w > 0.0) v += sd_w * sample_trunc_first_coord(spec.trunc_w, rng);
        if (sd_x > 0.0) v += sd_x * sample_trunc_first_coord(spec.trunc_x, rng);
        d = scale * v;
    }
    const double m = static_cast<double>(spec.mc_draws);
    const double delta = std::sqrt(xi * (1.0 - xi) / m);
    QuantileEstimate q;
    std::vector<double> tmp = draws;
    q.value = detail::type7_quantile(tmp, xi);
    if (xi - delta > 0.0 && xi + delta < 1.0) {
        tmp = draws;
        const double qlo = detail::type7_quantile(tmp, xi - delta);
        tmp = draws;
        const double qhi = detail::type7_quantile(tmp, xi + delta);
        q.mc_se = 0.5 * (qhi - qlo);
    }
    return q;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct EstimateReport {
    std::string method = "unadjusted";  // or "adjusted"
    std::string design;                 // SRSE / SRSE-S / SRSE-R / SRSRR / ...
    double tau_hat = 0.0;
    Vector per_stratum;
    double ci_lower = 0.0, ci_upper = 0.0;
    double alpha = 0.05;
    int n = 0;
    double quantile = 0.0;       // nu_{1-alpha/2} (already scaled by sqrt(V))
    double quantile_mc_se = 0.0;
    long long mc_draws = 0;
    double v_tt = 0.0;
    double r2_w = 0.0, r2_x = 0.0;  // under "adjusted": R^2_E, R^2_C
    bool clamped = false;
    bool degenerate = false;
    double a_s = kInf, a_t = kInf;

    json to_json() const {
        json j{{"method", method},
               {"design", design},
               {"tau_hat", tau_hat},
               {"ci_lower", ci_lower},
               {"ci_upper", ci_upper},
               {"alpha", alpha},
               {"n", n},
               {"quantile", quantile},
               {"quantile_mc_se", quantile_mc_se},
               {"mc_draws", mc_draws},
               {"v_tau_tau", v_tt},
               {method == "adjusted" ? "r2_e" : "r2_w", r2_w},
               {method == "adjusted" ? "r2_c" : "r2_x", r2_x},
               {"clamped", clamped},
               {"degenerate", degenerate},
               {"a_s", std::isinf(a_s) ? json("inf") : json(a_s)},
               {"a_t", std::isinf(a_t) ? json("inf") : json(a_t)},
               {"per_stratum_tau", per_stratum}};
        return j;
    }

    static std::string csv_header() {
        return "method,design,tau_hat,ci_lower,ci_upper,alpha,n,quantile,quantile_mc_se,"
               "v_tau_tau,r2_first,r2_second,clamped,degenerate";
    }

    std::string to_csv_row() const {
        std::ostringstream out;
        out << method << ',' << design << ',' << format_full(tau_hat) << ','
            << format_full(ci_lower) << ',' << format_full(ci_upper) << ','
            << format_full(alpha) << ',' << n << ',' << format_full(quantile) << ','
            << format_full(quantile_mc_se) << ',' << format_full(v_tt) << ','
            << format_full(r2_w) << ',' << format_full(r2_x) << ',' << (clamped ? 1 : 0)
            << ',' << (degenerate ? 1 : 0);
        return out.str();
    }
};

// Conservative confidence interval for the unadjusted estimator:
// tau_hat -+ n^{-1/2} nu_{1-alpha/2}(V_hat, R2_W, R2_X).
// With both thresholds infinite the convolution is exactly normal and the
// quantile is closed-form; otherwise it is Monte Carlo.
inline EstimateReport ci_unadjusted(const DiffInMeans& est, const VarianceComponents& vc,
                                    double alpha, RngStream& rng,
                                    long long mc_draws = 2000000) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0,1)");
    EstimateReport rep;
    rep.method = "unadjusted";
    rep.tau_hat = est.tau_hat;
    rep.per_stratum = est.per_stratum;
    rep.alpha = alpha;
    rep.n = vc.n;
    rep.v_tt = vc.v_tt;
    rep.r2_w = vc.r2_w;
    rep.r2_x = vc.r2_x;
    rep.degenerate = vc.degenerate;
    rep.a_s = vc.a_s;
    rep.a_t = vc.a_t;

    const ConvolutionWeights weights = convolution_weights(vc.r2_w, vc.r2_x);
    rep.clamped = weights.clamped;
    if (vc.degenerate) {
        rep.ci_lower = rep.ci_upper = est.tau_hat;
        return rep;
    }
    const bool both_inf = std::isinf(vc.a_s) && std::isinf(vc.a_t);
    if (both_inf) {
        // weights sum to one, so the convolution is exactly N(0, V_hat)
        rep.quantile = normal_quantile(1.0 - alpha / 2.0) * std::sqrt(vc.v_tt);
        rep.quantile_mc_se = 0.0;
    } else {
        ConvolutionSpec spec;
        spec.v_tt = vc.v_tt;
        spec.weights = weights;
        spec.trunc_w = TruncSpec{std::max(vc.j1, 1), vc.a_s};
        spec.trunc_x = TruncSpec{std::max(vc.j2, 1), vc.a_t};
        spec.mc_draws = mc_draws;
        const QuantileEstimate q = convolution_quantile(spec, 1.0 - alpha / 2.0, rng);
        rep.quantile = q.value;
        rep.quantile_mc_se = q.mc_se;
        rep.mc_draws = mc_draws;
    }
    const double half = rep.quantile / std::sqrt(static_cast<double>(vc.n));
    rep.ci_lower = est.tau_hat - half;
    rep.ci_upper = est.tau_hat + half;
    return rep;
}

// ---------------------------------------------------------------------------
// Oracle (design-stage) covariance and efficiency comparisons
// ---------------------------------------------------------------------------

// Exact covariance of sqrt(n)(tau_hat - tau, tau_X', delta_W') under the
// stratified randomized survey experiment, per-stratum blocks summed with
// Pi^2/pi weights. x_role/w_role default to the design blocks; passing
// C and E yields the analysis-stage analogue.
inline Matrix oracle_covariance(const Population& pop, const PopulationMoments& moments,
                                const ResolvedPlan& plan, Block x_role = Block::X,
                                Block w_role = Block::W) {
    if (!pop.has_potential_outcomes())
        throw ValidationError("oracle covariance requires potential outcomes");
    const int jx = pop.dim(x_role), jw = pop.dim(w_role);
    const int d = 1 + jx + jw;
    Matrix v(d, d);
    for (int k = 0; k < plan.num_strata(); ++k) {
        const auto& sm = moments.strata[k];
        const double weight = sm.pi * sm.pi / plan.pi_k[k];
        const double e1 = plan.e_k1[k], e0 = plan.e_k0[k], fk = plan.f_k[k];
        v(0, 0) += weight * (sm.s2_y1 / e1 + sm.s2_y0 / e0 - fk * sm.s2_tau);
        const Vector& sx1 = sm.cov_with_y(x_role, 1);
        const Vector& sx0 = sm.cov_with_y(x_role, 0);
        for (int a = 0; a < jx; ++a) {
            const double cov = weight * (sx1[a] / e1 + sx0[a] / e0);
            v(0, 1 + a) += cov;
            v(1 + a, 0) += cov;
        }
        const Vector& swt = sm.cov_with_tau(w_role);
        for (int a = 0; a < jw; ++a) {
            const double cov = weight * (1.0 - fk) * swt[a];
            v(0, 1 + jx + a) += cov;
            v(1 + jx + a, 0) += cov;
        }
        const Matrix& sxx = sm.cov(x_role);
        for (int a = 0; a < jx; ++a)
            for (int b = 0; b < jx; ++b)
                v(1 + a, 1 + b) += weight / (e1 * e0) * sxx(a, b);
        const Matrix& sww = sm.cov(w_role);
        for (int a = 0; a < jw; ++a)
            for (int b = 0; b < jw; ++b)
                v(1 + jx + a, 1 + jx + b) += weight * (1.0 - fk) * sww(a, b);
        // X-W cross block is exactly zero
    }
    return v;
}

struct OracleR2 {
    double v_tt = 0.0;
    double r2_w = 0.0, r2_x = 0.0;
};

inline OracleR2 oracle_r2(const Population& pop, const PopulationMoments& moments,
                          const ResolvedPlan& plan) {
    const Matrix v = oracle_covariance(pop, moments, plan);
    const int jx = pop.dim(Block::X), jw = pop.dim(Block::W);
    OracleR2 out;
    out.v_tt = v(0, 0);
    if (out.v_tt <= 0.0) return out;
    if (jx > 0) {
        Matrix vxx(jx, jx);
        Vector vxt(jx);
        for (int a = 0; a < jx; ++a) {
            vxt[a] = v(0, 1 + a);
            for (int b = 0; b < jx; ++b) vxx(a, b) = v(1 + a, 1 + b);
        }
        out.r2_x = SpdMatrix(vxx, "V_XX").inverse_quadratic_form(vxt) / out.v_tt;
    }
    if (jw > 0) {
        Matrix vww(jw, jw);
        Vector vwt(jw);
        for (int a = 0; a < jw; ++a) {
            vwt[a] = v(0, 1 + jx + a);
            for (int b = 0; b < jw; ++b) vww(a, b) = v(1 + jx + a, 1 + jx + b);
        }
        out.r2_w = SpdMatrix(vww, "V_WW").inverse_quadratic_form(vwt) / out.v_tt;
    }
    return out;
}

// Variance advantage of stratification over complete randomization
// (requires equal sampling fraction and treated proportion across strata).
struct VarianceGain {
    double between = 0.0;  // N/(N-1) sum_k Pi_k d_k
    double within = 0.0;   // 1/(N-1) sum_k (1 - Pi_k) V_[k]tautau
    double total = 0.0;    // between - within = V_tautau,C - V_tautau
};

inline VarianceGain variance_gain_vs_crse(const Population& pop,
                                          const PopulationMoments& moments,
                                          const ResolvedPlan& plan) {
    const int K = plan.num_strata();
    const double f = plan.f;
    const double e1 = plan.e_k1[0], e0 = plan.e_k0[0];
    for (int k = 0; k < K; ++k) {
        if (std::fabs(plan.f_k[k] - f) > 1e-9 || std::fabs(plan.e_k1[k] - e1) > 1e-9)
            throw ValidationError(
                "variance_gain_vs_crse needs equal sampling and treated proportions "
                "across strata");
    }
    double ybar1 = 0.0, ybar0 = 0.0;
    for (int k = 0; k < K; ++k) {
        ybar1 += moments.strata[k].pi * moments.strata[k].mean_y1;
        ybar0 += moments.strata[k].pi * moments.strata[k].mean_y0;
    }
    const double tau = ybar1 - ybar0;
    VarianceGain g;
    const double N = pop.size();
    for (int k = 0; k < K; ++k) {
        const auto& sm = moments.strata[k];
        const double d1 = sm.mean_y1 - ybar1;
        const double d0 = sm.mean_y0 - ybar0;
        const double dtau = sm.mean_tau - tau;
        const double lin = std::sqrt(e0 / e1) * d1 + std::sqrt(e1 / e0) * d0;
        const double dk = lin * lin + (1.0 - f) * dtau * dtau;
        g.between += sm.pi * dk;
        const double v_k = sm.s2_y1 / e1 + sm.s2_y0 / e0 - f * sm.s2_tau;
        g.within += (1.0 - sm.pi) * v_k;
    }
    g.between *= N / (N - 1.0);
    g.within /= N - 1.0;
    g.total = g.between - g.within;
    return g;
}

// Asymptotic variance under rejective sampling and rerandomization, plus the
// percentage reduction relative to the plain stratified design.
struct ReducedVariance {
    double variance = 0.0;
    double pct_reduction = 0.0;
};

inline ReducedVariance srsrr_asymptotic_variance(double v_tt, double r2_w, double r2_x,
                                                 double nu_w, double nu_x) {
    ReducedVariance out;
    const double reduction = (1.0 - nu_w) * r2_w + (1.0 - nu_x) * r2_x;
    out.variance = v_tt * (1.0 - reduction);
    out.pct_reduction = 100.0 * reduction;
    return out;
}

} // namespace srsrr
