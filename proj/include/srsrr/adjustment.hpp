#pragma once

#include <cmath>

#include "srsrr/estimator.hpp"

namespace srsrr {

// Analysis-stage linear adjustment: tau_adj = tau_hat - beta' tau_C - gamma' delta_E.
// V_EE comes from the population (E is known for every unit, like W);
// V_CC is estimated from the sampled units (C is observed post-sampling).
struct AdjustmentFit {
    Vector beta;     // J4
    Vector gamma;    // J3
    Vector tau_c;    // observed imbalance of C between arms
    Vector delta_e;  // observed imbalance of E between sample and population
    Matrix v_cc_hat;
    Matrix v_ee;
    Vector v_ctau_hat, v_etau_hat;
    double r2_e = 0.0, r2_c = 0.0;
    double v_tt = 0.0;  // same conservative estimate as the unadjusted path
    double tau_hat = 0.0;
    double tau_adj = 0.0;
    bool clamped = false;
    bool degenerate = false;
    int n = 0;
    double a_s = kInf, a_t = kInf;
};

inline AdjustmentFit fit_adjustment(const Population& pop, const PopulationMoments& moments,
                                    const ResolvedPlan& plan,
                                    const ResolvedThresholds& thresholds,
                                    const SampleStats& stats, const DiffInMeans& est) {
    const int j3 = pop.dim(Block::E), j4 = pop.dim(Block::C);
    if (j3 == 0 && j4 == 0)
        throw ValidationError("covariate adjustment requires E or C covariates");

    AdjustmentFit fit;
    fit.tau_hat = est.tau_hat;
    fit.n = plan.n_total;
    fit.a_s = thresholds.a_s;
    fit.a_t = thresholds.a_t;
    const int K = plan.num_strata();

    if (j4 > 0) {
        fit.v_cc_hat = Matrix(j4, j4);
        fit.v_ctau_hat.assign(j4, 0.0);
        fit.tau_c.assign(j4, 0.0);
    }
    if (j3 > 0) {
        fit.v_ee = Matrix(j3, j3);
        fit.v_etau_hat.assign(j3, 0.0);
        fit.delta_e.assign(j3, 0.0);
    }

    for (int k = 0; k < K; ++k) {
        const auto& s = stats.strata[k];
        const auto& sm = moments.strata[k];
        const double weight = sm.pi * sm.pi / plan.pi_k[k];
        const double e1 = plan.e_k1[k], e0 = plan.e_k0[k], fk = plan.f_k[k];
        fit.v_tt += weight * (s.s2_y1 / e1 + s.s2_y0 / e0);
        if (j4 > 0) {
            for (int a = 0; a < j4; ++a) {
                fit.tau_c[a] += sm.pi * (s.mean_c1[a] - s.mean_c0[a]);
                fit.v_ctau_hat[a] += weight * (s.s_c_y1[a] / e1 + s.s_c_y0[a] / e0);
                for (int b = 0; b < j4; ++b)
                    fit.v_cc_hat(a, b) += weight / (e1 * e0) * s.cond_cov_c(a, b);
            }
        }
        if (j3 > 0) {
            for (int a = 0; a < j3; ++a) {
                fit.delta_e[a] += sm.pi * (s.mean_e_sampled[a] - sm.mean_e[a]);
                fit.v_etau_hat[a] += weight * (1.0 - fk) * (s.s_e_y1[a] - s.s_e_y0[a]);
                for (int b = 0; b < j3; ++b)
                    fit.v_ee(a, b) += weight * (1.0 - fk) * sm.cov_e(a, b);
            }
        }
    }

    if (fit.v_tt <= 0.0) {
        fit.degenerate = true;
        fit.beta.assign(j4, 0.0);
        fit.gamma.assign(j3, 0.0);
        fit.tau_adj = fit.tau_hat;
        return fit;
    }

    double correction = 0.0;
    if (j4 > 0) {
        SpdMatrix cc(fit.v_cc_hat, "estimated V_CC");
        fit.beta = cc.solve(fit.v_ctau_hat);
        fit.r2_c = cc.inverse_quadratic_form(fit.v_ctau_hat) / fit.v_tt;
        correction += dot(fit.beta, fit.tau_c);
    } else {
        fit.beta.clear();
    }
    if (j3 > 0) {
        SpdMatrix ee(fit.v_ee, "V_EE");
        fit.gamma = ee.solve(fit.v_etau_hat);
        fit.r2_e = ee.inverse_quadratic_form(fit.v_etau_hat) / fit.v_tt;
        correction += dot(fit.gamma, fit.delta_e);
    } else {
        fit.gamma.clear();
    }
    fit.tau_adj = fit.tau_hat - correction;
    if (fit.r2_e + fit.r2_c > 1.0) fit.clamped = true;
    return fit;
}

// Wald interval around tau_adj with the conservative width
// n^{-1/2} q_{1-alpha/2} sqrt(V_hat (1 - R2_E - R2_C)).
inline EstimateReport ci_adjusted(const AdjustmentFit& fit, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0,1)");
    EstimateReport rep;
    rep.method = "adjusted";
    rep.tau_hat = fit.tau_adj;
    rep.alpha = alpha;
    rep.n = fit.n;
    rep.v_tt = fit.v_tt;
    rep.r2_w = fit.r2_e;
    rep.r2_x = fit.r2_c;
    rep.degenerate = fit.degenerate;
    rep.a_s = fit.a_s;
    rep.a_t = fit.a_t;
    if (fit.degenerate) {
        rep.ci_lower = rep.ci_upper = fit.tau_adj;
        return rep;
    }
    const ConvolutionWeights weights = convolution_weights(fit.r2_e, fit.r2_c);
    rep.clamped = weights.clamped;
    rep.quantile =
        normal_quantile(1.0 - alpha / 2.0) * std::sqrt(fit.v_tt * weights.normal);
    const double half = rep.quantile / std::sqrt(static_cast<double>(fit.n));
    rep.ci_lower = fit.tau_adj - half;
    rep.ci_upper = fit.tau_adj + half;
    return rep;
}

} // namespace srsrr
