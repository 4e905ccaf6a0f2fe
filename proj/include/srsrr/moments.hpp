#pragma once

#include <cmath>
#include <vector>

#include "srsrr/linalg.hpp"
#include "srsrr/population.hpp"

namespace srsrr {

enum class MomentsMode {
    oracle,        // everything, including potential-outcome moments
    sampled_only,  // only quantities that never touch potential outcomes
};

// Stratum-specific finite-population means and (co)variances, all with the
// N_[k]-1 divisor. Outcome-related entries are populated in oracle mode only.
struct StratumMoments {
    int count = 0;
    double pi = 0.0; // Pi_[k]

    Vector mean_w, mean_x, mean_e, mean_c;
    Matrix cov_w, cov_x, cov_e, cov_c; // S^2_[k]W etc.

    bool has_outcomes = false;
    double mean_y1 = 0.0, mean_y0 = 0.0, mean_tau = 0.0;
    double s2_y1 = 0.0, s2_y0 = 0.0, s2_tau = 0.0, s_y1_y0 = 0.0;
    Vector s_x_y1, s_x_y0;     // S_[k]X,t
    Vector s_w_y1, s_w_y0;     // S_[k]W,t
    Vector s_w_tau;            // S_[k]W,tau
    Vector s_e_y1, s_e_y0, s_e_tau;
    Vector s_c_y1, s_c_y0;

    const Vector& mean(Block b) const {
        switch (b) {
            case Block::W: return mean_w;
            case Block::X: return mean_x;
            case Block::E: return mean_e;
            case Block::C: return mean_c;
        }
        return mean_w;
    }
    const Matrix& cov(Block b) const {
        switch (b) {
            case Block::W: return cov_w;
            case Block::X: return cov_x;
            case Block::E: return cov_e;
            case Block::C: return cov_c;
        }
        return cov_w;
    }
    const Vector& cov_with_y(Block b, int t) const {
        switch (b) {
            case Block::W: return t == 1 ? s_w_y1 : s_w_y0;
            case Block::X: return t == 1 ? s_x_y1 : s_x_y0;
            case Block::E: return t == 1 ? s_e_y1 : s_e_y0;
            case Block::C: return t == 1 ? s_c_y1 : s_c_y0;
        }
        return s_w_y1;
    }
    // S_[k]b,tau; only meaningful for the population-known blocks W and E.
    const Vector& cov_with_tau(Block b) const { return b == Block::E ? s_e_tau : s_w_tau; }
};

struct PopulationMoments {
    std::vector<StratumMoments> strata;
    bool has_x = false, has_c = false; // population-level X/C moments available

    int num_strata() const { return static_cast<int>(strata.size()); }
};

inline PopulationMoments stratum_moments(const Population& pop,
                                         MomentsMode mode = MomentsMode::oracle) {
    if (mode == MomentsMode::oracle && !pop.has_potential_outcomes())
        throw ValidationError("oracle moments requested but potential outcomes are missing");

    PopulationMoments out;
    out.has_x = pop.dim(Block::X) > 0 && pop.block_complete(Block::X);
    out.has_c = pop.dim(Block::C) > 0 && pop.block_complete(Block::C);
    const bool outcomes = mode == MomentsMode::oracle;

    for (int k = 0; k < pop.num_strata(); ++k) {
        const auto& units = pop.stratum_units(k);
        const int nk = static_cast<int>(units.size());
        const double inv_n = 1.0 / nk;
        const double inv_nm1 = 1.0 / (nk - 1);

        StratumMoments sm;
        sm.count = nk;
        sm.pi = pop.stratum_share(k);
        sm.has_outcomes = outcomes;

        auto block_available = [&](Block b) {
            if (pop.dim(b) == 0) return false;
            if (b == Block::X) return out.has_x;
            if (b == Block::C) return out.has_c;
            return true;
        };

        // means
        for (Block b : {Block::W, Block::X, Block::E, Block::C}) {
            if (!block_available(b)) continue;
            const int d = pop.dim(b);
            Vector mean(d, 0.0);
            for (int i : units) {
                const double* row = pop.covariate_row(i, b);
                for (int j = 0; j < d; ++j) mean[j] += row[j];
            }
            for (double& v : mean) v *= inv_n;
            Matrix cov(d, d);
            for (int i : units) {
                const double* row = pop.covariate_row(i, b);
                for (int a = 0; a < d; ++a)
                    for (int c2 = a; c2 < d; ++c2)
                        cov(a, c2) += (row[a] - mean[a]) * (row[c2] - mean[c2]);
            }
            for (int a = 0; a < d; ++a)
                for (int c2 = a; c2 < d; ++c2) {
                    cov(a, c2) *= inv_nm1;
                    cov(c2, a) = cov(a, c2);
                }
            switch (b) {
                case Block::W: sm.mean_w = mean; sm.cov_w = cov; break;
                case Block::X: sm.mean_x = mean; sm.cov_x = cov; break;
                case Block::E: sm.mean_e = mean; sm.cov_e = cov; break;
                case Block::C: sm.mean_c = mean; sm.cov_c = cov; break;
            }
        }

        if (outcomes) {
            double m1 = 0.0, m0 = 0.0;
            for (int i : units) {
                m1 += pop.y1(i);
                m0 += pop.y0(i);
            }
            m1 *= inv_n;
            m0 *= inv_n;
            sm.mean_y1 = m1;
            sm.mean_y0 = m0;
            sm.mean_tau = m1 - m0;
            for (int i : units) {
                const double d1 = pop.y1(i) - m1;
                const double d0 = pop.y0(i) - m0;
                sm.s2_y1 += d1 * d1;
                sm.s2_y0 += d0 * d0;
                sm.s_y1_y0 += d1 * d0;
                const double dt = d1 - d0;
                sm.s2_tau += dt * dt;
            }
            sm.s2_y1 *= inv_nm1;
            sm.s2_y0 *= inv_nm1;
            sm.s_y1_y0 *= inv_nm1;
            sm.s2_tau *= inv_nm1;

            auto cross = [&](Block b, Vector& out1, Vector& out0) {
                const int d = pop.dim(b);
                out1.assign(d, 0.0);
                out0.assign(d, 0.0);
                const Vector& mean = sm.mean(b);
                for (int i : units) {
                    const double* row = pop.covariate_row(i, b);
                    const double d1 = pop.y1(i) - m1;
                    const double d0 = pop.y0(i) - m0;
                    for (int j = 0; j < d; ++j) {
                        const double dc = row[j] - mean[j];
                        out1[j] += dc * d1;
                        out0[j] += dc * d0;
                    }
                }
                for (double& v : out1) v *= inv_nm1;
                for (double& v : out0) v *= inv_nm1;
            };
            if (block_available(Block::X)) cross(Block::X, sm.s_x_y1, sm.s_x_y0);
            if (block_available(Block::W)) {
                cross(Block::W, sm.s_w_y1, sm.s_w_y0);
                sm.s_w_tau.resize(pop.dim(Block::W));
                for (int j = 0; j < pop.dim(Block::W); ++j)
                    sm.s_w_tau[j] = sm.s_w_y1[j] - sm.s_w_y0[j];
            }
            if (block_available(Block::E)) {
                cross(Block::E, sm.s_e_y1, sm.s_e_y0);
                sm.s_e_tau.resize(pop.dim(Block::E));
                for (int j = 0; j < pop.dim(Block::E); ++j)
                    sm.s_e_tau[j] = sm.s_e_y1[j] - sm.s_e_y0[j];
            }
            if (block_available(Block::C)) cross(Block::C, sm.s_c_y1, sm.s_c_y0);
        }

        out.strata.push_back(std::move(sm));
    }
    return out;
}

// Pi-weighted grand mean of a covariate block.
inline Vector global_block_mean(const Population& pop, const PopulationMoments& m, Block b) {
    Vector g(pop.dim(b), 0.0);
    for (int k = 0; k < m.num_strata(); ++k) {
        const auto& sm = m.strata[k];
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += sm.pi * sm.mean(b)[j];
    }
    return g;
}

} // namespace srsrr
