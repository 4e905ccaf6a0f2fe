#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "srsrr/linalg.hpp"
#include "srsrr/moments.hpp"
#include "srsrr/plan.hpp"
#include "srsrr/population.hpp"
#include "srsrr/rng.hpp"

namespace srsrr {

struct SampleSelection {
    std::vector<std::uint8_t> z;            // over all N units
    std::vector<std::vector<int>> sampled;  // per-stratum sorted unit indices
    double m_s = std::nan("");              // realized balance, NaN if no metric
    long long attempts = 1;
};

struct Assignment {
    std::vector<std::uint8_t> t;            // over all N units, meaningful where z=1
    std::vector<std::vector<int>> treated;  // per-stratum sorted treated indices
    double m_t = std::nan("");
    long long attempts = 1;
};

// Rejection loop exhausted max_attempts; carries the best draw seen so the
// caller can persist it instead of silently loosening the threshold.
class MaxAttemptsError : public Error {
public:
    MaxAttemptsError(const std::string& msg, SampleSelection best)
        : Error(msg), best_selection(std::move(best)) {}
    MaxAttemptsError(const std::string& msg, SampleSelection best_sel, Assignment best_asg)
        : Error(msg), best_selection(std::move(best_sel)), best_assignment(std::move(best_asg)) {}
    SampleSelection best_selection;
    std::optional<Assignment> best_assignment;
};

// ---------------------------------------------------------------------------
// Balance metrics
// ---------------------------------------------------------------------------

// M_S metric: sum_k Pi^2 (1/n_k - 1/N_k) S^2_[k]W, computed from the
// population moments (W is known for all units).
class SamplingBalance {
public:
    SamplingBalance(const Population& pop, const PopulationMoments& moments,
                    const ResolvedPlan& plan)
        : dim_(pop.dim(Block::W)) {
        if (dim_ == 0) throw ValidationError("M_S requires sampling-stage covariates W");
        Matrix metric(dim_, dim_);
        for (int k = 0; k < plan.num_strata(); ++k) {
            const auto& sm = moments.strata[k];
            const double w = sm.pi * sm.pi *
                             (1.0 / plan.n[k] - 1.0 / static_cast<double>(sm.count));
            for (int a = 0; a < dim_; ++a)
                for (int b = 0; b < dim_; ++b) metric(a, b) += w * sm.cov_w(a, b);
        }
        metric_ = std::make_shared<SpdMatrix>(metric, "M_S metric");
        stratum_means_.resize(moments.num_strata());
        pis_.resize(moments.num_strata());
        for (int k = 0; k < moments.num_strata(); ++k) {
            stratum_means_[k] = moments.strata[k].mean_w;
            pis_[k] = moments.strata[k].pi;
        }
    }

    // M_S = delta' metric^{-1} delta with delta = sum_k Pi_k (Wbar_kS - Wbar_k).
    double value(const Population& pop, const SampleSelection& sel) const {
        Vector delta(dim_, 0.0);
        for (std::size_t k = 0; k < sel.sampled.size(); ++k) {
            const auto& ids = sel.sampled[k];
            if (ids.empty()) continue;
            Vector sum(dim_, 0.0);
            for (int i : ids) {
                const double* row = pop.covariate_row(i, Block::W);
                for (int j = 0; j < dim_; ++j) sum[j] += row[j];
            }
            const double scale = pis_[k] / ids.size();
            for (int j = 0; j < dim_; ++j)
                delta[j] += scale * sum[j] - pis_[k] * stratum_means_[k][j];
        }
        return metric_->inverse_quadratic_form(delta);
    }

private:
    int dim_;
    std::shared_ptr<SpdMatrix> metric_;
    std::vector<Vector> stratum_means_;
    std::vector<double> pis_;
};

// M_T metric: sum_k Pi^2 (n_k / (n_k1 n_k0)) S^2_[k]X|S, where S^2_[k]X|S is
// the covariance of X over the sampled units (divisor n_k - 1). Rebuilt for
// every accepted sample.
class AssignmentBalance {
public:
    AssignmentBalance(const Population& pop, const SampleSelection& sel,
                      const ResolvedPlan& plan)
        : dim_(pop.dim(Block::X)) {
        if (dim_ == 0) throw ValidationError("M_T requires assignment-stage covariates X");
        const int K = plan.num_strata();
        Matrix metric(dim_, dim_);
        pis_.resize(K);
        Vector mean(dim_);
        for (int k = 0; k < K; ++k) {
            pis_[k] = static_cast<double>(pop.stratum_size(k)) / pop.size();
            const auto& ids = sel.sampled[k];
            const int nk = static_cast<int>(ids.size());
            mean.assign(dim_, 0.0);
            for (int i : ids) {
                const double* row = pop.covariate_row(i, Block::X);
                for (int j = 0; j < dim_; ++j) mean[j] += row[j];
            }
            for (double& v : mean) v /= nk;
            const double w = pis_[k] * pis_[k] * static_cast<double>(plan.n[k]) /
                             (static_cast<double>(plan.n1[k]) * plan.n0[k]) / (nk - 1);
            for (int i : ids) {
                const double* row = pop.covariate_row(i, Block::X);
                for (int a = 0; a < dim_; ++a)
                    for (int b = a; b < dim_; ++b)
                        metric(a, b) += w * (row[a] - mean[a]) * (row[b] - mean[b]);
            }
        }
        for (int a = 0; a < dim_; ++a)
            for (int b = a + 1; b < dim_; ++b) metric(b, a) = metric(a, b);
        metric_ = std::make_shared<SpdMatrix>(metric, "M_T metric");
    }

    // M_T = tau_X' metric^{-1} tau_X with tau_X = sum_k Pi_k (Xbar_k1 - Xbar_k0).
    double value(const Population& pop, const SampleSelection& sel, const Assignment& asg) const {
        Vector tau_x(dim_, 0.0);
        for (std::size_t k = 0; k < sel.sampled.size(); ++k) {
            const auto& ids = sel.sampled[k];
            const auto& tr = asg.treated[k];
            const int nk1 = static_cast<int>(tr.size());
            const int nk0 = static_cast<int>(ids.size()) - nk1;
            Vector sum1(dim_, 0.0), sum_all(dim_, 0.0);
            for (int i : ids) {
                const double* row = pop.covariate_row(i, Block::X);
                for (int j = 0; j < dim_; ++j) sum_all[j] += row[j];
            }
            for (int i : tr) {
                const double* row = pop.covariate_row(i, Block::X);
                for (int j = 0; j < dim_; ++j) sum1[j] += row[j];
            }
            for (int j = 0; j < dim_; ++j) {
                const double mean1 = sum1[j] / nk1;
                const double mean0 = (sum_all[j] - sum1[j]) / nk0;
                tau_x[j] += pis_[k] * (mean1 - mean0);
            }
        }
        return metric_->inverse_quadratic_form(tau_x);
    }

private:
    int dim_;
    std::shared_ptr<SpdMatrix> metric_;
    std::vector<double> pis_;
};

// Standalone helpers matching the two display formulas.
inline double mahalanobis_sampling(const Population& pop, const PopulationMoments& moments,
                                   const ResolvedPlan& plan, const SampleSelection& sel) {
    return SamplingBalance(pop, moments, plan).value(pop, sel);
}

inline double mahalanobis_assignment(const Population& pop, const SampleSelection& sel,
                                     const ResolvedPlan& plan, const Assignment& asg) {
    return AssignmentBalance(pop, sel, plan).value(pop, sel, asg);
}

// ---------------------------------------------------------------------------
// Draw engine
// ---------------------------------------------------------------------------

// Holds the population, plan, thresholds, and the precomputed M_S metric.
// One engine per worker thread; a single rejection loop is sequential.
class DesignEngine {
public:
    DesignEngine(const Population& pop, const PopulationMoments& moments,
                 const ResolvedPlan& plan, const ResolvedThresholds& thresholds)
        : pop_(&pop), plan_(plan), thresholds_(thresholds) {
        const int K = plan.num_strata();
        perm_.resize(K);
        for (int k = 0; k < K; ++k) perm_[k] = pop.stratum_units(k);
        // The M_S metric is required when rejective sampling is active;
        // otherwise it is optional and only used to audit realized balance.
        if (pop.dim(Block::W) > 0) {
            try {
                sampling_balance_.emplace(pop, moments, plan);
            } catch (const SingularMatrixError&) {
                if (thresholds.sampling_active()) throw;
            } catch (const ValidationError&) {
                if (thresholds.sampling_active()) throw;
            }
        } else if (thresholds.sampling_active()) {
            throw ValidationError("rejective sampling requires W covariates");
        }
    }

    const ResolvedPlan& plan() const { return plan_; }
    const ResolvedThresholds& thresholds() const { return thresholds_; }

    // Plain stratified random sampling without replacement: within each
    // stratum every n_[k]-subset is equiprobable, strata independent.
    SampleSelection stratified_sample(RngStream& rng) {
        const Population& pop = *pop_;
        SampleSelection sel;
        sel.z.assign(pop.size(), 0);
        sel.sampled.resize(plan_.num_strata());
        for (int k = 0; k < plan_.num_strata(); ++k) {
            auto& ids = perm_[k];
            const int nk = plan_.n[k];
            const int Nk = static_cast<int>(ids.size());
            // partial Fisher-Yates, undone afterwards so every draw starts
            // from the same state and is a pure function of the stream
            swap_log_.clear();
            for (int i = 0; i < nk; ++i) {
                const int j = i + static_cast<int>(rng.uniform_below(Nk - i));
                std::swap(ids[i], ids[j]);
                swap_log_.push_back(j);
            }
            auto& out = sel.sampled[k];
            out.assign(ids.begin(), ids.begin() + nk);
            std::sort(out.begin(), out.end());
            for (int i : out) sel.z[i] = 1;
            for (int i = nk - 1; i >= 0; --i) std::swap(ids[i], ids[swap_log_[i]]);
        }
        sel.m_s = sampling_balance_ ? sampling_balance_->value(pop, sel) : std::nan("");
        return sel;
    }

    // Repeat stratified sampling until M_S <= a_S.
    SampleSelection rejective_sample(RngStream& rng) {
        if (!thresholds_.sampling_active()) return stratified_sample(rng);
        SampleSelection best;
        double best_ms = kInf;
        for (long long attempt = 1; attempt <= thresholds_.max_attempts_s; ++attempt) {
            SampleSelection sel = stratified_sample(rng);
            sel.attempts = attempt;
            if (sel.m_s <= thresholds_.a_s) return sel;
            if (sel.m_s < best_ms) {
                best_ms = sel.m_s;
                best = std::move(sel);
            }
        }
        std::ostringstream msg;
        msg << "rejective sampling: no acceptable sample within "
            << thresholds_.max_attempts_s << " attempts (best M_S=" << best_ms
            << ", a_S=" << thresholds_.a_s << ")";
        throw MaxAttemptsError(msg.str(), std::move(best));
    }

    // Plain stratified randomization of the sampled units.
    Assignment stratified_assign(const SampleSelection& sel, RngStream& rng,
                                 const AssignmentBalance* balance) {
        const Population& pop = *pop_;
        Assignment asg;
        asg.t.assign(pop.size(), 0);
        asg.treated.resize(plan_.num_strata());
        for (int k = 0; k < plan_.num_strata(); ++k) {
            scratch_ = sel.sampled[k];
            const int nk1 = plan_.n1[k];
            const int nk = static_cast<int>(scratch_.size());
            for (int i = 0; i < nk1; ++i) {
                const int j = i + static_cast<int>(rng.uniform_below(nk - i));
                std::swap(scratch_[i], scratch_[j]);
            }
            auto& tr = asg.treated[k];
            tr.assign(scratch_.begin(), scratch_.begin() + nk1);
            std::sort(tr.begin(), tr.end());
            for (int i : tr) asg.t[i] = 1;
        }
        asg.m_t = balance ? balance->value(pop, sel, asg) : std::nan("");
        return asg;
    }

    // Repeat stratified randomization until M_T <= a_T. The conditional
    // metric is built once per accepted sample.
    Assignment rerandomize(const SampleSelection& sel, RngStream& rng) {
        std::optional<AssignmentBalance> balance = make_assignment_balance(sel);
        if (!thresholds_.assignment_active())
            return stratified_assign(sel, rng, balance ? &*balance : nullptr);
        Assignment best;
        double best_mt = kInf;
        for (long long attempt = 1; attempt <= thresholds_.max_attempts_t; ++attempt) {
            Assignment asg = stratified_assign(sel, rng, &*balance);
            asg.attempts = attempt;
            if (asg.m_t <= thresholds_.a_t) return asg;
            if (asg.m_t < best_mt) {
                best_mt = asg.m_t;
                best = std::move(asg);
            }
        }
        std::ostringstream msg;
        msg << "rerandomization: no acceptable assignment within "
            << thresholds_.max_attempts_t << " attempts (best M_T=" << best_mt
            << ", a_T=" << thresholds_.a_t << ")";
        throw MaxAttemptsError(msg.str(), sel, std::move(best));
    }

    // Two-stage draw: rejective sampling, then rerandomization.
    std::pair<SampleSelection, Assignment> draw(RngStream& rng) {
        SampleSelection sel = rejective_sample(rng);
        Assignment asg = rerandomize(sel, rng);
        return {std::move(sel), std::move(asg)};
    }

    // Single-stage variant: redraw the whole (Z, T) pair until both balance
    // criteria hold simultaneously.
    std::pair<SampleSelection, Assignment> joint_srsrr(RngStream& rng) {
        const bool s_active = thresholds_.sampling_active();
        const bool t_active = thresholds_.assignment_active();
        // geometric with success probability ~ p_S * p_T
        const long long cap = thresholds_.max_attempts_s * thresholds_.max_attempts_t;
        SampleSelection best_sel;
        Assignment best_asg;
        double best_score = kInf;
        for (long long attempt = 1; attempt <= cap; ++attempt) {
            SampleSelection sel = stratified_sample(rng);
            sel.attempts = attempt;
            std::optional<AssignmentBalance> balance = make_assignment_balance(sel);
            Assignment asg = stratified_assign(sel, rng, balance ? &*balance : nullptr);
            asg.attempts = attempt;
            const bool ok_s = !s_active || sel.m_s <= thresholds_.a_s;
            const bool ok_t = !t_active || asg.m_t <= thresholds_.a_t;
            if (ok_s && ok_t) return {std::move(sel), std::move(asg)};
            const double score = (ok_s ? 0.0 : sel.m_s) + (ok_t ? 0.0 : asg.m_t);
            if (score < best_score) {
                best_score = score;
                best_sel = std::move(sel);
                best_asg = std::move(asg);
            }
        }
        throw MaxAttemptsError("joint draw: no acceptable (Z,T) pair within " +
                                   std::to_string(cap) + " attempts",
                               std::move(best_sel), std::move(best_asg));
    }

private:
    std::optional<AssignmentBalance> make_assignment_balance(const SampleSelection& sel) const {
        if (pop_->dim(Block::X) == 0) {
            if (thresholds_.assignment_active())
                throw ValidationError("rerandomization requires X covariates");
            return std::nullopt;
        }
        try {
            return AssignmentBalance(*pop_, sel, plan_);
        } catch (const SingularMatrixError&) {
            if (thresholds_.assignment_active()) throw;
            return std::nullopt;
        }
    }

    const Population* pop_;
    ResolvedPlan plan_;
    ResolvedThresholds thresholds_;
    std::optional<SamplingBalance> sampling_balance_;
    std::vector<std::vector<int>> perm_;
    std::vector<int> scratch_;
    std::vector<int> swap_log_;
};

// Accepted draw as flat CSV: `unit_id, z, t, attempt_count, m_s, m_t`.
inline std::string export_draw_csv(const Population& pop, const SampleSelection& sel,
                                   const Assignment* asg) {
    std::ostringstream out;
    out << "unit_id,z,t,attempt_count,m_s,m_t\n";
    const long long attempts =
        sel.attempts + (asg ? asg->attempts : 0);
    for (int i = 0; i < pop.size(); ++i) {
        out << pop.unit_id(i) << ',' << static_cast<int>(sel.z[i]) << ',';
        if (sel.z[i] && asg) out << static_cast<int>(asg->t[i]);
        out << ',' << attempts << ',' << format_full(sel.m_s) << ','
            << format_full(asg ? asg->m_t : std::nan("")) << '\n';
    }
    return out.str();
}

} // namespace srsrr
