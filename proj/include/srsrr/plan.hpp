#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "srsrr/error.hpp"
#include "srsrr/io.hpp"
#include "srsrr/population.hpp"
#include "srsrr/special.hpp"

namespace srsrr {

// One rejection stage: exactly one of {threshold a, acceptance level p}.
// a = inf (equivalently p = 1) disables rejection for the stage.
struct StageThreshold {
    std::optional<double> a;
    std::optional<double> p;

    bool disabled() const {
        return (!a && !p) || (a && std::isinf(*a)) || (p && *p >= 1.0);
    }
};

struct DesignPlan {
    struct StratumCounts {
        std::string stratum;
        int n = 0;
        int n1 = 0;
    };

    // Either explicit per-stratum counts, or the proportionate shorthand
    // (f, e1) applied to every stratum.
    std::vector<StratumCounts> strata;
    std::optional<double> f;
    std::optional<double> e1;
    std::optional<int> expected_n;

    StageThreshold sampling;
    StageThreshold assignment;
    std::optional<long long> max_attempts;

    static DesignPlan from_json(const json& j, const std::string& context) {
        ensure_keys(j,
                    {"schema_version", "strata", "f", "e1", "n", "a_s", "p_s", "a_t", "p_t",
                     "max_attempts"},
                    context);
        if (!j.contains("schema_version") || j.at("schema_version").get<int>() != 1)
            throw ConfigError(context + ": schema_version must be 1");
        DesignPlan plan;
        if (j.contains("strata")) {
            for (const auto& row : j.at("strata")) {
                ensure_keys(row, {"stratum", "n", "n1"}, context + ".strata");
                DesignPlan::StratumCounts c;
                c.stratum = row.at("stratum").is_string()
                                ? row.at("stratum").get<std::string>()
                                : row.at("stratum").dump();
                c.n = row.at("n").get<int>();
                c.n1 = row.at("n1").get<int>();
                plan.strata.push_back(c);
            }
        }
        auto opt_threshold = [&](const char* key) -> std::optional<double> {
            if (!j.contains(key)) return std::nullopt;
            const auto& v = j.at(key);
            if (v.is_string()) {
                if (v.get<std::string>() == "inf") return kInf;
                throw ConfigError(context + ": " + key + " must be a number or \"inf\"");
            }
            return v.get<double>();
        };
        if (j.contains("f")) plan.f = j.at("f").get<double>();
        if (j.contains("e1")) plan.e1 = j.at("e1").get<double>();
        if (j.contains("n")) plan.expected_n = j.at("n").get<int>();
        plan.sampling.a = opt_threshold("a_s");
        plan.sampling.p = opt_threshold("p_s");
        plan.assignment.a = opt_threshold("a_t");
        plan.assignment.p = opt_threshold("p_t");
        if (j.contains("max_attempts")) plan.max_attempts = j.at("max_attempts").get<long long>();
        return plan;
    }

    static DesignPlan from_json_file(const std::string& path) {
        return from_json(read_json_file(path), path);
    }
};

// full: estimator-grade arm sizes (2 <= n_[k]1 <= n_[k]-2).
// design_only: both arms merely nonempty; enough for drawing designs and
// for the exact enumeration probe, but not for variance estimation.
enum class PlanStrictness { full, design_only };

// Structurally validated plan with all derived proportions materialized.
struct ResolvedPlan {
    std::vector<int> n;   // n_[k]
    std::vector<int> n1;  // n_[k]1
    std::vector<int> n0;
    std::vector<double> f_k, e_k1, e_k0, pi_k;
    int n_total = 0;
    double f = 0.0;

    int num_strata() const { return static_cast<int>(n.size()); }
};

inline ResolvedPlan validate_plan(const Population& pop, const DesignPlan& plan,
                                  PlanStrictness strictness = PlanStrictness::full) {
    const int K = pop.num_strata();
    ResolvedPlan rp;
    rp.n.assign(K, 0);
    rp.n1.assign(K, 0);

    if (!plan.strata.empty()) {
        if (plan.f || plan.e1)
            throw ValidationError("plan gives both per-stratum counts and global fractions");
        std::vector<bool> seen(K, false);
        for (const auto& c : plan.strata) {
            int k = -1;
            for (int kk = 0; kk < K; ++kk)
                if (pop.stratum_label(kk) == c.stratum) { k = kk; break; }
            if (k < 0)
                throw ValidationError("plan references unknown stratum '" + c.stratum + "'");
            if (seen[k])
                throw ValidationError("plan lists stratum '" + c.stratum + "' twice");
            seen[k] = true;
            rp.n[k] = c.n;
            rp.n1[k] = c.n1;
        }
        for (int k = 0; k < K; ++k)
            if (!seen[k])
                throw ValidationError("plan does not cover stratum '" + pop.stratum_label(k) +
                                      "'");
    } else {
        if (!plan.f || !plan.e1)
            throw ValidationError("plan needs either per-stratum counts or both f and e1");
        if (!(*plan.f > 0.0 && *plan.f <= 1.0))
            throw ValidationError("plan: f must be in (0,1]");
        if (!(*plan.e1 > 0.0 && *plan.e1 < 1.0))
            throw ValidationError("plan: e1 must be in (0,1)");
        for (int k = 0; k < K; ++k) {
            rp.n[k] = static_cast<int>(std::lround(*plan.f * pop.stratum_size(k)));
            rp.n1[k] = static_cast<int>(std::lround(*plan.e1 * rp.n[k]));
        }
    }

    rp.n0.assign(K, 0);
    rp.f_k.assign(K, 0.0);
    rp.e_k1.assign(K, 0.0);
    rp.e_k0.assign(K, 0.0);
    rp.pi_k.assign(K, 0.0);
    const int lo_arm = strictness == PlanStrictness::full ? 2 : 1;
    for (int k = 0; k < K; ++k) {
        const int Nk = pop.stratum_size(k);
        const std::string& label = pop.stratum_label(k);
        if (rp.n[k] < 1 || rp.n[k] > Nk)
            throw ValidationError("stratum '" + label + "': n=" + std::to_string(rp.n[k]) +
                                  " outside [1, N=" + std::to_string(Nk) + "]");
        rp.n0[k] = rp.n[k] - rp.n1[k];
        if (rp.n1[k] < lo_arm || rp.n0[k] < lo_arm)
            throw ValidationError("stratum '" + label + "': n1=" + std::to_string(rp.n1[k]) +
                                  " violates " + std::to_string(lo_arm) + " <= n1 <= n-" +
                                  std::to_string(lo_arm) + " (n=" + std::to_string(rp.n[k]) +
                                  ")");
        rp.n_total += rp.n[k];
        rp.f_k[k] = static_cast<double>(rp.n[k]) / Nk;
        rp.e_k1[k] = static_cast<double>(rp.n1[k]) / rp.n[k];
        rp.e_k0[k] = static_cast<double>(rp.n0[k]) / rp.n[k];
    }
    if (plan.expected_n && *plan.expected_n != rp.n_total)
        throw ValidationError("plan: stratum sizes sum to " + std::to_string(rp.n_total) +
                              " but n=" + std::to_string(*plan.expected_n));
    for (int k = 0; k < K; ++k)
        rp.pi_k[k] = static_cast<double>(rp.n[k]) / rp.n_total;
    rp.f = static_cast<double>(rp.n_total) / pop.size();
    return rp;
}

// ---------------------------------------------------------------------------
// Threshold calibration (asymptotic chi-squared levels)
// ---------------------------------------------------------------------------

// a = chi^2_J quantile at level p; p = 1 means no rejection (a = inf).
inline double calibrate_threshold(int j, double p) {
    if (!(p > 0.0)) throw ValidationError("calibrate_threshold: acceptance level must be > 0");
    if (p >= 1.0) return kInf;
    if (j < 1) throw ValidationError("calibrate_threshold: dimension must be >= 1");
    return chi2_quantile(j, p);
}

struct ResolvedThresholds {
    double a_s = kInf, a_t = kInf;
    double p_s_nominal = 1.0, p_t_nominal = 1.0;  // asymptotic acceptance levels
    std::string s_source = "none", t_source = "none";
    long long max_attempts_s = 50, max_attempts_t = 50;

    bool sampling_active() const { return !std::isinf(a_s); }
    bool assignment_active() const { return !std::isinf(a_t); }

    json to_json() const {
        json j{{"a_s", std::isinf(a_s) ? json("inf") : json(a_s)},
               {"a_t", std::isinf(a_t) ? json("inf") : json(a_t)},
               {"p_s_nominal", p_s_nominal},
               {"p_t_nominal", p_t_nominal},
               {"threshold_source_sampling", s_source},
               {"threshold_source_assignment", t_source},
               {"max_attempts_s", max_attempts_s},
               {"max_attempts_t", max_attempts_t},
               {"calibration", "asymptotic chi-squared acceptance levels"}};
        return j;
    }
};

namespace detail {

inline void resolve_stage(const StageThreshold& st, int dim, const char* stage, double& a_out,
                          double& p_out, std::string& source, long long& attempts,
                          std::optional<long long> max_attempts_override) {
    if (st.a && st.p)
        throw ValidationError(std::string("stage ") + stage +
                              ": give either a threshold or an acceptance level, not both");
    if (st.a) {
        if (!(*st.a > 0.0))
            throw ValidationError(std::string("stage ") + stage + ": threshold must be > 0");
        a_out = *st.a;
        p_out = std::isinf(*st.a) ? 1.0 : (dim >= 1 ? chi2_cdf(dim, *st.a) : 1.0);
        source = "a";
    } else if (st.p) {
        if (!(*st.p > 0.0 && *st.p <= 1.0))
            throw ValidationError(std::string("stage ") + stage +
                                  ": acceptance level must be in (0,1]");
        if (*st.p < 1.0 && dim < 1)
            throw ValidationError(std::string("stage ") + stage +
                                  ": rejection requested but no covariates are declared");
        a_out = calibrate_threshold(std::max(dim, 1), *st.p);
        p_out = *st.p;
        source = "p";
    } else {
        a_out = kInf;
        p_out = 1.0;
        source = "none";
    }
    if (max_attempts_override) {
        if (*max_attempts_override < 1)
            throw ValidationError("max_attempts must be >= 1");
        attempts = *max_attempts_override;
    } else {
        // default: ceil(50 / p) per stage
        attempts = static_cast<long long>(std::ceil(50.0 / std::max(p_out, 1e-12)));
    }
}

} // namespace detail

// Threshold precedence: an explicit a beats p; p is converted through
// calibrate_threshold exactly once per run.
inline ResolvedThresholds resolve_thresholds(const DesignPlan& plan, int j1, int j2) {
    ResolvedThresholds rt;
    detail::resolve_stage(plan.sampling, j1, "sampling", rt.a_s, rt.p_s_nominal, rt.s_source,
                          rt.max_attempts_s, plan.max_attempts);
    detail::resolve_stage(plan.assignment, j2, "assignment", rt.a_t, rt.p_t_nominal, rt.t_source,
                          rt.max_attempts_t, plan.max_attempts);
    return rt;
}

} // namespace srsrr
