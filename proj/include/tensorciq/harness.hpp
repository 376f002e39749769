#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tensorciq/estimator.hpp"
#include "tensorciq/normal.hpp"
#include "tensorciq/rng.hpp"
#include "tensorciq/synth.hpp"
#include "tensorciq/uq.hpp"

namespace tensorciq {

struct ExperimentConfig {
    InstanceConfig instance;
    double alpha = 0.05;
    int trials = 100;
    // Estimator parameters; absent means default_params(d, r, p).
    std::optional<EstimatorParams> params;
    // Number of tracked tensor entries per trial (fixed, seed-derived set);
    // 0 tracks every canonical triple.
    int entry_sample = 2000;
    std::uint64_t master_seed = 0;

    void validate() const {
        instance.validate();
        if (trials < 1) throw std::invalid_argument("ExperimentConfig: trials must be positive");
        if (!(alpha > 0.0) || !(alpha < 1.0))
            throw std::invalid_argument("ExperimentConfig: alpha must lie in (0, 1)");
        if (entry_sample < 0)
            throw std::invalid_argument("ExperimentConfig: entry_sample must be nonnegative");
    }

    EstimatorParams resolved_params() const {
        return params ? *params : default_params(instance.d, instance.r, instance.p);
    }
};

// Tracked-entry set: all canonical triples when count == 0 or count >= total,
// otherwise the `count` triples with the smallest seed-derived hashes
// (a uniform subset), returned in canonical order.
inline std::vector<CanonicalTriple> sample_tracked_entries(int d, int count, std::uint64_t seed) {
    const std::int64_t total = canonical_triple_count(d);
    std::vector<CanonicalTriple> all;
    all.reserve(static_cast<std::size_t>(total));
    for_each_canonical(d, [&](const CanonicalTriple& t) { all.push_back(t); });
    if (count == 0 || count >= total) return all;
    std::vector<std::int64_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
        return rng::mix(seed, rng::Stream::entry_sample, a) <
               rng::mix(seed, rng::Stream::entry_sample, b);
    });
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    std::vector<CanonicalTriple> out;
    out.reserve(count);
    for (std::int64_t n : idx) out.push_back(all[static_cast<std::size_t>(n)]);
    return out;
}

struct TrialReport {
    int trial_index = 0;
    bool failed = false;
    std::string failure_reason;

    // Factor-entry records, aligned to the reference factor l (after the
    // Frobenius-optimal permutation) and coordinate k; layout l * d + k.
    std::vector<double> factor_raw_err;
    std::vector<double> factor_norm_err;         // plugin-normalized R^U
    std::vector<double> factor_norm_err_oracle;  // oracle-normalized (diagnostic)
    std::vector<std::uint8_t> factor_hits;

    // Tensor-entry records for the tracked triples.
    std::vector<double> entry_raw_err;
    std::vector<double> entry_norm_err;
    std::vector<double> entry_norm_err_oracle;
    std::vector<std::uint8_t> entry_hits;

    std::vector<double> l2_factor_sq;  // ||u_{pi(l)} - u*_l||^2 per l
    double l2_tensor_sq = 0.0;         // ||That - T*||_F^2
    std::vector<double> cr_bound_factor;
    double cr_bound_tensor = 0.0;
    double init_loss = 0.0, final_loss = 0.0;
    double wall_time = 0.0;
};

namespace detail {

inline double normalized(double err, double var) {
    if (var > 0.0) return err / std::sqrt(var);
    return err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

}  // namespace detail

// One Monte-Carlo trial: generate an instance from a derived trial seed, run
// the two-stage estimator, align to the truth, build plug-in (and oracle)
// covariances, and record normalized errors and CI hits at level 1 - alpha.
inline TrialReport run_trial(const ExperimentConfig& cfg, int trial_index,
                             const std::vector<CanonicalTriple>* tracked_entries = nullptr) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();
    TrialReport rep;
    rep.trial_index = trial_index;

    std::vector<CanonicalTriple> local_tracked;
    if (!tracked_entries) {
        local_tracked =
            sample_tracked_entries(cfg.instance.d, cfg.entry_sample, cfg.master_seed);
        tracked_entries = &local_tracked;
    }

    InstanceConfig icfg = cfg.instance;
    icfg.seed = rng::derive_seed(cfg.master_seed, rng::Stream::trial, trial_index);
    const std::uint64_t estimator_seed =
        rng::derive_seed(cfg.master_seed, rng::Stream::refine, trial_index);

    try {
        const Instance inst = make_instance(icfg);
        const EstimatorParams params = cfg.resolved_params();
        const Completion fit = complete(inst.obs, icfg.r, params, estimator_seed);
        rep.init_loss = fit.loss_trajectory.front();
        rep.final_loss = fit.loss_trajectory.back();

        const int d = icfg.d, r = icfg.r;
        const double p = icfg.p;
        const FactorMatrix& U = fit.factors;
        const FactorMatrix& Ustar = inst.truth;
        const PermutationMap perm = align_permutation(U, Ustar);

        const std::vector<double> ehat = estimate_noise(inst.obs, U);
        const std::vector<CovarianceEstimate> plug = estimate_sigma_all(U, ehat, inst.obs, p);
        std::vector<CovarianceEstimate> orac;
        if (inst.noise) orac = oracle_sigma_all(Ustar, *inst.noise, p);

        // Factor entries: reference location (l, k) uses estimated column pi(l).
        rep.factor_raw_err.resize(static_cast<std::size_t>(r) * d);
        rep.factor_norm_err.resize(static_cast<std::size_t>(r) * d);
        rep.factor_norm_err_oracle.assign(static_cast<std::size_t>(r) * d, 0.0);
        rep.factor_hits.resize(static_cast<std::size_t>(r) * d);
        rep.l2_factor_sq.assign(r, 0.0);
        for (int l = 0; l < r; ++l) {
            const int m = perm.mapping[l];
            for (int k = 0; k < d; ++k) {
                const double err = U.entry(k, m) - Ustar.entry(k, l);
                const double var = plug[k].matrix(m, m);
                const ConfidenceInterval ci = ci_factor(U.entry(k, m), plug[k], m, cfg.alpha);
                const std::size_t at = static_cast<std::size_t>(l) * d + k;
                rep.factor_raw_err[at] = err;
                rep.factor_norm_err[at] = detail::normalized(err, var);
                if (!orac.empty())
                    rep.factor_norm_err_oracle[at] = detail::normalized(err, orac[k].matrix(l, l));
                rep.factor_hits[at] = ci.covers(Ustar.entry(k, l)) ? 1 : 0;
                rep.l2_factor_sq[l] += err * err;
            }
        }

        // Tensor entries.
        const std::size_t m_entries = tracked_entries->size();
        rep.entry_raw_err.resize(m_entries);
        rep.entry_norm_err.resize(m_entries);
        rep.entry_norm_err_oracle.assign(m_entries, 0.0);
        rep.entry_hits.resize(m_entries);
        for (std::size_t n = 0; n < m_entries; ++n) {
            const CanonicalTriple& t = (*tracked_entries)[n];
            const double est = cp_eval(U, t);
            const double truth = cp_eval(Ustar, t);
            const EntryVariance v = entry_variance(U, plug, t);
            const ConfidenceInterval ci = ci_entry(est, v, cfg.alpha);
            rep.entry_raw_err[n] = est - truth;
            rep.entry_norm_err[n] = detail::normalized(est - truth, v.value);
            if (!orac.empty()) {
                const EntryVariance vo = entry_variance(Ustar, orac, t);
                rep.entry_norm_err_oracle[n] = detail::normalized(est - truth, vo.value);
            }
            rep.entry_hits[n] = ci.covers(truth) ? 1 : 0;
        }

        // l2 risks against this trial's truth, plus the matching reference bounds.
        for_each_canonical(d, [&](const CanonicalTriple& t) {
            const double diff = cp_eval(U, t) - cp_eval(Ustar, t);
            rep.l2_tensor_sq += t.multiplicity * diff * diff;
        });
        if (inst.noise) {
            // Theorem-6 scale uses sigma_max; at beta = 0 it equals sigma_min
            // and the Cramer-Rao bound.
            const double smax = std::sqrt(inst.noise->max_variance());
            const CrBounds b = cr_bounds(smax, p, d, r, Ustar);
            rep.cr_bound_factor = b.factor;
            rep.cr_bound_tensor = b.tensor;
        } else {
            rep.cr_bound_factor.assign(r, 0.0);
        }
    } catch (const InitExhausted& e) {
        rep.failed = true;
        rep.failure_reason = e.what();
    } catch (const NonFiniteError& e) {
        rep.failed = true;
        rep.failure_reason = e.what();
    }
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

// Empirical-vs-theoretical quantile pairs: sorted samples against
// Phi^{-1}((i - 0.5) / n).
inline std::vector<std::pair<double, double>> qq_points(std::vector<double> samples) {
    if (samples.size() < 2) throw std::invalid_argument("qq_points: need at least 2 samples");
    std::sort(samples.begin(), samples.end());
    std::vector<std::pair<double, double>> out;
    out.reserve(samples.size());
    const double n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        out.emplace_back(norm_ppf((static_cast<double>(i) + 0.5) / n), samples[i]);
    return out;
}

// Kolmogorov-Smirnov distance between the empirical CDF and the standard
// normal CDF.
inline double ks_statistic(std::vector<double> samples) {
    if (samples.empty()) throw std::invalid_argument("ks_statistic: need samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d_max = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double cdf = norm_cdf(samples[i]);
        d_max = std::max(d_max, std::abs(static_cast<double>(i + 1) / n - cdf));
        d_max = std::max(d_max, std::abs(cdf - static_cast<double>(i) / n));
    }
    return d_max;
}

struct AggregateReport {
    int trials_total = 0;
    int trials_failed = 0;

    // Per-location coverage rates (hit fraction across successful trials).
    std::vector<double> factor_cr;  // layout l * d + k
    std::vector<double> entry_cr;   // aligned with the tracked-entry set
    double mean_cr_factor = 0.0, std_cr_factor = 0.0;
    double mean_cr_entry = 0.0, std_cr_entry = 0.0;

    std::vector<std::pair<double, double>> qq_factor, qq_entry;
    double ks_factor = 0.0, ks_entry = 0.0;
    double ks_factor_oracle = 0.0, ks_entry_oracle = 0.0;

    std::vector<double> l2_risk_factor;   // mean over trials, per l
    double l2_risk_tensor = 0.0;
    std::vector<double> cr_bound_factor;  // mean over trials, per l
    double cr_bound_tensor = 0.0;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return {mean, std::sqrt(var)};
}

}  // namespace detail

// Order-independent aggregation: reports are re-sorted by trial index, failed
// trials are excluded (and counted), and every statistic is reduced in that
// fixed order, so the result is byte-identical for any scheduling of trials.
inline AggregateReport aggregate(std::vector<TrialReport> reports, const ExperimentConfig& cfg) {
    std::sort(reports.begin(), reports.end(),
              [](const TrialReport& a, const TrialReport& b) { return a.trial_index < b.trial_index; });
    AggregateReport agg;
    agg.trials_total = static_cast<int>(reports.size());
    std::vector<const TrialReport*> ok;
    for (const auto& r : reports) {
        if (r.failed)
            ++agg.trials_failed;
        else
            ok.push_back(&r);
    }
    if (ok.empty()) throw std::invalid_argument("aggregate: no successful trials");

    const std::size_t n_factor = ok.front()->factor_hits.size();
    const std::size_t n_entry = ok.front()->entry_hits.size();
    const double n_ok = static_cast<double>(ok.size());

    agg.factor_cr.assign(n_factor, 0.0);
    agg.entry_cr.assign(n_entry, 0.0);
    std::vector<double> pool_f, pool_e, pool_fo, pool_eo;
    pool_f.reserve(n_factor * ok.size());
    pool_e.reserve(n_entry * ok.size());
    const int r = cfg.instance.r;
    agg.l2_risk_factor.assign(r, 0.0);
    agg.cr_bound_factor.assign(r, 0.0);

    for (const TrialReport* rep : ok) {
        if (rep->factor_hits.size() != n_factor || rep->entry_hits.size() != n_entry)
            throw std::invalid_argument("aggregate: inconsistent report shapes");
        for (std::size_t i = 0; i < n_factor; ++i) agg.factor_cr[i] += rep->factor_hits[i];
        for (std::size_t i = 0; i < n_entry; ++i) agg.entry_cr[i] += rep->entry_hits[i];
        pool_f.insert(pool_f.end(), rep->factor_norm_err.begin(), rep->factor_norm_err.end());
        pool_e.insert(pool_e.end(), rep->entry_norm_err.begin(), rep->entry_norm_err.end());
        pool_fo.insert(pool_fo.end(), rep->factor_norm_err_oracle.begin(),
                       rep->factor_norm_err_oracle.end());
        pool_eo.insert(pool_eo.end(), rep->entry_norm_err_oracle.begin(),
                       rep->entry_norm_err_oracle.end());
        for (int l = 0; l < r; ++l) {
            agg.l2_risk_factor[l] += rep->l2_factor_sq[l];
            agg.cr_bound_factor[l] += rep->cr_bound_factor[l];
        }
        agg.l2_risk_tensor += rep->l2_tensor_sq;
        agg.cr_bound_tensor += rep->cr_bound_tensor;
    }
    for (double& c : agg.factor_cr) c /= n_ok;
    for (double& c : agg.entry_cr) c /= n_ok;
    std::tie(agg.mean_cr_factor, agg.std_cr_factor) = detail::mean_std(agg.factor_cr);
    std::tie(agg.mean_cr_entry, agg.std_cr_entry) = detail::mean_std(agg.entry_cr);
    for (int l = 0; l < r; ++l) {
        agg.l2_risk_factor[l] /= n_ok;
        agg.cr_bound_factor[l] /= n_ok;
    }
    agg.l2_risk_tensor /= n_ok;
    agg.cr_bound_tensor /= n_ok;

    agg.qq_factor = qq_points(pool_f);
    agg.qq_entry = qq_points(pool_e);
    agg.ks_factor = ks_statistic(pool_f);
    agg.ks_entry = ks_statistic(pool_e);
    agg.ks_factor_oracle = ks_statistic(pool_fo);
    agg.ks_entry_oracle = ks_statistic(pool_eo);
    return agg;
}

struct RiskRow {
    std::string quantity;
    double empirical = 0.0;
    double theoretical = 0.0;
    double ratio = 0.0;
};

// Empirical l2 risks next to the matching theoretical values
// (2 sigma^2 d / (p ||u*_l||^4) per factor, 6 sigma^2 d r / p for the tensor).
inline std::vector<RiskRow> risk_table(const AggregateReport& agg, const ExperimentConfig& cfg) {
    std::vector<RiskRow> rows;
    for (int l = 0; l < cfg.instance.r; ++l) {
        const double theo = agg.cr_bound_factor[l];
        rows.push_back(RiskRow{"factor_u" + std::to_string(l + 1), agg.l2_risk_factor[l], theo,
                               theo > 0.0 ? agg.l2_risk_factor[l] / theo : 0.0});
    }
    rows.push_back(RiskRow{"tensor", agg.l2_risk_tensor, agg.cr_bound_tensor,
                           agg.cr_bound_tensor > 0.0 ? agg.l2_risk_tensor / agg.cr_bound_tensor
                                                     : 0.0});
    return rows;
}

// Parallel experiment driver: trials run on `jobs` workers, each trial fully
// deterministic from (master_seed, trial_index); aggregation afterwards is
// order-canonical, so any worker count yields identical results.
inline std::vector<TrialReport> run_trials(const ExperimentConfig& cfg, int jobs) {
    cfg.validate();
    const std::vector<CanonicalTriple> tracked =
        sample_tracked_entries(cfg.instance.d, cfg.entry_sample, cfg.master_seed);
    std::vector<TrialReport> reports(cfg.trials);
    if (jobs < 1) jobs = 1;
    jobs = std::min(jobs, cfg.trials);
    std::atomic<int> next{0};
    auto work = [&]() {
        for (;;) {
            const int idx = next.fetch_add(1);
            if (idx >= cfg.trials) return;
            reports[idx] = run_trial(cfg, idx, &tracked);
        }
    };
    if (jobs == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(jobs);
        for (int w = 0; w < jobs; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    return reports;
}

}  // namespace tensorciq
