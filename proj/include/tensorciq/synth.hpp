#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tensorciq/rng.hpp"
#include "tensorciq/tensor.hpp"
#include "tensorciq/tensor_ops.hpp"
#include "tensorciq/triples.hpp"

namespace tensorciq {

// Per-triple noise variances sigma^2_{i,j,k} for every canonical triple,
// normalized so that their canonical sum equals sigma^2 * d^3 / 6.
class NoiseSpec {
public:
    NoiseSpec(int d, double sigma, double beta, std::vector<double> variances)
        : d_(d), sigma_(sigma), beta_(beta), variances_(std::move(variances)) {
        if (!(sigma > 0.0)) throw std::invalid_argument("NoiseSpec: sigma must be positive");
        if (beta < 0.0) throw std::invalid_argument("NoiseSpec: beta must be nonnegative");
        if (variances_.size() != static_cast<std::size_t>(canonical_triple_count(d)))
            throw std::invalid_argument("NoiseSpec: variance count mismatch");
        min_ = max_ = variances_.front();
        for (double v : variances_) {
            if (!(v > 0.0)) throw std::invalid_argument("NoiseSpec: variances must be positive");
            min_ = std::min(min_, v);
            max_ = std::max(max_, v);
        }
    }

    int d() const { return d_; }
    double sigma() const { return sigma_; }
    double beta() const { return beta_; }
    double variance(const CanonicalTriple& t) const {
        return variances_[static_cast<std::size_t>(canonical_index(t))];
    }
    double variance(int i, int j, int k) const { return variance(canonicalize(i, j, k, d_)); }
    double min_variance() const { return min_; }
    double max_variance() const { return max_; }
    const std::vector<double>& variances() const { return variances_; }

private:
    int d_;
    double sigma_, beta_;
    std::vector<double> variances_;
    double min_ = 0.0, max_ = 0.0;
};

struct InstanceConfig {
    int d = 0;
    int r = 0;
    double p = 1.0;
    double sigma = 0.0;  // sigma == 0 means noiseless
    double beta = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (d < 1 || r < 1 || r > d) throw std::invalid_argument("InstanceConfig: need d >= r >= 1");
        if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("InstanceConfig: need 0 < p <= 1");
        if (sigma < 0.0) throw std::invalid_argument("InstanceConfig: sigma must be nonnegative");
        if (beta < 0.0) throw std::invalid_argument("InstanceConfig: beta must be nonnegative");
    }
};

// Ground-truth factors: r columns of d i.i.d. standard normal entries.
inline FactorMatrix gen_factors(int d, int r, std::uint64_t seed) {
    if (d < r) throw std::invalid_argument("gen_factors: need d >= r");
    Matrix m(d, r);
    for (int l = 0; l < r; ++l)
        for (int i = 0; i < d; ++i)
            m(i, l) = rng::gaussian(seed, rng::Stream::factors,
                                    static_cast<std::uint64_t>(l) * d + i);
    return FactorMatrix(std::move(m));
}

// Symmetric Bernoulli(p) sampling of canonical triples.
inline std::vector<CanonicalTriple> sample_omega(int d, double p, std::uint64_t seed) {
    if (!(p >= 0.0) || p > 1.0) throw std::invalid_argument("sample_omega: need 0 <= p <= 1");
    std::vector<CanonicalTriple> out;
    for_each_canonical(d, [&](const CanonicalTriple& t) {
        const auto c = static_cast<std::uint64_t>(canonical_index(t));
        if (rng::uniform(seed, rng::Stream::mask, c) < p) out.push_back(t);
    });
    return out;
}

// Heteroscedastic variance profile of the experiment protocol:
//   sigma^2_{i,j,k} = sigma^2 * w^beta_{i,j,k} / (sum_{i<=j<=k} w^beta) * d^3/6,
// with w_{i,j,k} i.i.d. Unif[0,1], one draw per canonical orbit.
inline NoiseSpec gen_noise_spec(int d, double sigma, double beta, std::uint64_t seed) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gen_noise_spec: sigma must be positive");
    if (beta < 0.0) throw std::invalid_argument("gen_noise_spec: beta must be nonnegative");
    const auto n = static_cast<std::size_t>(canonical_triple_count(d));
    std::vector<double> wb(n);
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        const double w = rng::uniform(seed, rng::Stream::weights, c);
        wb[c] = (beta == 0.0) ? 1.0 : std::pow(w, beta);
        total += wb[c];
    }
    const double scale = sigma * sigma * (static_cast<double>(d) * d * d / 6.0) / total;
    for (double& v : wb) v *= scale;
    return NoiseSpec(d, sigma, beta, std::move(wb));
}

// One N(0, sigma^2_t) draw per canonical triple in `triples`, addressed by the
// triple's canonical index so a draw never depends on which other triples were
// sampled.
inline std::vector<double> draw_noise(const NoiseSpec& spec,
                                      const std::vector<CanonicalTriple>& triples,
                                      std::uint64_t seed) {
    std::vector<double> out(triples.size());
    for (std::size_t n = 0; n < triples.size(); ++n) {
        const auto c = static_cast<std::uint64_t>(canonical_index(triples[n]));
        out[n] = std::sqrt(spec.variance(triples[n])) * rng::gaussian(seed, rng::Stream::noise, c);
    }
    return out;
}

struct Instance {
    FactorMatrix truth;
    ObservationSet obs;
    // Absent when sigma == 0 (noiseless).
    std::optional<NoiseSpec> noise;
    // Noise realization E on the sampled triples, aligned with obs.entries().
    std::vector<double> noise_values;
};

// Assemble a full instance. Sub-streams for factors, mask, weights and noise
// are independently derived from the master seed.
inline Instance make_instance(const InstanceConfig& cfg) {
    cfg.validate();
    const std::uint64_t seed = cfg.seed;
    FactorMatrix truth = gen_factors(cfg.d, cfg.r, seed);
    std::vector<CanonicalTriple> omega = sample_omega(cfg.d, cfg.p, seed);

    std::optional<NoiseSpec> spec;
    std::vector<double> noise(omega.size(), 0.0);
    if (cfg.sigma > 0.0) {
        spec = gen_noise_spec(cfg.d, cfg.sigma, cfg.beta, seed);
        noise = draw_noise(*spec, omega, seed);
    }

    std::vector<Observation> entries;
    entries.reserve(omega.size());
    FactorMatrix& U = truth;
    for (std::size_t n = 0; n < omega.size(); ++n)
        entries.push_back(Observation{omega[n], cp_eval(U, omega[n]) + noise[n]});
    return Instance{std::move(truth), ObservationSet(cfg.d, cfg.p, std::move(entries)),
                    std::move(spec), std::move(noise)};
}

}  // namespace tensorciq
