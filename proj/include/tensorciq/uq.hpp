#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "tensorciq/common.hpp"
#include "tensorciq/normal.hpp"
#include "tensorciq/synth.hpp"
#include "tensorciq/tensor.hpp"
#include "tensorciq/tensor_ops.hpp"

namespace tensorciq {

enum class Provenance { plugin, oracle };

// Per-slice r x r covariance of the k-th row of the factor estimate.
struct CovarianceEstimate {
    int k = 0;
    Matrix matrix;
    Provenance provenance = Provenance::plugin;
};

struct EntryVariance {
    CanonicalTriple triple;
    double value = 0.0;
    Provenance provenance = Provenance::plugin;
};

struct ConfidenceInterval {
    double center = 0.0;
    double half_width = 0.0;
    double level = 0.0;  // 1 - alpha

    double lower() const { return center - half_width; }
    double upper() const { return center + half_width; }
    bool covers(double x) const { return lower() <= x && x <= upper(); }
};

struct PermutationMap {
    // mapping[l] = index of the estimated column matching reference column l.
    std::vector<int> mapping;
    double residual = 0.0;  // min over examined bijections of ||U Pi - Uref||_F
};

// Residual noise estimates  Ehat = T^obs - cp_eval(U, .)  on every observed
// canonical triple, aligned with obs.entries().
inline std::vector<double> estimate_noise(const ObservationSet& obs, const FactorMatrix& U) {
    if (U.d() != obs.d()) throw std::invalid_argument("estimate_noise: dimension mismatch");
    std::vector<double> out;
    out.reserve(obs.size());
    for (const auto& e : obs.entries()) out.push_back(e.value - cp_eval(U, e.triple));
    return out;
}

namespace detail {

// Inverse of the lifted Gram matrix with a condition-number guard.
inline Matrix gram_inverse(const FactorMatrix& U) {
    const Matrix G = gram_lifted(U);
    Eigen::SelfAdjointEigenSolver<Matrix> es(G);
    const auto& ev = es.eigenvalues();
    const double lmax = ev(ev.size() - 1), lmin = ev(0);
    if (!(lmin > 0.0) || lmax / lmin > 1e12)
        throw SingularGram("lifted Gram matrix is numerically singular (cond > 1e12)");
    return es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

inline Matrix sandwich(const Matrix& Ginv, const Matrix& S, double p) {
    return (2.0 / p) * Ginv * S * Ginv;
}

}  // namespace detail

// Plug-in covariance for slice k:
//   Sigma_k = (2/p) G^{-1} [ sum over ordered (i,j) with (i,j,k) in Omega of
//             p^{-1} Ehat^2_{i,j,k} * utilde_{ij} utilde_{ij}^T ] G^{-1},
// accumulated from the slice's observed pairs without materializing the
// d^2 x d^2 diagonal.
inline CovarianceEstimate estimate_sigma_k(const FactorMatrix& U, const std::vector<double>& ehat,
                                           const ObservationSet& obs, double p, int k) {
    if (ehat.size() != obs.size()) throw std::invalid_argument("estimate_sigma_k: ehat mismatch");
    if (k < 0 || k >= obs.d()) throw IndexError("estimate_sigma_k: slice out of range");
    const int r = U.r();
    const Matrix Ginv = detail::gram_inverse(U);
    Matrix S = Matrix::Zero(r, r);
    const auto& entries = obs.entries();
    for (std::size_t n = 0; n < entries.size(); ++n) {
        const auto& t = entries[n].triple;
        if (t.i != k && t.j != k && t.k != k) continue;
        const double w = ehat[n] * ehat[n] / p;
        for_each_slice_pair(t, [&](const SlicePair& sp) {
            if (sp.slice != k) return;
            const Vector row = lifted_row(U, sp.a, sp.b);
            S.noalias() += (sp.copies * w) * row * row.transpose();
        });
    }
    return CovarianceEstimate{k, detail::sandwich(Ginv, S, p), Provenance::plugin};
}

// All d plug-in covariances in one pass over the observations (the Gram
// inverse is shared across slices).
inline std::vector<CovarianceEstimate> estimate_sigma_all(const FactorMatrix& U,
                                                          const std::vector<double>& ehat,
                                                          const ObservationSet& obs, double p) {
    if (ehat.size() != obs.size()) throw std::invalid_argument("estimate_sigma_all: ehat mismatch");
    const int d = obs.d(), r = U.r();
    const Matrix Ginv = detail::gram_inverse(U);
    std::vector<Matrix> S(d, Matrix::Zero(r, r));
    const auto& entries = obs.entries();
    for (std::size_t n = 0; n < entries.size(); ++n) {
        const double w = ehat[n] * ehat[n] / p;
        for_each_slice_pair(entries[n].triple, [&](const SlicePair& sp) {
            const Vector row = lifted_row(U, sp.a, sp.b);
            S[sp.slice].noalias() += (sp.copies * w) * row * row.transpose();
        });
    }
    std::vector<CovarianceEstimate> out;
    out.reserve(d);
    for (int k = 0; k < d; ++k)
        out.push_back(CovarianceEstimate{k, detail::sandwich(Ginv, S[k], p), Provenance::plugin});
    return out;
}

// Oracle covariance for slice k:
//   Sigma*_k = (2/p) G*^{-1} [ sum over all ordered (i,j) of
//              sigma^2_{i,j,k} * utilde*_{ij} utilde*_{ij}^T ] G*^{-1}.
inline CovarianceEstimate oracle_sigma_k(const FactorMatrix& Ustar, const NoiseSpec& noise,
                                         double p, int k) {
    const int d = Ustar.d(), r = Ustar.r();
    if (noise.d() != d) throw std::invalid_argument("oracle_sigma_k: dimension mismatch");
    if (k < 0 || k >= d) throw IndexError("oracle_sigma_k: slice out of range");
    const Matrix Ginv = detail::gram_inverse(Ustar);
    Matrix S = Matrix::Zero(r, r);
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) {
            const int copies = (a == b) ? 1 : 2;
            const Vector row = lifted_row(Ustar, a, b);
            S.noalias() += (copies * noise.variance(a, b, k)) * row * row.transpose();
        }
    return CovarianceEstimate{k, detail::sandwich(Ginv, S, p), Provenance::oracle};
}

inline std::vector<CovarianceEstimate> oracle_sigma_all(const FactorMatrix& Ustar,
                                                        const NoiseSpec& noise, double p) {
    std::vector<CovarianceEstimate> out;
    out.reserve(Ustar.d());
    for (int k = 0; k < Ustar.d(); ++k) out.push_back(oracle_sigma_k(Ustar, noise, p, k));
    return out;
}

// Asymptotic variance of the estimated tensor entry at t, assembled from the
// per-slice covariances:
//   distinct i<j<k :  q(jk, S_i) + q(ik, S_j) + q(ij, S_k)
//   two equal x,x,y:  4 q(xy, S_x) + q(xx, S_y)
//   diagonal x,x,x :  9 q(xx, S_x)
// with q(ab, S) = utilde_ab^T S utilde_ab. Tiny negatives are clamped to 0.
inline EntryVariance entry_variance(const FactorMatrix& U,
                                    const std::vector<CovarianceEstimate>& sigmas,
                                    const CanonicalTriple& t) {
    if (static_cast<int>(sigmas.size()) != U.d())
        throw std::invalid_argument("entry_variance: need one covariance per slice");
    auto q = [&](int a, int b, int slice) {
        const Vector row = lifted_row(U, a, b);
        return row.dot(sigmas[slice].matrix * row);
    };
    double v;
    if (t.multiplicity == 6) {
        v = q(t.j, t.k, t.i) + q(t.i, t.k, t.j) + q(t.i, t.j, t.k);
    } else if (t.multiplicity == 1) {
        v = 9.0 * q(t.i, t.i, t.i);
    } else {
        const int x = (t.i == t.j) ? t.i : t.j;  // repeated index
        const int y = (t.i == t.j) ? t.k : t.i;  // single index
        v = 4.0 * q(x, y, x) + q(x, x, y);
    }
    return EntryVariance{t, std::max(v, 0.0), sigmas.empty() ? Provenance::plugin
                                                             : sigmas.front().provenance};
}

namespace detail {

inline ConfidenceInterval make_ci(double center, double variance, double alpha,
                                  const char* what) {
    if (!(alpha > 0.0) || alpha > 1.0)
        throw std::invalid_argument(std::string(what) + ": alpha must lie in (0, 1]");
    if (variance < -1e-12)
        throw NegativeVariance(std::string(what) + ": variance " + std::to_string(variance));
    const double v = std::max(variance, 0.0);
    const double z = (alpha == 1.0) ? 0.0 : norm_ppf(1.0 - alpha / 2.0);
    return ConfidenceInterval{center, z * std::sqrt(v), 1.0 - alpha};
}

}  // namespace detail

// (1-alpha) confidence interval for the k-th entry of the l-th tensor factor:
// center u_{l,k}, half-width Phi^{-1}(1 - alpha/2) * sqrt((Sigma_k)_{l,l}).
inline ConfidenceInterval ci_factor(double u_lk, const CovarianceEstimate& sigma_k, int l,
                                    double alpha) {
    if (l < 0 || l >= sigma_k.matrix.rows()) throw IndexError("ci_factor: l out of range");
    return detail::make_ci(u_lk, sigma_k.matrix(l, l), alpha, "ci_factor");
}

// (1-alpha) confidence interval for a tensor entry.
inline ConfidenceInterval ci_entry(double t_ijk, const EntryVariance& v, double alpha) {
    return detail::make_ci(t_ijk, v.value, alpha, "ci_entry");
}

namespace detail {

// O(n^3) Hungarian algorithm (min-cost assignment) on a square cost matrix.
inline std::vector<int> hungarian(const Matrix& cost) {
    const int n = static_cast<int>(cost.rows());
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = std::numeric_limits<double>::infinity();
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> match(n);  // match[column] = row
    for (int j = 1; j <= n; ++j) match[j - 1] = p[j] - 1;
    return match;
}

}  // namespace detail

// Frobenius-optimal column permutation between an estimate and a reference.
// Exhaustive for r <= 8; exact assignment (the objective is separable) above.
inline PermutationMap align_permutation(const FactorMatrix& U, const FactorMatrix& Uref) {
    if (U.d() != Uref.d() || U.r() != Uref.r())
        throw std::invalid_argument("align_permutation: shape mismatch");
    const int r = U.r();
    Matrix cost(r, r);  // cost(s, t) = ||u_s - uref_t||^2
    for (int s = 0; s < r; ++s)
        for (int t = 0; t < r; ++t) cost(s, t) = (U.column(s) - Uref.column(t)).squaredNorm();

    std::vector<int> best;
    if (r <= 8) {
        std::vector<int> perm(r);
        std::iota(perm.begin(), perm.end(), 0);
        double best_cost = std::numeric_limits<double>::infinity();
        do {
            double c = 0.0;
            for (int t = 0; t < r; ++t) c += cost(perm[t], t);
            if (c < best_cost) {
                best_cost = c;
                best = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        best = detail::hungarian(cost);
    }
    double total = 0.0;
    for (int t = 0; t < r; ++t) total += cost(best[t], t);
    return PermutationMap{std::move(best), std::sqrt(total)};
}

// Entry-strength screen:
//   (||utilde_{jk}|| + ||utilde_{ij}|| + ||utilde_{ik}||) / max_{(a,b)} ||utilde_{ab}|| >= tau,
// the denominator being the 2,inf norm of the lift scanned over all pairs.
inline bool entry_strength_ok(const FactorMatrix& Uref, const CanonicalTriple& t, double tau) {
    if (tau < 0.0) throw std::invalid_argument("entry_strength_ok: tau must be nonnegative");
    double max_norm = 0.0;
    for (int a = 0; a < Uref.d(); ++a)
        for (int b = a; b < Uref.d(); ++b)
            max_norm = std::max(max_norm, lifted_row(Uref, a, b).norm());
    const double num = lifted_row(Uref, t.j, t.k).norm() + lifted_row(Uref, t.i, t.j).norm() +
                       lifted_row(Uref, t.i, t.k).norm();
    if (max_norm == 0.0) return tau == 0.0;
    return num / max_norm >= tau;
}

struct CrBounds {
    std::vector<double> factor;  // 2 sigma_min^2 d / (p ||u*_l||^4), per l
    double tensor = 0.0;         // 6 sigma_min^2 d r / p
};

// Cramer-Rao reference values for unbiased estimation.
inline CrBounds cr_bounds(double sigma_min, double p, int d, int r, const FactorMatrix& Uref) {
    if (!(sigma_min > 0.0)) throw std::invalid_argument("cr_bounds: sigma_min must be positive");
    CrBounds out;
    out.factor.reserve(r);
    for (int l = 0; l < r; ++l) {
        const double n2 = Uref.column(l).squaredNorm();
        out.factor.push_back(2.0 * sigma_min * sigma_min * d / (p * n2 * n2));
    }
    out.tensor = 6.0 * sigma_min * sigma_min * d * r / p;
    return out;
}

}  // namespace tensorciq
