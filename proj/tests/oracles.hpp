// Test-only dense reference implementations. Everything here materializes the
// full d^3 tensor (or the d^2 x r lift / d^2 x d^2 diagonal) and loops over
// plain indices, independent of the library's canonical-orbit code paths.
#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "tensorciq/rng.hpp"
#include "tensorciq/synth.hpp"
#include "tensorciq/tensor.hpp"
#include "tensorciq/tensor_ops.hpp"

namespace oracles {

using tensorciq::CanonicalTriple;
using tensorciq::FactorMatrix;
using tensorciq::Matrix;
using tensorciq::NoiseSpec;
using tensorciq::Observation;
using tensorciq::ObservationSet;
using tensorciq::Vector;

inline double test_gaussian(std::uint64_t seed, std::uint64_t counter) {
    return tensorciq::rng::gaussian(seed, tensorciq::rng::Stream::factors, counter);
}

inline double test_uniform(std::uint64_t seed, std::uint64_t counter) {
    return tensorciq::rng::uniform(seed, tensorciq::rng::Stream::mask, counter);
}

inline Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
    Matrix m(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r)
            m(r, c) = test_gaussian(seed, static_cast<std::uint64_t>(c) * rows + r);
    return m;
}

// Random observation set covering roughly a `fill` fraction of canonical
// triples with i.i.d. normal values.
inline ObservationSet random_obs(int d, double fill, std::uint64_t seed, double p = 1.0) {
    std::vector<Observation> entries;
    tensorciq::for_each_canonical(d, [&](const CanonicalTriple& t) {
        const auto c = static_cast<std::uint64_t>(tensorciq::canonical_index(t));
        if (test_uniform(seed, c) < fill)
            entries.push_back(Observation{t, test_gaussian(seed ^ 0xabcdef, c)});
    });
    if (entries.empty())
        entries.push_back(Observation{tensorciq::canonicalize(0, 0, 0, d), 1.0});
    return ObservationSet(d, p, std::move(entries));
}

// Full d^3 array, index (i*d + j)*d + k.
struct DenseCube {
    int d;
    std::vector<double> v;
    explicit DenseCube(int d_) : d(d_), v(static_cast<std::size_t>(d_) * d_ * d_, 0.0) {}
    double& at(int i, int j, int k) { return v[(static_cast<std::size_t>(i) * d + j) * d + k]; }
    double at(int i, int j, int k) const {
        return v[(static_cast<std::size_t>(i) * d + j) * d + k];
    }
};

// Symmetric-closure expansion of an observation set; mask marks membership.
inline std::pair<DenseCube, DenseCube> dense_from_obs(const ObservationSet& obs) {
    DenseCube values(obs.d()), mask(obs.d());
    for (const auto& e : obs.entries())
        tensorciq::for_each_orbit_position(e.triple, [&](int i, int j, int k) {
            values.at(i, j, k) = e.value;
            mask.at(i, j, k) = 1.0;
        });
    return {values, mask};
}

inline DenseCube dense_cp(const FactorMatrix& U) {
    DenseCube out(U.d());
    const Matrix& m = U.matrix();
    for (int i = 0; i < U.d(); ++i)
        for (int j = 0; j < U.d(); ++j)
            for (int k = 0; k < U.d(); ++k)
                for (int l = 0; l < U.r(); ++l) out.at(i, j, k) += m(i, l) * m(j, l) * m(k, l);
    return out;
}

// Mode-3 matricization by the index rule, row k, column (i-1)d + j.
inline Matrix dense_unfold(const DenseCube& T) {
    const int d = T.d;
    Matrix A = Matrix::Zero(d, d * d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) A(k, i * d + j) = T.at(i, j, k);
    return A;
}

inline Matrix dense_tvp(const DenseCube& T, const Vector& theta) {
    const int d = T.d;
    Matrix M = Matrix::Zero(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) M(i, j) += T.at(i, j, k) * theta(k);
    return M;
}

// Loss summed over every position of the symmetric closure, no multiplicities.
inline double dense_loss(const FactorMatrix& U, const ObservationSet& obs) {
    const auto [values, mask] = dense_from_obs(obs);
    const DenseCube fit = dense_cp(U);
    double f = 0.0;
    const int d = obs.d();
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k)
                if (mask.at(i, j, k) != 0.0) {
                    const double r = fit.at(i, j, k) - values.at(i, j, k);
                    f += r * r;
                }
    return f;
}

// Central finite differences of the library loss.
inline Matrix gradient_fd(const FactorMatrix& U, const ObservationSet& obs, double h = 1e-6) {
    Matrix g(U.d(), U.r());
    for (int l = 0; l < U.r(); ++l)
        for (int m = 0; m < U.d(); ++m) {
            Matrix up = U.matrix(), dn = U.matrix();
            up(m, l) += h;
            dn(m, l) -= h;
            g(m, l) = (tensorciq::loss(FactorMatrix(up), obs) -
                       tensorciq::loss(FactorMatrix(dn), obs)) /
                      (2.0 * h);
        }
    return g;
}

// Explicit d^2 x r lift, row (i*d + j).
inline Matrix dense_lift(const FactorMatrix& U) {
    const int d = U.d();
    Matrix lift(d * d, U.r());
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int l = 0; l < U.r(); ++l)
                lift(i * d + j, l) = U.entry(i, l) * U.entry(j, l);
    return lift;
}

// Plug-in covariance through the explicit d^2 x d^2 diagonal D_k.
inline Matrix dense_sigma_plugin(const FactorMatrix& U, const ObservationSet& obs,
                                 const std::vector<double>& ehat, double p, int k) {
    const int d = obs.d();
    const Matrix lift = dense_lift(U);
    Vector diag = Vector::Zero(d * d);
    const auto& entries = obs.entries();
    for (std::size_t n = 0; n < entries.size(); ++n) {
        const double e2 = ehat[n] * ehat[n] / p;
        tensorciq::for_each_orbit_position(entries[n].triple, [&](int i, int j, int kk) {
            if (kk == k) diag(i * d + j) = e2;
        });
    }
    const Matrix G = lift.transpose() * lift;
    const Matrix Ginv = G.inverse();
    return (2.0 / p) * Ginv * lift.transpose() * diag.asDiagonal() * lift * Ginv;
}

// Oracle covariance through the explicit d^2 x d^2 diagonal D*_k.
inline Matrix dense_sigma_oracle(const FactorMatrix& Ustar, const NoiseSpec& noise, double p,
                                 int k) {
    const int d = Ustar.d();
    const Matrix lift = dense_lift(Ustar);
    Vector diag(d * d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) diag(i * d + j) = noise.variance(i, j, k);
    const Matrix G = lift.transpose() * lift;
    const Matrix Ginv = G.inverse();
    return (2.0 / p) * Ginv * lift.transpose() * diag.asDiagonal() * lift * Ginv;
}

// Entry variance through the explicit lift (independent route).
inline double dense_entry_var(const FactorMatrix& U, const std::vector<Matrix>& sigma, int i,
                              int j, int k) {
    const int d = U.d();
    const Matrix lift = dense_lift(U);
    auto q = [&](int a, int b, int slice) {
        const Vector row = lift.row(a * d + b).transpose();
        return row.dot(sigma[slice] * row);
    };
    if (i != j && j != k && i != k) return q(j, k, i) + q(i, k, j) + q(i, j, k);
    if (i == j && j == k) return 9.0 * q(i, i, i);
    const int x = (i == j) ? i : (j == k ? j : i);
    const int y = (i == j) ? k : (j == k ? i : j);
    return 4.0 * q(x, y, x) + q(x, x, y);
}

}  // namespace oracles
