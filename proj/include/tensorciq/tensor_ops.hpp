#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <utility>
#include <vector>

#include "tensorciq/tensor.hpp"
#include "tensorciq/triples.hpp"

namespace tensorciq {

// CP evaluation:  sum_l u_{l,i} u_{l,j} u_{l,k}.
inline double cp_eval(const FactorMatrix& U, const CanonicalTriple& t) {
    const Matrix& m = U.matrix();
    double s = 0.0;
    for (int l = 0; l < U.r(); ++l) s += m(t.i, l) * m(t.j, l) * m(t.k, l);
    return s;
}

inline double cp_eval(const FactorMatrix& U, int i, int j, int k) {
    return cp_eval(U, canonicalize(i, j, k, U.d()));
}

namespace detail {

// Triplet expansion of the symmetric closure for mode-3 matricization:
// row k, column (i-1)*d + j  (0-based: i*d + j).
template <typename Fn>
void for_each_unfolded(int d, const CanonicalTriple& t, double v, Fn&& fn) {
    for_each_orbit_position(t, [&](int i, int j, int k) {
        fn(k, static_cast<std::int64_t>(i) * d + j, v);
    });
}

}  // namespace detail

// Mode-3 matricization, d x d^2 sparse: entry (k, (i-1)d + j) = S_{i,j,k}
// over the symmetric closure; unobserved positions are structural zeros.
inline Eigen::SparseMatrix<double> unfold_mode3(const ObservationSet& obs) {
    const int d = obs.d();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(obs.size() * 6);
    for (const auto& e : obs.entries())
        detail::for_each_unfolded(d, e.triple, e.value, [&](int row, std::int64_t col, double v) {
            trips.emplace_back(row, static_cast<int>(col), v);
        });
    Eigen::SparseMatrix<double> A(d, d * d);
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

inline Eigen::SparseMatrix<double> unfold_mode3(const DenseSymTensor& T) {
    const int d = T.d();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(canonical_triple_count(d)) * 6);
    for_each_canonical(d, [&](const CanonicalTriple& t) {
        detail::for_each_unfolded(d, t, T.get(t), [&](int row, std::int64_t col, double v) {
            trips.emplace_back(row, static_cast<int>(col), v);
        });
    });
    Eigen::SparseMatrix<double> A(d, d * d);
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

// Mode-3 tensor-vector product:  M_{i,j} = sum_k S_{i,j,k} theta_k over the
// symmetric closure. M is symmetric.
inline Matrix tvp_mode3(const ObservationSet& obs, const Vector& theta) {
    const int d = obs.d();
    if (theta.size() != d) throw std::invalid_argument("tvp_mode3: theta length mismatch");
    Matrix M = Matrix::Zero(d, d);
    for (const auto& e : obs.entries())
        for_each_orbit_position(e.triple,
                                [&](int i, int j, int k) { M(i, j) += e.value * theta(k); });
    return M;
}

// Inner product <S, v x v x v> over the symmetric closure,
// computed as a multiplicity-weighted canonical sum.
inline double cubic_form(const ObservationSet& obs, const Vector& v) {
    double s = 0.0;
    for (const auto& e : obs.entries()) {
        const auto& t = e.triple;
        s += t.multiplicity * e.value * v(t.i) * v(t.j) * v(t.k);
    }
    return s;
}

// Least-squares loss over the symmetric closure of Omega,
// f(U) = sum_{(i,j,k) in Omega} (cp_eval(U) - T^obs)^2, implemented as a
// multiplicity-weighted sum over canonical triples.
inline double loss(const FactorMatrix& U, const ObservationSet& obs) {
    if (U.d() != obs.d()) throw std::invalid_argument("loss: dimension mismatch");
    double f = 0.0;
    for (const auto& e : obs.entries()) {
        const double res = cp_eval(U, e.triple) - e.value;
        f += e.triple.multiplicity * res * res;
    }
    return f;
}

namespace detail {

// Shared accumulation for the gradient of f; returns the loss alongside so
// gd_refine gets the trajectory for free. Fixed canonical-order reduction.
inline double gradient_accumulate(const FactorMatrix& U, const ObservationSet& obs, Matrix& grad) {
    const Matrix& m = U.matrix();
    const int r = U.r();
    grad.setZero(U.d(), r);
    double f = 0.0;
    for (const auto& e : obs.entries()) {
        const int i = e.triple.i, j = e.triple.j, k = e.triple.k;
        const double res = cp_eval(U, e.triple) - e.value;
        f += e.triple.multiplicity * res * res;
        const double c = 2.0 * e.triple.multiplicity * res;
        for (int l = 0; l < r; ++l) {
            const double ui = m(i, l), uj = m(j, l), uk = m(k, l);
            grad(i, l) += c * uj * uk;
            grad(j, l) += c * ui * uk;
            grad(k, l) += c * ui * uj;
        }
    }
    return f;
}

}  // namespace detail

// Gradient of f (the symmetric-closure loss above); equals 6p * grad g with
// g = f / (6p) of the mode-3 unfolded form.
inline Matrix gradient(const FactorMatrix& U, const ObservationSet& obs) {
    if (U.d() != obs.d()) throw std::invalid_argument("gradient: dimension mismatch");
    Matrix g;
    detail::gradient_accumulate(U, obs, g);
    return g;
}

// Row (i,j) of the lifted factor matrix:  [u_{s,i} u_{s,j}]_{s=1..r}.
// The full d^2 x r lift is never materialized.
inline Vector lifted_row(const FactorMatrix& U, int i, int j) {
    const int d = U.d();
    if (i < 0 || j < 0 || i >= d || j >= d) throw IndexError("lifted_row: index out of range");
    const Matrix& m = U.matrix();
    return (m.row(i).array() * m.row(j).array()).transpose();
}

// Gram matrix of the lift:  entry (s,t) = (u_s^T u_t)^2. Symmetric PSD.
inline Matrix gram_lifted(const FactorMatrix& U) {
    Matrix G = U.matrix().transpose() * U.matrix();
    return G.array().square();
}

}  // namespace tensorciq
