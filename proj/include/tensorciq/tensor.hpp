#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tensorciq/common.hpp"
#include "tensorciq/triples.hpp"

namespace tensorciq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// d x r matrix whose columns are CP factors. Immutable after construction.
class FactorMatrix {
public:
    FactorMatrix(int d, int r) : m_(Matrix::Zero(d, r)) { check_shape(d, r); }

    explicit FactorMatrix(Matrix m) : m_(std::move(m)) {
        check_shape(static_cast<int>(m_.rows()), static_cast<int>(m_.cols()));
        if (!m_.allFinite()) throw std::invalid_argument("FactorMatrix: non-finite entries");
    }

    int d() const { return static_cast<int>(m_.rows()); }
    int r() const { return static_cast<int>(m_.cols()); }
    const Matrix& matrix() const { return m_; }
    auto column(int l) const { return m_.col(l); }
    double entry(int row, int col) const { return m_(row, col); }

private:
    static void check_shape(int d, int r) {
        if (d < 1 || r < 1 || r > d)
            throw std::invalid_argument("FactorMatrix: need 1 <= r <= d");
    }
    Matrix m_;
};

// One observed canonical triple and its value.
struct Observation {
    CanonicalTriple triple;
    double value;
};

// Canonical sparse store of observed symmetric triples. Entries are kept in
// canonical (sorted) order so that every reduction over the set has a fixed
// order; the set is immutable once built.
class ObservationSet {
public:
    ObservationSet(int d, double p, std::vector<Observation> entries)
        : d_(d), p_(p), entries_(std::move(entries)) {
        if (d_ < 1) throw std::invalid_argument("ObservationSet: d must be positive");
        if (!(p_ > 0.0) || p_ > 1.0)
            throw std::invalid_argument("ObservationSet: p must lie in (0, 1]");
        std::sort(entries_.begin(), entries_.end(),
                  [](const Observation& a, const Observation& b) { return a.triple < b.triple; });
        for (std::size_t n = 0; n < entries_.size(); ++n) {
            const auto& t = entries_[n].triple;
            if (t.i < 0 || t.k >= d_ || t.i > t.j || t.j > t.k)
                throw std::invalid_argument("ObservationSet: non-canonical triple");
            if (!std::isfinite(entries_[n].value))
                throw std::invalid_argument("ObservationSet: non-finite value");
            if (n > 0 && entries_[n - 1].triple == t)
                throw std::invalid_argument("ObservationSet: duplicate triple");
        }
    }

    int d() const { return d_; }
    double p() const { return p_; }
    std::size_t size() const { return entries_.size(); }
    const std::vector<Observation>& entries() const { return entries_; }

    // Membership of any permuted triple equals membership of its canonical form.
    bool contains(int i, int j, int k) const { return find(i, j, k) != nullptr; }

    std::optional<double> value_at(int i, int j, int k) const {
        const Observation* obs = find(i, j, k);
        if (!obs) return std::nullopt;
        return obs->value;
    }

private:
    const Observation* find(int i, int j, int k) const {
        const CanonicalTriple t = canonicalize(i, j, k, d_);
        auto it = std::lower_bound(
            entries_.begin(), entries_.end(), t,
            [](const Observation& o, const CanonicalTriple& q) { return o.triple < q; });
        if (it == entries_.end() || !(it->triple == t)) return nullptr;
        return &*it;
    }

    int d_;
    double p_;
    std::vector<Observation> entries_;
};

// Symmetric d x d x d tensor stored as one value per canonical triple.
class DenseSymTensor {
public:
    explicit DenseSymTensor(int d)
        : d_(d), values_(static_cast<std::size_t>(canonical_triple_count(d)), 0.0) {
        if (d < 1) throw std::invalid_argument("DenseSymTensor: d must be positive");
    }

    int d() const { return d_; }

    double get(int i, int j, int k) const {
        return values_[static_cast<std::size_t>(canonical_index(canonicalize(i, j, k, d_)))];
    }
    double get(const CanonicalTriple& t) const {
        return values_[static_cast<std::size_t>(canonical_index(t))];
    }
    void set(const CanonicalTriple& t, double v) {
        values_[static_cast<std::size_t>(canonical_index(t))] = v;
    }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

private:
    int d_;
    std::vector<double> values_;  // indexed by canonical_index
};

}  // namespace tensorciq
