#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>

#include "tensorciq/common.hpp"

namespace tensorciq {

// Canonical representative of a symmetric index orbit: 0-based i <= j <= k,
// with the orbit size as multiplicity (1 if i=j=k, 3 if exactly two equal,
// 6 if all distinct). Indices are 0-based everywhere inside the library;
// file formats and the CLI convert to 1-based at the boundary.
struct CanonicalTriple {
    int i = 0;
    int j = 0;
    int k = 0;
    int multiplicity = 1;

    friend bool operator==(const CanonicalTriple& a, const CanonicalTriple& b) {
        return a.i == b.i && a.j == b.j && a.k == b.k;
    }
    // Canonical order: the order of canonical_index (k-major), which is also
    // the emission order of for_each_canonical.
    friend bool operator<(const CanonicalTriple& a, const CanonicalTriple& b) {
        if (a.k != b.k) return a.k < b.k;
        if (a.j != b.j) return a.j < b.j;
        return a.i < b.i;
    }
};

inline int orbit_multiplicity(int i, int j, int k) {
    if (i == j && j == k) return 1;
    if (i == j || j == k || i == k) return 3;
    return 6;
}

inline CanonicalTriple canonicalize(int i, int j, int k, int d) {
    if (i < 0 || j < 0 || k < 0 || i >= d || j >= d || k >= d) {
        throw IndexError("canonicalize: index out of range for d=" + std::to_string(d));
    }
    if (i > j) std::swap(i, j);
    if (j > k) std::swap(j, k);
    if (i > j) std::swap(i, j);
    return CanonicalTriple{i, j, k, orbit_multiplicity(i, j, k)};
}

// Number of canonical triples 0 <= i <= j <= k < d, i.e. C(d+2, 3).
inline std::int64_t canonical_triple_count(int d) {
    const std::int64_t n = d;
    return n * (n + 1) * (n + 2) / 6;
}

// Dense rank of a canonical triple: C(k+2,3) + C(j+1,2) + i, a bijection onto
// [0, canonical_triple_count(d)).
inline std::int64_t canonical_index(const CanonicalTriple& t) {
    const std::int64_t k = t.k, j = t.j, i = t.i;
    return k * (k + 1) * (k + 2) / 6 + j * (j + 1) / 2 + i;
}

// Visit every canonical triple in canonical (sorted) order.
template <typename Fn>
void for_each_canonical(int d, Fn&& fn) {
    for (int k = 0; k < d; ++k)
        for (int j = 0; j <= k; ++j)
            for (int i = 0; i <= j; ++i) fn(CanonicalTriple{i, j, k, orbit_multiplicity(i, j, k)});
}

// Visit the distinct permutations (the symmetric orbit) of a canonical triple.
template <typename Fn>
void for_each_orbit_position(const CanonicalTriple& t, Fn&& fn) {
    const int a = t.i, b = t.j, c = t.k;
    fn(a, b, c);
    if (t.multiplicity == 1) return;
    if (t.multiplicity == 3) {
        if (a == b) {  // (a,a,c)
            fn(a, c, a);
            fn(c, a, a);
        } else {  // (a,c,c)
            fn(b, a, c);
            fn(c, c, a);
        }
        return;
    }
    fn(a, c, b);
    fn(b, a, c);
    fn(b, c, a);
    fn(c, a, b);
    fn(c, b, a);
}

// Symmetric-closure slice membership: the ordered pairs (i,j) such that
// (i,j,k) lies in the orbit of t, grouped as (slice k, pair, ordered-copy
// count). Each canonical triple touches at most three slices.
struct SlicePair {
    int slice;   // k of the ordered positions
    int a, b;    // unordered pair indices (a <= b)
    int copies;  // number of ordered pairs: 1 if a == b else 2
};

template <typename Fn>
void for_each_slice_pair(const CanonicalTriple& t, Fn&& fn) {
    const int a = t.i, b = t.j, c = t.k;
    if (t.multiplicity == 1) {  // (a,a,a)
        fn(SlicePair{a, a, a, 1});
    } else if (t.multiplicity == 3) {
        if (a == b) {  // (a,a,c): slice c sees (a,a); slice a sees (a,c),(c,a)
            fn(SlicePair{c, a, a, 1});
            fn(SlicePair{a, a, c, 2});
        } else {  // (a,c,c): slice c sees (a,c),(c,a); slice a sees (c,c)
            fn(SlicePair{c, a, c, 2});
            fn(SlicePair{a, c, c, 1});
        }
    } else {
        fn(SlicePair{c, a, b, 2});
        fn(SlicePair{b, a, c, 2});
        fn(SlicePair{a, b, c, 2});
    }
}

}  // namespace tensorciq
