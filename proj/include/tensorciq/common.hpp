#pragma once

#include <stdexcept>
#include <string>

namespace tensorciq {

inline constexpr const char* kVersion = "1.0.0";

// Thrown when an index triple falls outside [1, d] (external) / [0, d) (internal).
struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Spectral initialization ran out of candidates before picking r factors,
// even after the retry schedule.
struct InitExhausted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Loss or gradient overflowed during gradient descent (divergent step size).
struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The lifted Gram matrix is numerically singular (collapsed/degenerate factors).
struct SingularGram : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A covariance diagonal came out below the -1e-12 clamp threshold,
// i.e. the PSD invariant is broken upstream.
struct NegativeVariance : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The iterative eigensolver did not meet its residual tolerance within budget.
struct EigenNotConverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input file.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace tensorciq
