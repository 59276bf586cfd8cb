#pragma once

#include <stdexcept>
#include <string>

namespace ccscale {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Mismatched dimensions, radii, truncation degrees, arities.
struct StructuralError : Error {
    using Error::Error;
};

/// Input outside the mathematical domain of an operation.
struct DomainError : Error {
    using Error::Error;
};

/// An iteration that is guaranteed to converge under the documented
/// hypotheses failed to; usually means the hypotheses were violated.
struct ConvergenceError : Error {
    using Error::Error;
};

/// Base tuple numerically rank-deficient where a nonzero wedge was required.
struct RankError : Error {
    using Error::Error;
};

/// A wedge quotient was requested between non-proportional wedges.
struct TangencyError : Error {
    using Error::Error;
};

/// Chart construction degenerated (singular Jacobian, rank collapse).
struct ChartError : Error {
    using Error::Error;
};

} // namespace ccscale
