#pragma once

#include <stdexcept>
#include <string>

namespace agesemi {

/// Rejected input: a precondition or structural invariant does not hold.
class validation_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The computation itself failed (non-convergence, ill-conditioning,
/// non-finite intermediate values).
class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace agesemi
