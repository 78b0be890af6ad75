#pragma once

#include <stdexcept>
#include <string>

namespace bosonic {

// Runtime failures of the simulation itself. The CLI maps these to exit code 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define BOSONIC_ERROR(Name)                          \
    struct Name : Error {                            \
        explicit Name(const std::string& what)       \
            : Error(std::string(#Name ": ") + what) {} \
    }

BOSONIC_ERROR(SingularCovariance);
BOSONIC_ERROR(DimensionMismatch);
BOSONIC_ERROR(HbarMismatch);
BOSONIC_ERROR(InvalidModes);
BOSONIC_ERROR(EmptyMixture);
BOSONIC_ERROR(InvalidState);
BOSONIC_ERROR(Unphysical);
BOSONIC_ERROR(Unsupported);
BOSONIC_ERROR(InvalidParameter);
BOSONIC_ERROR(InvalidChannel);
BOSONIC_ERROR(NumericalInconsistency);
BOSONIC_ERROR(ZeroProbabilityOutcome);
BOSONIC_ERROR(SamplingStall);

#undef BOSONIC_ERROR

// Malformed program / state documents. Exit code 2 in the CLI.
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace bosonic
