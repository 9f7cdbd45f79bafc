#pragma once

#include <stdexcept>

namespace sumix {

// Bad argument or configuration field value.
struct InvalidParameter : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Tensor shape disagreement between operands.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed dataset file, checkpoint, or manifest.
struct DataFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient encountered during optimization.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Requested operation needs a different encoder architecture.
struct UnsupportedArchitecture : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sumix
