#pragma once

#include <stdexcept>
#include <string>

namespace ifsm {

/// Pivoted elimination met a pivot below the row-scaled threshold.
class SingularSystem : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed IFS document. The message carries line or field context.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An exact solver was handed a model whose validation failed.
class InvalidModel : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A requested solver path does not apply to the model (e.g. the
/// equal-linear-part path on maps with distinct linear parts).
class PreconditionFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionUnsupported : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace ifsm
