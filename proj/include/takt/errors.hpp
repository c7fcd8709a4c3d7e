#pragma once

#include <stdexcept>
#include <string>

namespace takt {

// Base class for every error thrown by the library. Subtypes let callers
// (and tests) distinguish the failure class without parsing messages.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes do not match an operation's contract.
struct DimensionError : Error {
    using Error::Error;
};

// A row, material, or vocabulary index is out of range.
struct IndexError : Error {
    using Error::Error;
};

// A value lies outside its documented domain (e.g. a response outside [0,1]).
struct DomainError : Error {
    using Error::Error;
};

// Structurally invalid data: bad activity flags, duplicate keys, empty splits.
struct ValidationError : Error {
    using Error::Error;
};

// A text input could not be parsed; the message carries the line number.
struct ParseError : Error {
    using Error::Error;
};

// A statistic is undefined for the given input (single-class AUC,
// zero-variance differences, all-tied ranks, ...).
struct DegenerateError : Error {
    using Error::Error;
};

// Misuse of the autodiff tape: non-scalar backward, double backward,
// or a loss that was not recorded on the tape.
struct TapeError : Error {
    using Error::Error;
};

// Filesystem failure; the message carries the path.
struct IoError : Error {
    using Error::Error;
};

}  // namespace takt
