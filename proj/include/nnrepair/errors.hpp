#pragma once

#include <stdexcept>
#include <string>

namespace nnrepair {

// Shape or dimension mismatch between tensors, layers, or inputs.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Base for every malformed-file condition raised by the model-io readers.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class VersionError : public ParseError {
public:
    using ParseError::ParseError;
};

class TruncationError : public ParseError {
public:
    using ParseError::ParseError;
};

class InconsistencyError : public ParseError {
public:
    using ParseError::ParseError;
};

// Structurally valid content that violates a domain rule (label range,
// duplicate patch coordinate, out-of-bounds weight index, ...).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// An experiment cannot be set up as configured (e.g. not enough faulty inputs).
class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace nnrepair
