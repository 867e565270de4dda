// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lliam {

// Tensor shapes or operand dimensions disagree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite values, undefined reductions, missing gradients.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid hyperparameters, mismatched checkpoints, unknown names.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed input files or text.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Token id outside the vocabulary.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

// Sequence would not fit in the model context window.
class ContextOverflow : public std::length_error {
public:
    using std::length_error::length_error;
};

} // namespace lliam
