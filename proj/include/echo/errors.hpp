#pragma once

#include <stdexcept>
#include <string>

namespace echo {

// Base type for every error this library raises on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension mismatch; message carries both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration value; message names the violated bound.
struct ConfigError : Error {
    using Error::Error;
};

// Token id outside the vocabulary; message carries the offending index.
struct VocabError : Error {
    using Error::Error;
};

// Sequence longer than max_seq.
struct SequenceError : Error {
    using Error::Error;
};

// softmax row with every entry masked.
struct DegenerateRowError : Error {
    using Error::Error;
};

// An operation produced NaN or Inf.
struct NonFiniteError : Error {
    using Error::Error;
};

// backward() called twice on the same tape without a new forward.
struct StaleGraphError : Error {
    using Error::Error;
};

// Layer conversion attempted out of order or below the allowed range.
struct ConversionError : Error {
    using Error::Error;
};

// Decode cache problems: coverage gaps or capacity exhausted.
struct CacheError : Error {
    using Error::Error;
};

// Unknown parameter name.
struct NameError : Error {
    using Error::Error;
};

// Empty or unusable data stream.
struct DataError : Error {
    using Error::Error;
};

// Checkpoint file problems.
struct CheckpointError : Error {
    using Error::Error;
};
struct MagicError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct VersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct TruncationError : CheckpointError {
    using CheckpointError::CheckpointError;
};

}  // namespace echo
