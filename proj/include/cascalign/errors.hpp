#pragma once

#include <stdexcept>
#include <string>

namespace cascalign {

// Invalid hyperparameters, flags, or incompatible checkpoints. The CLI maps
// these to exit code 2; every other failure maps to 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or batch-size violations on tensor-level operations.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Token id or word outside the model vocabulary.
struct VocabError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Corpus parse or schema violations; message carries the line number.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf reached a place that requires finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint file unreadable, wrong version, or inconsistent with the config.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A broken internal invariant (e.g. a selected pair without a fused output).
struct InternalError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace cascalign
