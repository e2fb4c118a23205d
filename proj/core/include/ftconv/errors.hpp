#pragma once

#include <stdexcept>
#include <string>

namespace ftconv {

/// Tensor dimension mismatch between operands.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid layer/model configuration (non-integral output extent, bad groups, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File I/O or serialization failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unrecoverable integrity failure: the recompute fallback could not produce
/// a checksum-consistent layer output.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ftconv
