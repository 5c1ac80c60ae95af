#pragma once

#include <stdexcept>
#include <string>

namespace oamsdm {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad profile, config document, or constructor argument.
struct ConfigError : SimError {
  using SimError::SimError;
};

// Bit stream is not a whole number of symbols.
struct FramingError : SimError {
  using SimError::SimError;
};

// Mismatched lengths or sample rates, or an incomplete 4-mode group.
struct ShapeError : SimError {
  using SimError::SimError;
};

// Not enough data for a blind estimate.
struct EstimationError : SimError {
  using SimError::SimError;
};

// Estimate sits outside (or at the edge of) the unambiguous range.
struct RangeError : SimError {
  using SimError::SimError;
};

// Alignment correlation never cleared the significance threshold.
struct NoLockError : SimError {
  using SimError::SimError;
};

// Equalizer tap energy diverged.
struct AdaptationError : SimError {
  AdaptationError(const std::string& what, std::string diag)
      : SimError(what), diagnostics(std::move(diag)) {}
  std::string diagnostics;
};

}  // namespace oamsdm
