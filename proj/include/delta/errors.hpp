#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace delta {

// Graph or problem generation could not satisfy its postcondition.
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid run configuration or mismatched compare configs.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Single-point feedback budget violated (more than one sample per agent
// per iteration).
struct ProtocolViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Estimator evaluated with non-finite parameters.
struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Iterate left the finite/bounded region; carries the offending iteration.
struct DivergenceError : std::runtime_error {
  std::int64_t iteration;
  DivergenceError(std::int64_t k, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(k) + ": " + what),
        iteration(k) {}
};

// Centralized optimum solve exceeded its iteration cap.
struct NonConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace delta
