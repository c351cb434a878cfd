#ifndef QAFFDE_ERRORS_HPP
#define QAFFDE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace qaffde {

// Numerical failure (degenerate embedding, eigensolver breakdown, ...).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss encountered during gradient training.
struct TrainingDiverged : std::runtime_error {
  TrainingDiverged(const std::string& msg, long step_index)
      : std::runtime_error(msg + " at step " + std::to_string(step_index)),
        step(step_index) {}
  long step;
};

}  // namespace qaffde

#endif  // QAFFDE_ERRORS_HPP
