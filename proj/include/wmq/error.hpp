#pragma once

#include <stdexcept>
#include <string>

namespace wmq {

/// Input or stored data violates a documented invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem read/write failure.
class PersistenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PlanningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage was invoked before the stage that produces its inputs.
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wmq
