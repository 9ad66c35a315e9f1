#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace rpace {

// Base error for the whole pipeline. `stage` identifies which processing
// stage raised it so the CLI can emit stage-labeled diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& message)
      : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// Malformed arguments: mismatched manifolds, empty inputs, bad config.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// Logarithm map requested at or beyond the cut locus.
class CutLocusError : public Error {
 public:
  using Error::Error;
};

// Numerically unusable input: zero vectors for projection, degenerate
// local moments, rank-deficient smoother windows, unidentifiable covariance.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Iterative optimization failed to reach the stationarity tolerance.
class OptimizationError : public Error {
 public:
  using Error::Error;
};

// Linear solve produced non-finite values or an unusable factorization.
class ConditioningError : public Error {
 public:
  ConditioningError(std::string stage, const std::string& message, std::string subject_id,
                    double rcond)
      : Error(std::move(stage), message + " (subject " + subject_id +
                                    ", rcond=" + std::to_string(rcond) + ")"),
        subject_id_(std::move(subject_id)),
        rcond_(rcond) {}

  const std::string& subject_id() const noexcept { return subject_id_; }
  double rcond() const noexcept { return rcond_; }

 private:
  std::string subject_id_;
  double rcond_;
};

// File and parsing problems; `message` carries the path and line number.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rpace
