#pragma once

#include <stdexcept>
#include <string>

namespace zipcrt {

// Base for every error the library raises. `exit_code()` is what the CLI
// returns when the error escapes a command.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 3; }
};

// A parameter combination outside the model's domain (p2 >= 1, q > 1, ...).
class DomainError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

// Invalid or contradictory user input (config files, datasets, flags).
class ValidationError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

// Estimation could not proceed: empty arm, singular information, etc.
class EstimationError : public Error {
public:
  using Error::Error;
};

// A Monte Carlo study exceeded its failure budget.
class StudyError : public Error {
public:
  using Error::Error;
};

} // namespace zipcrt
