#pragma once

#include <stdexcept>
#include <string>

namespace psyllid {

// Base for every failure raised by the library. The CLI maps the subclasses
// onto process exit codes (config 2, precondition 3, numerical 4).
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-range user input.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Model-level precondition violated (e.g. an existence condition that an
// algorithm requires does not hold).
class PreconditionError : public Error {
public:
  using Error::Error;
};

// Integrator or root-finder failure: non-finite state, step underflow,
// missing bracket.
class NumericalError : public Error {
public:
  using Error::Error;
};

// Two independent computations of the same quantity disagree.
class ConsistencyError : public Error {
public:
  using Error::Error;
};

}  // namespace psyllid
