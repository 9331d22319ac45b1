#pragma once

#include <stdexcept>
#include <string>

namespace ubatch {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Weight vector with zero total mass.
class DegenerateWeights : public Error {
 public:
  using Error::Error;
};

class DegenerateEstimate : public Error {
 public:
  using Error::Error;
};

class ResourceError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

// Raised by the 1-D filter when every supported score is zero.
class NoProgress : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ubatch
