#ifndef SPINET_ERROR_HPP
#define SPINET_ERROR_HPP

#include <stdexcept>
#include <string>

namespace spinet {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct NotPositiveDefinite : Error {
  using Error::Error;
};

struct SingularDiagonal : Error {
  using Error::Error;
};

struct NonConvergence : Error {
  using Error::Error;
};

struct DomainViolation : Error {
  using Error::Error;
};

struct IndexOutOfRange : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct PlacementFailure : Error {
  using Error::Error;
};

struct InsufficientFrames : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct FormatVersionMismatch : Error {
  using Error::Error;
};

struct CorruptChecksum : Error {
  using Error::Error;
};

}  // namespace spinet

#endif  // SPINET_ERROR_HPP
