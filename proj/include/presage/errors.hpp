#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace presage {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A trace (or trace set) was empty where events were required.
class EmptyTraceError : public Error {
 public:
  using Error::Error;
};

/// Not enough observed transitions to estimate a model.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// The chain's structure rules out the requested computation
/// (e.g. a reducible chain has no unique stationary distribution).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, spec, or argument. The message names the
/// violated constraint or the offending value.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed input line. Carries the byte offset of the failure.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& reason)
      : Error("parse error at byte " + std::to_string(offset) + ": " + reason),
        offset_(offset),
        reason_(reason) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t offset_;
  std::string reason_;
};

/// An event stream went backwards in time beyond the configured tolerance.
class TemporalOrderError : public Error {
 public:
  using Error::Error;
};

}  // namespace presage
