#pragma once

#include <stdexcept>
#include <string>

namespace lareqa {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that could not be parsed (malformed JSON, truncated binary, ...).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input that parsed but violates a documented contract.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Failure talking to an external service.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace lareqa
