// Error types shared by all impsim modules.
#pragma once

#include <stdexcept>
#include <string>

namespace impsim {

// Base class so callers can catch any impsim failure in one handler.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input text (OBJ, CSV, JSON). Messages carry a line number
// where one is known.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally well-formed input that violates a domain invariant
// (face index out of range, degenerate edge, bad config value, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// No path exists between the requested vertices.
class UnreachableError : public Error {
 public:
  using Error::Error;
};

// Missing files, unwritable directories, broken pipelines.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace impsim
