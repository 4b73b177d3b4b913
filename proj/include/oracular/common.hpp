#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace oracular {

using Json = nlohmann::json;

// Serializes with sorted object keys and no whitespace. nlohmann::json keeps
// object members in a std::map, so the dump is already key-sorted.
std::string canonical(const Json& j);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A LocalValue was used at a node that does not own it.
class LocalityError : public Error {
 public:
  using Error::Error;
};

// Payload shape or runtime type tag mismatch.
class TypeError : public Error {
 public:
  using Error::Error;
};

// Invalid user configuration (CLI flags, registry lookups, files).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An effect kind outside the accepted set was encountered.
class SignatureMismatch : public Error {
 public:
  using Error::Error;
};

// A policy selector could not be resolved in an inner policy.
class SelectorError : public Error {
 public:
  using Error::Error;
};

// Replaying a strategy produced a different request than the recorded one.
class ReplayDivergence : public Error {
 public:
  using Error::Error;
};

// Text that failed to parse, with the 0-based offset of the problem.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at offset " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

}  // namespace oracular
