#pragma once

#include <stdexcept>
#include <string>

namespace fligan {

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A categorical value reached encode() without appearing in the global
// vocabulary, i.e. the metadata round did not cover every node.
struct EncodingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Violated precondition of a library operation (shape mismatch, empty input...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw ContractError(what);
}

}  // namespace fligan
