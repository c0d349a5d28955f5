#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace xlrec {

// Shape disagreement between tensors. Messages name both shapes.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A caller broke an operation's precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Malformed input file. Carries the offending line number when known.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg, std::size_t line = 0)
      : std::runtime_error(line ? msg + " (line " + std::to_string(line) + ")"
                                : msg),
        line_number(line) {}
  std::size_t line_number = 0;
};

// Bad or inconsistent configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A remote call failed. Carries the batch that could not be delivered so
// callers can retry or report it.
struct TransportError : std::runtime_error {
  TransportError(const std::string& msg, std::vector<std::string> batch)
      : std::runtime_error(msg), failed_batch(std::move(batch)) {}
  std::vector<std::string> failed_batch;
};

}  // namespace xlrec
