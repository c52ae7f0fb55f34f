#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "yoto/config.hpp"

YOTO_BEGIN_NAMESPACE

/// Violated precondition: bad shapes, bad arguments, invalid configs.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Input that is well-formed but carries no information (e.g. zero variance).
class DegenerateInputError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Malformed file contents. `offset` is the byte position where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

YOTO_END_NAMESPACE
