#pragma once

#include <stdexcept>
#include <string>

namespace mcblock {

// File or stream level failure (missing file, bad magic, short read, ...).
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Caller handed us data that violates a documented precondition.
struct InvalidInput : std::invalid_argument {
  explicit InvalidInput(const std::string& what)
      : std::invalid_argument(what) {}
};

// A node handle was used after the tree mutated underneath it. The caller
// must drop the handle and re-select.
struct StaleHandle : std::logic_error {
  explicit StaleHandle(const std::string& what) : std::logic_error(what) {}
};

}  // namespace mcblock
