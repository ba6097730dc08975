#pragma once

#include <stdexcept>
#include <string>

namespace nbv {

// File could not be opened, read, or written.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// File opened fine but its contents are not what the format promises.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Inputs are well-formed but violate a model constraint (e.g. incompatible
// grids, no collision-free start pose).
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nbv
