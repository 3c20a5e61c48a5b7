#pragma once

#include <stdexcept>
#include <string>

namespace pudm {

// Precondition / argument violations. The CLI maps these to exit code 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File and format failures. The CLI maps these (and any other exception)
// to exit code 2.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pudm
