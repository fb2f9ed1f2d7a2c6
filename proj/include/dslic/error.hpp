#pragma once

#include <stdexcept>
#include <string>

namespace dslic {

// Thrown for unusable inputs: bad config values, shape mismatches, k > N.
struct InvalidArgument : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown for file-system and codec failures: missing files, malformed
// headers, unsupported pixel formats.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dslic
