#pragma once

#include <stdexcept>
#include <string>

namespace needlets {

// Requested degree/size exceeds what this build supports.
class capacity_error : public std::runtime_error {
 public:
  explicit capacity_error(const std::string& what) : std::runtime_error(what) {}
};

// A variance that callers would normalize by is zero (or numerically so).
class degenerate_variance_error : public std::runtime_error {
 public:
  explicit degenerate_variance_error(const std::string& what)
      : std::runtime_error(what) {}
};

// A cross-level cell ended up with no children; indicates a broken grid.
class degenerate_cell_error : public std::runtime_error {
 public:
  explicit degenerate_cell_error(const std::string& what)
      : std::runtime_error(what) {}
};

// Malformed input file or configuration.
class parse_error : public std::runtime_error {
 public:
  explicit parse_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace needlets
