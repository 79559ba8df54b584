#pragma once

#include <stdexcept>
#include <string>

namespace betadyn {

// Standing assumptions of the constructions (mean expansion r < 1, lower
// bound on emitted bases, parameter windows, non-simple base numbers).
// Violations are reported through this type so callers can distinguish
// them from I/O or usage mistakes.
class hypothesis_error : public std::runtime_error {
 public:
  explicit hypothesis_error(const std::string& what) : std::runtime_error(what) {}
};

// Raised when working precision cannot separate a quantity from a decision
// boundary (digit boundaries, interval certificates).
class precision_error : public std::runtime_error {
 public:
  explicit precision_error(const std::string& what) : std::runtime_error(what) {}
};

class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace betadyn
