#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace adabins {

using index_t = long long;
using Shape = std::vector<index_t>;

// Invalid tensor shapes / axis mismatches.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration (file contents, incompatible model settings).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse (backward on non-scalar, step out of range, ...).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numeric-domain violations (non-positive depth under mask, NaN, empty mask).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline index_t numel(const Shape& s) {
  index_t n = 1;
  for (index_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline std::vector<index_t> row_major_strides(const Shape& s) {
  std::vector<index_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * s[i + 1];
  return st;
}

inline index_t normalize_axis(index_t axis, index_t ndim) {
  index_t a = axis < 0 ? axis + ndim : axis;
  if (a < 0 || a >= ndim)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(ndim));
  return a;
}

}  // namespace adabins
