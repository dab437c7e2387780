#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace equitrace {

// Chart dimension and bundle rank are small; points and fiber matrices live
// on the stack so the quadrature loops never touch the allocator.
inline constexpr int kMaxDim = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using Point = Vec;

/// Base of every error the library raises. `kind()` is the stable
/// machine-readable name written into report failure arrays.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define EQUITRACE_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(#Name, what) {}    \
  };

EQUITRACE_DEFINE_ERROR(StepFailure)
EQUITRACE_DEFINE_ERROR(CoverageFailure)
EQUITRACE_DEFINE_ERROR(DegenerateOrbit)
EQUITRACE_DEFINE_ERROR(SupportEscape)
EQUITRACE_DEFINE_ERROR(TIndependenceViolation)
EQUITRACE_DEFINE_ERROR(QuadratureBudgetExceeded)
EQUITRACE_DEFINE_ERROR(NonConvergentLadder)
EQUITRACE_DEFINE_ERROR(DomainError)

#undef EQUITRACE_DEFINE_ERROR

/// Config text could not be tokenized; `line` is 1-based.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& message)
      : Error("ParseError", "line " + std::to_string(line) + ": " + message), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// A config key is unknown, missing, or has an unacceptable value.
class ValidationError : public Error {
 public:
  ValidationError(std::string key, const std::string& reason)
      : Error("ValidationError", key + ": " + reason), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

inline Vec make_vec(std::initializer_list<double> values) {
  Vec v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

}  // namespace equitrace
