#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "stlmm/error.hpp"

namespace stlmm {

/// Degrees of freedom of a Student-t law. Infinity is an explicit state
/// (the Gaussian limit), never a large finite number.
class Dof {
 public:
  explicit Dof(double value) : value_(value) {
    if (!(value > 0.0) || std::isinf(value))
      throw Error(ErrorCode::InvalidArgument, "degrees of freedom must be finite and > 0");
  }
  static Dof infinite() { return Dof(); }

  bool is_infinite() const { return infinite_; }
  bool is_finite() const { return !infinite_; }
  /// Numeric value; +inf when infinite.
  double value() const { return infinite_ ? std::numeric_limits<double>::infinity() : value_; }
  bool is_integer() const { return infinite_ || value_ == std::floor(value_); }

  /// Shift by a (possibly negative) amount; infinity absorbs the shift.
  Dof plus(double k) const { return infinite_ ? *this : Dof(value_ + k); }

  friend bool operator==(const Dof& a, const Dof& b) {
    return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
  }

  std::string to_string() const;

 private:
  Dof() : value_(0.0), infinite_(true) {}
  double value_;
  bool infinite_ = false;
};

}  // namespace stlmm
