#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stlmm {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NotPositiveDefinite,
  DegenerateTransform,
  NegligibleMass,
  MomentUndefined,
  UnsupportedRank,
  InsufficientAcceptance,
  RankDeficientDesign,
  DegenerateSkewness,
  NonFinite,
  SubjectFailure,
  Parse,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Structured failure carrying a machine-readable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace stlmm
