#pragma once

#include <stdexcept>
#include <string>

namespace atpo {

enum class Err {
  NegativeEntry,
  SumOutOfTolerance,
  NotStrictlyIncreasing,
  BadEndpoints,
  TooManySegments,
  QHasZeroSupport,
  EmptyStep,
  MixedT,
  EmptyBatch,
  BadN,
  BadShape,
  PositionNotMasked,
  ShapeMismatch,
  TMismatch,
  LTooSmall,
  IoError,
  ParseError,
  RoecInconsistent,
  GridMismatch,
  MissingTimings,
  BadConfig,
  NumericFailure,
};

const char* err_name(Err code);

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& what)
      : std::runtime_error(std::string(err_name(code)) + ": " + what), code_(code) {}

  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Err code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace atpo
