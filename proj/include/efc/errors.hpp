#pragma once

#include <stdexcept>
#include <string>

namespace efc {

enum class Errc {
  InvalidArgument,
  Io,
  MalformedFile,
  EmptyFile,
  EmptyDataset,
  DimensionMismatch,
  NonFinite,
  SingularProjection,
  NumericalFailure,
  FoldTooSmall,
  AllDiverged,
  DomainExceeded,
  SvdFailure,
  DegenerateDesign,
};

const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace efc
