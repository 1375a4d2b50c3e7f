#pragma once

#include <stdexcept>
#include <string>

namespace hk {

enum class ErrorKind {
  Domain,
  Range,
  Divergence,
  Indeterminate,
  Config,
  Resolution,
  Convergence,
  Model,
  Statistics,
  Gate,
  Numeric,
  Accuracy
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Range: return "range";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Indeterminate: return "indeterminate";
    case ErrorKind::Config: return "config";
    case ErrorKind::Resolution: return "resolution";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::Model: return "model";
    case ErrorKind::Statistics: return "statistics";
    case ErrorKind::Gate: return "gate";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Accuracy: return "accuracy";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind k, const std::string& msg) { throw Error(k, msg); }

}  // namespace hk
