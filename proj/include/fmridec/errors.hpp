#pragma once

#include <iostream>
#include <stdexcept>
#include <string>

namespace fmridec {

// Error taxonomy used across the pipeline. Kind tells callers (and tests)
// which contract was violated; the message names the offending object.
enum class ErrorKind {
  ingestion,      // missing/unreadable input file
  validation,     // data violates a documented invariant (NaN, empty transcript)
  schema,         // structurally inconsistent data (voxel-count mismatch)
  config,         // bad configuration value or key
  input,          // bad argument to an operation (OOV token id, shape mismatch)
  out_of_window,  // word onset outside its window
  evaluation,     // decode-results / reference mismatch
  divergence,     // training loss went non-finite
  io              // filesystem write failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void log_warn(const std::string& message) {
  std::cerr << "[warn] " << message << "\n";
}

}  // namespace fmridec
