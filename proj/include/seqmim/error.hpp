#pragma once

#include <stdexcept>
#include <string>

namespace seqmim {

enum class ErrorCode {
  validation,
  non_symmetric,
  indefinite,
  degenerate_overlap,
  degenerate_teacher_channel,
  inconsistent_overlaps,
  singular_resolvent,
  prox_nonconvergence,
  loss_blowup,
  non_finite,
  divergence,
  stalled,
  singular_solve,
  io,
};

const char* to_string(ErrorCode code);

// Exit status used by the command-line tool for this error class.
int exit_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace seqmim
