#include "seqmim/error.hpp"

namespace seqmim {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation: return "validation";
    case ErrorCode::non_symmetric: return "non-symmetric";
    case ErrorCode::indefinite: return "indefinite";
    case ErrorCode::degenerate_overlap: return "degenerate-overlap";
    case ErrorCode::degenerate_teacher_channel: return "degenerate-teacher-channel";
    case ErrorCode::inconsistent_overlaps: return "inconsistent-overlaps";
    case ErrorCode::singular_resolvent: return "singular-resolvent";
    case ErrorCode::prox_nonconvergence: return "prox-nonconvergence";
    case ErrorCode::loss_blowup: return "loss-blowup";
    case ErrorCode::non_finite: return "non-finite";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::stalled: return "stalled";
    case ErrorCode::singular_solve: return "singular-solve";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation:
    case ErrorCode::io:
      return 2;
    default:
      return 3;
  }
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace seqmim
