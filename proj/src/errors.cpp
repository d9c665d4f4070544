#include "lmue/errors.hpp"

namespace lmue {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::UnavailableInput: return "unavailable_input";
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::DegenerateSimilarity: return "degenerate_similarity";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Input: return "input";
    case ErrorKind::Alignment: return "alignment";
    case ErrorKind::Transport: return "transport";
    case ErrorKind::Auth: return "auth";
    case ErrorKind::Capability: return "capability";
    case ErrorKind::Indeterminate: return "indeterminate";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

}  // namespace lmue
