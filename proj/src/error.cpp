#include "mirc/error.hpp"

namespace mirc {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Integrity: return "integrity error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::DegenerateCrop: return "degenerate crop";
    case ErrorKind::TooShortClip: return "too-short clip";
    case ErrorKind::NoValidPermutation: return "no valid permutation";
    case ErrorKind::MissingEmbedding: return "missing embedding";
    case ErrorKind::EmptyAfterCleaning: return "empty after cleaning";
    case ErrorKind::NoOperatingPoint: return "no operating point";
    case ErrorKind::Usage: return "usage error";
    case ErrorKind::Sequencing: return "sequencing error";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::NotReady: return "not ready";
    case ErrorKind::NotFound: return "not found";
    case ErrorKind::Setup: return "setup error";
    case ErrorKind::InsufficientData: return "insufficient data";
  }
  return "error";
}

}  // namespace mirc
