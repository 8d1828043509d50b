#include "fhrr/error.hpp"

namespace fhrr {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Shape: return "SHAPE_ERROR";
    case ErrorKind::Domain: return "DOMAIN_ERROR";
    case ErrorKind::Contract: return "CONTRACT_ERROR";
    case ErrorKind::Format: return "FORMAT_ERROR";
    case ErrorKind::Schema: return "SCHEMA_ERROR";
    case ErrorKind::Capacity: return "CAPACITY_ERROR";
    case ErrorKind::DegenerateInput: return "DEGENERATE_INPUT";
    case ErrorKind::DataNotFound: return "DATA_NOT_FOUND";
    case ErrorKind::ConfigInvalid: return "CONFIG_INVALID";
    case ErrorKind::CheckpointMismatch: return "CHECKPOINT_MISMATCH";
    case ErrorKind::TrainingDiverged: return "TRAINING_DIVERGED";
  }
  return "UNKNOWN";
}

}  // namespace fhrr
