#include "dualmatch/errors.hpp"

namespace dualmatch {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::EmptySubset: return "EmptySubset";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::BadSchema: return "BadSchema";
    case ErrorCode::BadFractions: return "BadFractions";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TooFewMembers: return "TooFewMembers";
    case ErrorCode::UnassignedRow: return "UnassignedRow";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::LabelRowMismatch: return "LabelRowMismatch";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::NoTenureColumn: return "NoTenureColumn";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::Usage: return "Usage";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::AllMasked: return "AllMasked";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

bool is_data_error(ErrorCode code) {
  return code < ErrorCode::Usage;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace dualmatch
