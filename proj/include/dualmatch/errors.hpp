#pragma once

#include <stdexcept>
#include <string>

namespace dualmatch {

enum class ErrorCode {
  // data errors (CLI exit code 2)
  MissingColumn,
  TypeError,
  EmptySubset,
  SchemaMismatch,
  BadSchema,
  BadFractions,
  KTooLarge,
  EmptyInput,
  TooFewMembers,
  UnassignedRow,
  DomainError,
  LabelRowMismatch,
  NoPositives,
  NoTenureColumn,
  VersionMismatch,
  CorruptFile,
  MissingCheckpoint,
  IoError,
  // usage errors (exit code 1)
  Usage,
  // internal errors (exit code 3)
  ShapeMismatch,
  NonFiniteValue,
  NonFiniteLoss,
  StaleCache,
  AllMasked,
  Internal,
};

const char* to_string(ErrorCode code);

/// Whether an error originates from user-supplied data rather than a bug.
bool is_data_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dualmatch
