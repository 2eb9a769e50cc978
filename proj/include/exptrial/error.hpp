// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace exptrial {

enum class ErrorCode {
  // csv codec
  MalformedCsv,
  RaggedRow,
  EmptyFile,
  HeaderArity,
  NonIntegerId,
  // plan operations
  UnknownParticipant,
  OutputArityMismatch,
  EmptyOutputValue,
  RowOutOfRange,
  // session
  PlanInvalid,
  BadStartFrom,
  AlreadyLocked,
  SessionFinished,
  // persistence
  StorageFailure,
  MalformedJournal,
  // generator
  SpecInvalid,
  // wire protocol
  ProtocolError,
  LineTooLong,
  NotReady,
  UnsupportedVersion,
};

/// Stable machine-readable name, e.g. "MALFORMED_CSV".
std::string_view code_name(ErrorCode code);

/// Exception carrying a machine-readable code; what() reads "CODE: message".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const { return code_; }
  const std::string& message() const { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace exptrial
