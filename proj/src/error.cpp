// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0

#include "exptrial/error.hpp"

namespace exptrial {

std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedCsv: return "MALFORMED_CSV";
    case ErrorCode::RaggedRow: return "RAGGED_ROW";
    case ErrorCode::EmptyFile: return "EMPTY_FILE";
    case ErrorCode::HeaderArity: return "HEADER_ARITY";
    case ErrorCode::NonIntegerId: return "NON_INTEGER_ID";
    case ErrorCode::UnknownParticipant: return "UNKNOWN_PARTICIPANT";
    case ErrorCode::OutputArityMismatch: return "OUTPUT_ARITY_MISMATCH";
    case ErrorCode::EmptyOutputValue: return "EMPTY_OUTPUT_VALUE";
    case ErrorCode::RowOutOfRange: return "ROW_OUT_OF_RANGE";
    case ErrorCode::PlanInvalid: return "PLAN_INVALID";
    case ErrorCode::BadStartFrom: return "BAD_START_FROM";
    case ErrorCode::AlreadyLocked: return "ALREADY_LOCKED";
    case ErrorCode::SessionFinished: return "SESSION_FINISHED";
    case ErrorCode::StorageFailure: return "STORAGE_FAILURE";
    case ErrorCode::MalformedJournal: return "MALFORMED_JOURNAL";
    case ErrorCode::SpecInvalid: return "SPEC_INVALID";
    case ErrorCode::ProtocolError: return "PROTOCOL_ERROR";
    case ErrorCode::LineTooLong: return "LINE_TOO_LONG";
    case ErrorCode::NotReady: return "NOT_READY";
    case ErrorCode::UnsupportedVersion: return "UNSUPPORTED_VERSION";
  }
  return "UNKNOWN";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(code_name(code)) + ": " + message),
      code_(code),
      message_(message) {}

}  // namespace exptrial
