#pragma once

#include <nlohmann/json.hpp>

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kolflow {

/// Closed set of engine error kinds. Each kind maps to exactly one stable
/// API code string and one HTTP status.
enum class ErrorCode {
  // core
  MalformedPayload,
  IoFailure,
  HashCollisionMismatch,
  NotFound,
  TypeMismatch,
  HashMismatch,
  // registry
  DuplicateServiceId,
  InvalidDescriptor,
  UnknownAlgorithmId,
  UnknownService,
  UnknownCapability,
  ConflictingRule,
  UnknownPort,
  // flow
  BadQuery,
  UnsatisfiableQuery,
  AmbiguousService,
  CyclicConstraints,
  CycleDetected,
  UnboundPort,
  AmbiguousExternalInput,
  // executor
  ValidationFailed,
  StoreUnavailable,
  UnknownRun,
  AlreadyTerminal,
  UnknownArtifact,
  // backends
  UnknownAlgorithm,
  BadParams,
  MalformedInput,
  BackendError,
  OutputTypeMismatch,
  Timeout,
  BackendUnreachable,
  ProtocolError,
  RemoteFault,
  SignatureMismatch,
  // face_align
  DegenerateLandmarks,
  NonFinite,
  NonInvertibleTransform,
  SizeMismatch,
  // gateway
  BindFailure,
  BadConfig,
  BadRequest,
};

std::span<const ErrorCode> all_error_codes();

/// Stable machine string, e.g. "UNSATISFIABLE_QUERY".
std::string_view api_code(ErrorCode code);
int http_status(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &message,
        nlohmann::json details = nullptr)
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const nlohmann::json &details() const noexcept { return details_; }

  /// {code, message, details?} document used by the HTTP API and the CLI.
  nlohmann::json to_json() const;

private:
  ErrorCode code_;
  nlohmann::json details_;
};

} // namespace kolflow
