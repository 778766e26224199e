#include "kolflow/error.hpp"

#include <array>

namespace kolflow {

namespace {

struct CodeInfo {
  ErrorCode code;
  std::string_view name;
  int status;
};

constexpr std::array kCodes{
    CodeInfo{ErrorCode::MalformedPayload, "MALFORMED_PAYLOAD", 400},
    CodeInfo{ErrorCode::IoFailure, "IO_FAILURE", 500},
    CodeInfo{ErrorCode::HashCollisionMismatch, "HASH_COLLISION_MISMATCH", 500},
    CodeInfo{ErrorCode::NotFound, "NOT_FOUND", 404},
    CodeInfo{ErrorCode::TypeMismatch, "TYPE_MISMATCH", 422},
    CodeInfo{ErrorCode::HashMismatch, "HASH_MISMATCH", 500},
    CodeInfo{ErrorCode::DuplicateServiceId, "DUPLICATE_SERVICE_ID", 409},
    CodeInfo{ErrorCode::InvalidDescriptor, "INVALID_DESCRIPTOR", 400},
    CodeInfo{ErrorCode::UnknownAlgorithmId, "UNKNOWN_ALGORITHM_ID", 422},
    CodeInfo{ErrorCode::UnknownService, "UNKNOWN_SERVICE", 404},
    CodeInfo{ErrorCode::UnknownCapability, "UNKNOWN_CAPABILITY", 400},
    CodeInfo{ErrorCode::ConflictingRule, "CONFLICTING_RULE", 409},
    CodeInfo{ErrorCode::UnknownPort, "UNKNOWN_PORT", 404},
    CodeInfo{ErrorCode::BadQuery, "BAD_QUERY", 400},
    CodeInfo{ErrorCode::UnsatisfiableQuery, "UNSATISFIABLE_QUERY", 422},
    CodeInfo{ErrorCode::AmbiguousService, "AMBIGUOUS_SERVICE", 409},
    CodeInfo{ErrorCode::CyclicConstraints, "CYCLIC_CONSTRAINTS", 422},
    CodeInfo{ErrorCode::CycleDetected, "CYCLE_DETECTED", 422},
    CodeInfo{ErrorCode::UnboundPort, "UNBOUND_PORT", 422},
    CodeInfo{ErrorCode::AmbiguousExternalInput, "AMBIGUOUS_EXTERNAL_INPUT", 422},
    CodeInfo{ErrorCode::ValidationFailed, "VALIDATION_FAILED", 422},
    CodeInfo{ErrorCode::StoreUnavailable, "STORE_UNAVAILABLE", 503},
    CodeInfo{ErrorCode::UnknownRun, "UNKNOWN_RUN", 404},
    CodeInfo{ErrorCode::AlreadyTerminal, "ALREADY_TERMINAL", 409},
    CodeInfo{ErrorCode::UnknownArtifact, "UNKNOWN_ARTIFACT", 404},
    CodeInfo{ErrorCode::UnknownAlgorithm, "UNKNOWN_ALGORITHM", 404},
    CodeInfo{ErrorCode::BadParams, "BAD_PARAMS", 400},
    CodeInfo{ErrorCode::MalformedInput, "MALFORMED_INPUT", 422},
    CodeInfo{ErrorCode::BackendError, "BACKEND_ERROR", 502},
    CodeInfo{ErrorCode::OutputTypeMismatch, "OUTPUT_TYPE_MISMATCH", 502},
    CodeInfo{ErrorCode::Timeout, "TIMEOUT", 504},
    CodeInfo{ErrorCode::BackendUnreachable, "BACKEND_UNREACHABLE", 502},
    CodeInfo{ErrorCode::ProtocolError, "PROTOCOL_ERROR", 502},
    CodeInfo{ErrorCode::RemoteFault, "REMOTE_FAULT", 502},
    CodeInfo{ErrorCode::SignatureMismatch, "SIGNATURE_MISMATCH", 422},
    CodeInfo{ErrorCode::DegenerateLandmarks, "DEGENERATE_LANDMARKS", 422},
    CodeInfo{ErrorCode::NonFinite, "NON_FINITE", 422},
    CodeInfo{ErrorCode::NonInvertibleTransform, "NON_INVERTIBLE_TRANSFORM", 422},
    CodeInfo{ErrorCode::SizeMismatch, "SIZE_MISMATCH", 422},
    CodeInfo{ErrorCode::BindFailure, "BIND_FAILURE", 500},
    CodeInfo{ErrorCode::BadConfig, "BAD_CONFIG", 400},
    CodeInfo{ErrorCode::BadRequest, "BAD_REQUEST", 400},
};

constexpr std::array<ErrorCode, kCodes.size()> make_code_list() {
  std::array<ErrorCode, kCodes.size()> out{};
  for (std::size_t i = 0; i < kCodes.size(); ++i) out[i] = kCodes[i].code;
  return out;
}

constexpr auto kCodeList = make_code_list();

const CodeInfo &info(ErrorCode code) {
  for (const auto &c : kCodes)
    if (c.code == code) return c;
  return kCodes.front(); // unreachable for valid enum values
}

} // namespace

std::span<const ErrorCode> all_error_codes() { return kCodeList; }

std::string_view api_code(ErrorCode code) { return info(code).name; }

int http_status(ErrorCode code) { return info(code).status; }

nlohmann::json Error::to_json() const {
  nlohmann::json j{{"code", std::string(api_code(code_))}, {"message", what()}};
  if (!details_.is_null()) j["details"] = details_;
  return j;
}

} // namespace kolflow
