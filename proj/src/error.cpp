// SPDX-License-Identifier: Apache-2.0

#include "dx/error.hpp"

namespace dx {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kDuplicateName: return "DuplicateName";
    case ErrorCode::kBadCount: return "BadCount";
    case ErrorCode::kMalformedFile: return "MalformedFile";
    case ErrorCode::kEmptyImpression: return "EmptyImpression";
    case ErrorCode::kBackendUnavailable: return "BackendUnavailable";
    case ErrorCode::kAuthError: return "AuthError";
    case ErrorCode::kResponseTruncated: return "ResponseTruncated";
    case ErrorCode::kNoCsvFound: return "NoCsvFound";
    case ErrorCode::kMixedReports: return "MixedReports";
    case ErrorCode::kNoRuns: return "NoRuns";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kAllMasked: return "AllMasked";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kMissingField: return "MissingField";
    case ErrorCode::kMalformedJson: return "MalformedJson";
    case ErrorCode::kMissingLabels: return "MissingLabels";
    case ErrorCode::kMissingReport: return "MissingReport";
  }
  return "Unknown";
}

}  // namespace dx
