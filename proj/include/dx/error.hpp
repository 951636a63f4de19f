// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dx {

enum class ErrorCode {
  kInvalidArgument,
  kIoError,
  // vocab
  kDuplicateName,
  kBadCount,
  kMalformedFile,
  // prompt
  kEmptyImpression,
  // llm_gateway
  kBackendUnavailable,
  kAuthError,
  kResponseTruncated,
  // parse
  kNoCsvFound,
  // vote
  kMixedReports,
  kNoRuns,
  // split / metrics
  kEmptyCorpus,
  kEmptyInput,
  // adapter math
  kShapeMismatch,
  kNonFiniteInput,
  kAllMasked,
  // store
  kDuplicateId,
  kMissingField,
  kMalformedJson,
  kMissingLabels,
  kMissingReport,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dx
