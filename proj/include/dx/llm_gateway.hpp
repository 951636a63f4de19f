// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dx/error.hpp"
#include "dx/vocab.hpp"

namespace dx {

struct CompletionRequest {
  std::string model_name = "gpt-4-32k";
  std::string prompt;
  double temperature = 1.0;
  int max_tokens = 1024;
  int run_index = 0;
};

/// Throws InvalidArgument for negative temperature, non-positive max_tokens
/// or a negative run index.
void validate(const CompletionRequest& request);

struct CompletionResult {
  std::string raw_text;  // verbatim, surrounding prose included
  std::uint64_t latency_ms = 0;
  int attempt_count = 1;
};

/// Chat-completion backend. Implementations must be safe to call from
/// several threads at once.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;

  /// Throws Error with BackendUnavailable, AuthError or ResponseTruncated.
  virtual CompletionResult complete(const CompletionRequest& request) = 0;

  /// Stable description recorded in run manifests.
  virtual std::string identity() const = 0;
};

struct MockConfig {
  std::uint64_t seed = 0;
  /// Per-run chance of dropping each base label and of adding a spurious one.
  double flip_probability = 0.0;
  /// Per-run chance of appending one out-of-vocabulary row.
  double oov_probability = 0.0;
  std::size_t max_labels = 3;
  /// When set, every call returns exactly this text.
  std::optional<std::string> canned_reply;
};

/// Offline backend. Replies are a pure function of (seed, prompt hash,
/// run_index): a pseudo-random subset of vocabulary names keyed by the
/// prompt, perturbed per run, rendered as a teacher-style CSV reply.
class MockBackend final : public CompletionBackend {
 public:
  MockBackend(Vocabulary vocab, MockConfig config);

  CompletionResult complete(const CompletionRequest& request) override;
  std::string identity() const override;

 private:
  Vocabulary vocab_;
  MockConfig config_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30'000};

  /// Delay before attempt `attempt + 1` (attempt is 1-based).
  std::chrono::milliseconds backoff_after(int attempt) const;
};

struct HttpBackendConfig {
  std::string endpoint_url;  // e.g. https://host/v1/chat/completions
  std::string api_key;
  RetryPolicy retry;
  std::chrono::seconds timeout{120};
};

/// Reads DX_API_URL and DX_API_KEY. Credentials are never taken from flags
/// or files.
HttpBackendConfig http_config_from_env();

/// JSON chat-completion client: one user message plus temperature and
/// max_tokens. 429, 5xx and transport failures are retried with
/// exponential backoff; 401/403 fail fast with AuthError; a finish_reason
/// of "length" raises ResponseTruncated.
class HttpBackend final : public CompletionBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  CompletionResult complete(const CompletionRequest& request) override;
  std::string identity() const override;

 private:
  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

/// Request body sent by HttpBackend.
std::string chat_request_body(const CompletionRequest& request);

struct BatchItem {
  std::optional<CompletionResult> result;
  std::optional<Error> error;

  bool ok() const { return result.has_value(); }
};

/// Runs requests with at most max_in_flight outstanding calls. Results are
/// positionally aligned; per-item failures are embedded, never thrown.
std::vector<BatchItem> complete_batch(CompletionBackend& backend,
                                      const std::vector<CompletionRequest>& requests,
                                      std::size_t max_in_flight);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace dx
