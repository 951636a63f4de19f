// SPDX-License-Identifier: Apache-2.0

#include "dx/llm_gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace dx {
namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() { return splitmix64(state_); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

 private:
  std::uint64_t state_;
};

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  return splitmix64(s);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void validate(const CompletionRequest& request) {
  if (!(request.temperature >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be >= 0");
  }
  if (request.max_tokens <= 0) throw Error(ErrorCode::kInvalidArgument, "max_tokens must be positive");
  if (request.run_index < 0) throw Error(ErrorCode::kInvalidArgument, "run_index must be >= 0");
}

MockBackend::MockBackend(Vocabulary vocab, MockConfig config)
    : vocab_(std::move(vocab)), config_(std::move(config)) {}

CompletionResult MockBackend::complete(const CompletionRequest& request) {
  validate(request);
  CompletionResult result;
  if (config_.canned_reply) {
    result.raw_text = *config_.canned_reply;
    return result;
  }
  const auto& entries = vocab_.entries();
  const auto prompt_key = mix(config_.seed, fnv1a64(request.prompt));

  // Base opinion: shared by every run of the same prompt.
  Stream base(prompt_key);
  std::vector<std::pair<std::size_t, std::string_view>> rows;  // entry index, status
  const auto pick_unused = [&](Stream& s) -> std::optional<std::size_t> {
    if (rows.size() >= entries.size()) return std::nullopt;
    while (true) {
      const auto idx = s.below(entries.size());
      if (std::none_of(rows.begin(), rows.end(), [&](const auto& r) { return r.first == idx; })) {
        return idx;
      }
    }
  };
  if (!entries.empty()) {
    const auto k = base.below(config_.max_labels + 1);
    for (std::size_t i = 0; i < k; ++i) {
      if (const auto idx = pick_unused(base)) {
        rows.emplace_back(*idx, base.uniform() < 0.7 ? "DEFINITE" : "POSSIBLE");
      }
    }
    if (base.uniform() < 0.3) {
      if (const auto idx = pick_unused(base)) rows.emplace_back(*idx, "ABSENT");
    }
  }

  // Per-run disagreement.
  Stream run(mix(prompt_key, static_cast<std::uint64_t>(request.run_index) + 1));
  if (config_.flip_probability > 0.0 && !entries.empty()) {
    std::erase_if(rows, [&](const auto&) { return run.uniform() < config_.flip_probability; });
    if (run.uniform() < config_.flip_probability) {
      if (const auto idx = pick_unused(run)) rows.emplace_back(*idx, "POSSIBLE");
    }
  }

  std::string text =
      "Each listed pathology was checked against the impression text.\n\n"
      "PathologyID,PathologyName,Word\n";
  for (const auto& [idx, status] : rows) {
    const auto& e = entries[idx];
    text += std::to_string(e.id) + "," + e.canonical_name + "," + std::string(status) + "\n";
  }
  if (config_.oov_probability > 0.0 && run.uniform() < config_.oov_probability) {
    text += "0,unlisted finding " + std::to_string(run.below(1000)) + ",POSSIBLE\n";
  }
  text += "\nOnly pathologies named in the impression are listed above.\n";
  result.raw_text = std::move(text);
  return result;
}

std::string MockBackend::identity() const {
  if (config_.canned_reply) return "mock(canned)";
  return "mock(seed=" + std::to_string(config_.seed) +
         ",flip=" + std::to_string(config_.flip_probability) +
         ",oov=" + std::to_string(config_.oov_probability) +
         ",max_labels=" + std::to_string(config_.max_labels) + ")";
}

std::chrono::milliseconds RetryPolicy::backoff_after(int attempt) const {
  const double factor = std::pow(multiplier, std::max(0, attempt - 1));
  const double ms = static_cast<double>(initial_backoff.count()) * factor;
  return std::chrono::milliseconds(
      static_cast<std::int64_t>(std::min(ms, static_cast<double>(max_backoff.count()))));
}

HttpBackendConfig http_config_from_env() {
  HttpBackendConfig config;
  if (const char* url = std::getenv("DX_API_URL")) config.endpoint_url = url;
  if (const char* key = std::getenv("DX_API_KEY")) config.api_key = key;
  return config;
}

std::vector<BatchItem> complete_batch(CompletionBackend& backend,
                                      const std::vector<CompletionRequest>& requests,
                                      std::size_t max_in_flight) {
  if (max_in_flight == 0) throw Error(ErrorCode::kInvalidArgument, "max_in_flight must be >= 1");
  std::vector<BatchItem> items(requests.size());
  if (requests.empty()) return items;

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (auto i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
      try {
        items[i].result = backend.complete(requests[i]);
      } catch (const Error& e) {
        items[i].error = e;
      } catch (const std::exception& e) {
        items[i].error = Error(ErrorCode::kBackendUnavailable, e.what());
      }
    }
  };
  const auto workers = std::min(max_in_flight, requests.size());
  if (workers == 1) {
    worker();
    return items;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  pool.clear();  // joins
  return items;
}

}  // namespace dx
