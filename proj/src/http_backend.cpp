// SPDX-License-Identifier: Apache-2.0

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <thread>

#include <json.hpp>

#include "dx/llm_gateway.hpp"

namespace dx {
namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "endpoint URL needs a scheme: '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

std::string chat_request_body(const CompletionRequest& request) {
  const nlohmann::json body = {
      {"model", request.model_name},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", request.temperature},
      {"max_tokens", request.max_tokens}};
  return body.dump();
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.endpoint_url.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no endpoint URL (set DX_API_URL)");
  }
  if (config_.api_key.empty()) {
    throw Error(ErrorCode::kAuthError, "no credential (set DX_API_KEY)");
  }
  if (config_.retry.max_attempts < 1) {
    throw Error(ErrorCode::kInvalidArgument, "retry attempt cap must be >= 1");
  }
  auto parts = split_url(config_.endpoint_url);
  scheme_host_port_ = std::move(parts.scheme_host_port);
  path_ = std::move(parts.path);
}

std::string HttpBackend::identity() const { return "http(" + config_.endpoint_url + ")"; }

CompletionResult HttpBackend::complete(const CompletionRequest& request) {
  validate(request);
  const auto body = chat_request_body(request);
  const httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};
  const auto started = std::chrono::steady_clock::now();

  std::string last_failure;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);

    auto delay = config_.retry.backoff_after(attempt);
    const auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_failure = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 401 || res->status == 403) {
      throw Error(ErrorCode::kAuthError, "HTTP " + std::to_string(res->status));
    } else if (retryable(res->status)) {
      last_failure = "HTTP " + std::to_string(res->status);
      if (res->has_header("Retry-After")) {
        try {
          const auto secs = std::stoll(res->get_header_value("Retry-After"));
          delay = std::min<std::chrono::milliseconds>(std::chrono::seconds(secs),
                                                      config_.retry.max_backoff);
        } catch (const std::exception&) {
          // HTTP-date form; keep the computed backoff.
        }
      }
    } else if (res->status != 200) {
      throw Error(ErrorCode::kBackendUnavailable,
                  "HTTP " + std::to_string(res->status) + " (not retried)");
    } else {
      nlohmann::json reply;
      try {
        reply = nlohmann::json::parse(res->body);
        const auto& choice = reply.at("choices").at(0);
        if (choice.value("finish_reason", "") == "length") {
          throw Error(ErrorCode::kResponseTruncated, "completion hit max_tokens");
        }
        CompletionResult result;
        result.raw_text = choice.at("message").at("content").get<std::string>();
        result.attempt_count = attempt;
        result.latency_ms = static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - started)
                .count());
        return result;
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kBackendUnavailable, std::string("malformed reply: ") + e.what());
      }
    }
    if (attempt < config_.retry.max_attempts) std::this_thread::sleep_for(delay);
  }
  throw Error(ErrorCode::kBackendUnavailable,
              "gave up after " + std::to_string(config_.retry.max_attempts) +
                  " attempts; last failure: " + last_failure);
}

}  // namespace dx
