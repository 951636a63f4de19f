// SPDX-License-Identifier: Apache-2.0

// Same TLS configuration as the library so both see one httplib definition.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <json.hpp>
#include <mutex>
#include <thread>

#include "dx/error.hpp"
#include "dx/llm_gateway.hpp"
#include "dx/parse.hpp"

using namespace dx;
using namespace std::chrono_literals;

namespace {

const Vocabulary& shipped() {
  static const Vocabulary v = load_vocabulary(DX_SOURCE_DIR "/data/vocabulary.tsv");
  return v;
}

/// Local chat-completion stub. The handler sees the 1-based call number.
class StubServer {
 public:
  using Handler = std::function<void(int call, const httplib::Request&, httplib::Response&)>;

  explicit StubServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int call = ++calls_;
      {
        std::lock_guard lock(mu_);
        last_auth_ = req.get_header_value("Authorization");
        last_body_ = req.body;
      }
      handler_(call, req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  int calls() const { return calls_; }
  std::string last_auth() {
    std::lock_guard lock(mu_);
    return last_auth_;
  }
  std::string last_body() {
    std::lock_guard lock(mu_);
    return last_body_;
  }

 private:
  httplib::Server server_;
  Handler handler_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> calls_{0};
  std::mutex mu_;
  std::string last_auth_;
  std::string last_body_;
};

std::string ok_body(const std::string& text, const std::string& finish = "stop") {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}},
                                      {"finish_reason", finish}}}}}
      .dump();
}

HttpBackendConfig fast_config(const std::string& url) {
  HttpBackendConfig c;
  c.endpoint_url = url;
  c.api_key = "test-key";
  c.retry.initial_backoff = 1ms;
  c.retry.max_backoff = 5ms;
  c.timeout = 5s;
  return c;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIoError;
}

/// Counts concurrent calls and fails selected prompts.
class ProbeBackend final : public CompletionBackend {
 public:
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};
  std::string fail_prompt;

  CompletionResult complete(const CompletionRequest& r) override {
    const int now = ++in_flight;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(2ms);
    --in_flight;
    if (r.prompt == fail_prompt) throw Error(ErrorCode::kBackendUnavailable, "down");
    return {r.prompt, 0, 1};
  }
  std::string identity() const override { return "probe"; }
};

}  // namespace

TEST_CASE("mock replies are a pure function of seed, prompt and run") {
  MockBackend a(shipped(), {.seed = 7, .flip_probability = 0.3, .oov_probability = 0.3});
  MockBackend b(shipped(), {.seed = 7, .flip_probability = 0.3, .oov_probability = 0.3});
  MockBackend c(shipped(), {.seed = 8, .flip_probability = 0.3, .oov_probability = 0.3});
  CompletionRequest req;
  req.prompt = "impression text";
  const auto first = a.complete(req).raw_text;
  CHECK(a.complete(req).raw_text == first);
  CHECK(b.complete(req).raw_text == first);
  int differs = 0;
  for (int run = 0; run < 8; ++run) {
    req.run_index = run;
    differs += c.complete(req).raw_text != a.complete(req).raw_text;
  }
  CHECK(differs > 0);
  CHECK(a.identity() == b.identity());
}

TEST_CASE("mock replies parse as teacher CSV") {
  MockBackend m(shipped(), {.seed = 1, .flip_probability = 0.2, .oov_probability = 0.5});
  int oov = 0;
  for (int i = 0; i < 50; ++i) {
    CompletionRequest req;
    req.prompt = "p" + std::to_string(i);
    const auto parsed = parse_teacher_csv(m.complete(req).raw_text, shipped());
    CHECK(parsed.malformed_rows.empty());
    for (const auto& a : parsed.assertions) oov += a.is_oov();
  }
  CHECK(oov > 0);
}

TEST_CASE("canned mock reply") {
  const std::string canned = "PathologyID,PathologyName,Word\n71,gout,DEFINITE";
  MockBackend m(shipped(), {.canned_reply = canned});
  CompletionRequest req;
  req.prompt = "anything";
  CHECK(m.complete(req).raw_text == canned);
}

TEST_CASE("request validation") {
  CompletionRequest r;
  r.temperature = -0.1;
  CHECK(code_of([&] { validate(r); }) == ErrorCode::kInvalidArgument);
  r.temperature = 1.0;
  r.max_tokens = 0;
  CHECK(code_of([&] { validate(r); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("backoff schedule is exponential and capped") {
  RetryPolicy p;
  CHECK(p.backoff_after(1) == 500ms);
  CHECK(p.backoff_after(2) == 1000ms);
  CHECK(p.backoff_after(3) == 2000ms);
  CHECK(p.backoff_after(20) == 30000ms);
}

TEST_CASE("HTTP: 429 then 200 succeeds on the second attempt") {
  StubServer server([](int call, const httplib::Request&, httplib::Response& res) {
    if (call == 1) {
      res.status = 429;
      res.set_header("Retry-After", "0");
      return;
    }
    res.set_content(ok_body("PathologyID,PathologyName,Word\n54,gout,DEFINITE"), "application/json");
  });
  HttpBackend backend(fast_config(server.url()));
  CompletionRequest req;
  req.prompt = "hello";
  req.temperature = 1.0;
  const auto result = backend.complete(req);
  CHECK(result.attempt_count == 2);
  CHECK(result.raw_text == "PathologyID,PathologyName,Word\n54,gout,DEFINITE");
  CHECK(server.calls() == 2);
  CHECK(server.last_auth() == "Bearer test-key");
  const auto body = nlohmann::json::parse(server.last_body());
  CHECK(body["model"] == "gpt-4-32k");
  CHECK(body["temperature"] == 1.0);
  CHECK(body["messages"][0]["content"] == "hello");
}

TEST_CASE("HTTP: persistent 5xx exhausts the attempt cap") {
  StubServer server([](int, const httplib::Request&, httplib::Response& res) { res.status = 503; });
  auto config = fast_config(server.url());
  config.retry.max_attempts = 3;
  HttpBackend backend(config);
  CompletionRequest req;
  req.prompt = "x";
  CHECK(code_of([&] { backend.complete(req); }) == ErrorCode::kBackendUnavailable);
  CHECK(server.calls() == 3);
}

TEST_CASE("HTTP: auth failures are not retried") {
  StubServer server([](int, const httplib::Request&, httplib::Response& res) { res.status = 401; });
  HttpBackend backend(fast_config(server.url()));
  CompletionRequest req;
  req.prompt = "x";
  CHECK(code_of([&] { backend.complete(req); }) == ErrorCode::kAuthError);
  CHECK(server.calls() == 1);
}

TEST_CASE("HTTP: length-truncated completions are rejected") {
  StubServer server([](int, const httplib::Request&, httplib::Response& res) {
    res.set_content(ok_body("PathologyID,Pathology", "length"), "application/json");
  });
  HttpBackend backend(fast_config(server.url()));
  CompletionRequest req;
  req.prompt = "x";
  CHECK(code_of([&] { backend.complete(req); }) == ErrorCode::kResponseTruncated);
}

TEST_CASE("HTTP: unreachable endpoint") {
  auto config = fast_config("http://127.0.0.1:1/v1/chat/completions");
  config.retry.max_attempts = 2;
  HttpBackend backend(config);
  CompletionRequest req;
  req.prompt = "x";
  CHECK(code_of([&] { backend.complete(req); }) == ErrorCode::kBackendUnavailable);
}

TEST_CASE("HTTP configuration comes from the environment") {
  ::unsetenv("DX_API_KEY");
  ::setenv("DX_API_URL", "http://127.0.0.1:9/v1/chat/completions", 1);
  CHECK(code_of([] { HttpBackend backend(http_config_from_env()); }) == ErrorCode::kAuthError);
  ::setenv("DX_API_KEY", "k", 1);
  const auto c = http_config_from_env();
  CHECK(c.api_key == "k");
  CHECK(c.endpoint_url == "http://127.0.0.1:9/v1/chat/completions");
  ::unsetenv("DX_API_URL");
  CHECK(code_of([] { HttpBackend backend(http_config_from_env()); }) == ErrorCode::kInvalidArgument);
  ::unsetenv("DX_API_KEY");
}

TEST_CASE("batch keeps order and respects the in-flight cap") {
  ProbeBackend probe;
  std::vector<CompletionRequest> reqs(40);
  for (std::size_t i = 0; i < reqs.size(); ++i) reqs[i].prompt = "q" + std::to_string(i);
  const auto items = complete_batch(probe, reqs, 3);
  REQUIRE(items.size() == reqs.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    REQUIRE(items[i].ok());
    CHECK(items[i].result->raw_text == reqs[i].prompt);
  }
  CHECK(probe.peak.load() <= 3);
  CHECK(probe.peak.load() >= 2);
}

TEST_CASE("batch embeds per-item failures") {
  ProbeBackend probe;
  probe.fail_prompt = "q3";
  std::vector<CompletionRequest> reqs(5);
  for (std::size_t i = 0; i < reqs.size(); ++i) reqs[i].prompt = "q" + std::to_string(i);
  const auto items = complete_batch(probe, reqs, 2);
  REQUIRE(items.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(items[i].ok() == (i != 3));
  REQUIRE(items[3].error);
  CHECK(items[3].error->code() == ErrorCode::kBackendUnavailable);
}

TEST_CASE("mock batch matches sequential calls") {
  MockBackend m(shipped(), {.seed = 3, .flip_probability = 0.4});
  std::vector<CompletionRequest> reqs(5);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    reqs[i].prompt = "impression " + std::to_string(i % 2);
    reqs[i].run_index = int(i);
  }
  const auto items = complete_batch(m, reqs, 2);
  for (std::size_t i = 0; i < reqs.size(); ++i) CHECK(items[i].result->raw_text == m.complete(reqs[i]).raw_text);
  CHECK(complete_batch(m, {}, 2).empty());
}

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}
