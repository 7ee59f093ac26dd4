// Copyright 2026 The ctxopt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Chat-completion client. The network lives behind Transport; this library
// ships only in-memory and file-replay transports, and the HTTPS one is in
// the separate ctxopt_http target.

#ifndef CTXOPT_MODEL_CLIENT_HPP_
#define CTXOPT_MODEL_CLIENT_HPP_

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace ctxopt {

enum class Provider { openai, anthropic };
std::string_view to_string(Provider p);
std::optional<Provider> parse_provider(std::string_view text);

struct ModelEndpoint {
  std::string base_url;
  std::string model_name;
  std::string api_key_env;  // name of the variable, never its value
  Provider provider = Provider::openai;
  double temperature = 0.0;
  int max_retries = 2;
  std::chrono::milliseconds timeout{60000};
};

struct Message {
  std::string role;  // system, user or assistant
  std::string text;
  friend bool operator==(const Message&, const Message&) = default;
};

struct HttpRequest {
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::chrono::milliseconds timeout{60000};
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Throws TransportError when no response was received.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse send(const HttpRequest& request) = 0;
};

// One line per attempt. Holds no headers, so no credentials.
struct CallLog {
  std::string model;
  int attempt = 0;
  int status = 0;  // 0 when the transport failed
  double latency_ms = 0.0;
  std::optional<std::int64_t> prompt_tokens;
  std::optional<std::int64_t> completion_tokens;
  std::string error;
};

void to_json(nlohmann::json& j, const CallLog& log);

struct ClientOptions {
  std::chrono::milliseconds backoff_base{500};
  std::function<void(std::chrono::milliseconds)> sleeper;  // default: sleep_for
  std::function<void(const CallLog&)> logger;              // default: drop
  std::function<std::optional<std::string>(const std::string&)> env;  // default: getenv
  int max_in_flight = 0;                                   // 0: unlimited
};

// Shareable across threads.
class ModelClient {
 public:
  ModelClient(ModelEndpoint endpoint, std::shared_ptr<Transport> transport,
              ClientOptions options = {});

  // 429, 5xx and transport failures are retried with exponential backoff,
  // up to max_retries times, then ExhaustedError. Other error statuses throw
  // RemoteError at once. Throws PreconditionViolation on empty `messages`
  // and ConfigError if the credential variable is unset. `temperature`
  // overrides the endpoint default for this call.
  std::string complete(const std::vector<Message>& messages,
                       std::optional<double> temperature = std::nullopt) const;

  const ModelEndpoint& endpoint() const { return endpoint_; }

  // Exposed for tests.
  HttpRequest build_request(const std::vector<Message>& messages,
                            const std::string& api_key,
                            std::optional<double> temperature = std::nullopt) const;
  struct Parsed {
    std::string text;
    std::optional<std::int64_t> prompt_tokens;
    std::optional<std::int64_t> completion_tokens;
  };
  Parsed parse_response(const std::string& body) const;

 private:
  ModelEndpoint endpoint_;
  std::shared_ptr<Transport> transport_;
  ClientOptions options_;

  struct Gate {
    std::mutex mu;
    std::condition_variable cv;
    int in_flight = 0;
  };
  std::shared_ptr<Gate> gate_;
};

// Replaces every occurrence of `secret` in `text`.
std::string redact(std::string text, std::string_view secret);

// Test double: returns queued responses in order, or runs a handler.
class ScriptedTransport : public Transport {
 public:
  using Handler = std::function<HttpResponse(const HttpRequest&)>;
  ScriptedTransport() = default;
  explicit ScriptedTransport(Handler handler) : handler_(std::move(handler)) {}

  // A response with status < 0 makes send() throw TransportError.
  void push(HttpResponse response);
  HttpResponse send(const HttpRequest& request) override;
  std::vector<HttpRequest> requests() const;

 private:
  Handler handler_;
  mutable std::mutex mu_;
  std::deque<HttpResponse> queue_;
  std::vector<HttpRequest> requests_;
};

// Wraps a transport and appends every exchange to a JSONL file as
// {"request": body, "status": ..., "response": body}. Headers are not written.
class RecordingTransport : public Transport {
 public:
  RecordingTransport(std::shared_ptr<Transport> inner, std::filesystem::path path);
  HttpResponse send(const HttpRequest& request) override;

 private:
  std::shared_ptr<Transport> inner_;
  std::filesystem::path path_;
  std::mutex mu_;
};

// Re-drives a recorded log offline: exchange i answers call i, whatever the
// request. Throws TransportError once the log is exhausted.
class ReplayTransport : public Transport {
 public:
  explicit ReplayTransport(const std::filesystem::path& path);
  HttpResponse send(const HttpRequest& request) override;

 private:
  std::mutex mu_;
  std::vector<HttpResponse> responses_;
  std::size_t next_ = 0;
};

}  // namespace ctxopt

#endif  // CTXOPT_MODEL_CLIENT_HPP_
