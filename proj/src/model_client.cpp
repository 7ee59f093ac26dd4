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

#include "ctxopt/model_client.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "ctxopt/errors.hpp"

namespace ctxopt {

std::string_view to_string(Provider p) {
  return p == Provider::anthropic ? "anthropic" : "openai";
}

std::optional<Provider> parse_provider(std::string_view text) {
  if (text == "openai") return Provider::openai;
  if (text == "anthropic") return Provider::anthropic;
  return std::nullopt;
}

void to_json(nlohmann::json& j, const CallLog& log) {
  j = {{"model", log.model},
       {"attempt", log.attempt},
       {"status", log.status},
       {"latency_ms", log.latency_ms}};
  if (log.prompt_tokens) j["prompt_tokens"] = *log.prompt_tokens;
  if (log.completion_tokens) j["completion_tokens"] = *log.completion_tokens;
  if (!log.error.empty()) j["error"] = log.error;
}

std::string redact(std::string text, std::string_view secret) {
  if (secret.empty()) return text;
  for (auto pos = text.find(secret); pos != std::string::npos;
       pos = text.find(secret, pos)) {
    text.replace(pos, secret.size(), "[redacted]");
  }
  return text;
}

ModelClient::ModelClient(ModelEndpoint endpoint, std::shared_ptr<Transport> transport,
                         ClientOptions options)
    : endpoint_(std::move(endpoint)),
      transport_(std::move(transport)),
      options_(std::move(options)),
      gate_(std::make_shared<Gate>()) {
  if (!transport_) throw ConfigError("model client without a transport");
  if (endpoint_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (!options_.sleeper) {
    options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (!options_.env) {
    options_.env = [](const std::string& name) -> std::optional<std::string> {
      const char* v = std::getenv(name.c_str());
      return v ? std::optional<std::string>(v) : std::nullopt;
    };
  }
}

HttpRequest ModelClient::build_request(const std::vector<Message>& messages,
                                       const std::string& api_key,
                                       std::optional<double> temperature) const {
  HttpRequest req;
  req.timeout = endpoint_.timeout;
  std::string base = endpoint_.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  nlohmann::json body;
  body["model"] = endpoint_.model_name;
  body["temperature"] = temperature.value_or(endpoint_.temperature);
  if (endpoint_.provider == Provider::anthropic) {
    req.url = base + "/messages";
    if (!api_key.empty()) req.headers.emplace_back("x-api-key", api_key);
    req.headers.emplace_back("anthropic-version", "2023-06-01");
    std::string system;
    nlohmann::json turns = nlohmann::json::array();
    for (const Message& m : messages) {
      if (m.role == "system") {
        if (!system.empty()) system += "\n\n";
        system += m.text;
      } else {
        turns.push_back({{"role", m.role}, {"content", m.text}});
      }
    }
    if (!system.empty()) body["system"] = system;
    body["messages"] = std::move(turns);
    body["max_tokens"] = 4096;
  } else {
    req.url = base + "/chat/completions";
    if (!api_key.empty()) req.headers.emplace_back("Authorization", "Bearer " + api_key);
    nlohmann::json turns = nlohmann::json::array();
    for (const Message& m : messages) turns.push_back({{"role", m.role}, {"content", m.text}});
    body["messages"] = std::move(turns);
  }
  req.headers.emplace_back("Content-Type", "application/json");
  req.body = body.dump();
  return req;
}

ModelClient::Parsed ModelClient::parse_response(const std::string& body) const {
  Parsed out;
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw RemoteError("response is not a JSON object", 200);
  try {
    if (endpoint_.provider == Provider::anthropic) {
      for (const auto& part : j.at("content")) {
        if (part.value("type", "") == "text") out.text += part.at("text").get<std::string>();
      }
      if (j.contains("usage")) {
        const auto& u = j["usage"];
        if (u.contains("input_tokens")) out.prompt_tokens = u["input_tokens"].get<std::int64_t>();
        if (u.contains("output_tokens")) {
          out.completion_tokens = u["output_tokens"].get<std::int64_t>();
        }
      }
    } else {
      out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      if (j.contains("usage")) {
        const auto& u = j["usage"];
        if (u.contains("prompt_tokens")) out.prompt_tokens = u["prompt_tokens"].get<std::int64_t>();
        if (u.contains("completion_tokens")) {
          out.completion_tokens = u["completion_tokens"].get<std::int64_t>();
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw RemoteError(std::string("unexpected response shape: ") + e.what(), 200);
  }
  return out;
}

std::string ModelClient::complete(const std::vector<Message>& messages,
                                  std::optional<double> temperature) const {
  if (messages.empty()) throw PreconditionViolation("completion needs at least one message");
  std::string api_key;
  if (!endpoint_.api_key_env.empty()) {
    auto v = options_.env(endpoint_.api_key_env);
    if (!v) throw ConfigError("environment variable " + endpoint_.api_key_env + " is not set");
    api_key = *v;
  }
  const HttpRequest request = build_request(messages, api_key, temperature);

  {
    std::unique_lock lock(gate_->mu);
    if (options_.max_in_flight > 0) {
      gate_->cv.wait(lock, [&] { return gate_->in_flight < options_.max_in_flight; });
    }
    ++gate_->in_flight;
  }
  struct Release {
    Gate* g;
    ~Release() {
      {
        std::lock_guard lock(g->mu);
        --g->in_flight;
      }
      g->cv.notify_one();
    }
  } release{gate_.get()};

  const int attempts = endpoint_.max_retries + 1;
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    CallLog log;
    log.model = endpoint_.model_name;
    log.attempt = attempt;
    const auto start = std::chrono::steady_clock::now();
    bool retryable = false;
    try {
      const HttpResponse resp = transport_->send(request);
      log.status = resp.status;
      log.latency_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start).count();
      if (resp.status >= 200 && resp.status < 300) {
        Parsed parsed = parse_response(resp.body);
        log.prompt_tokens = parsed.prompt_tokens;
        log.completion_tokens = parsed.completion_tokens;
        if (options_.logger) options_.logger(log);
        return parsed.text;
      }
      last_error = "status " + std::to_string(resp.status) + ": " +
                   redact(resp.body.substr(0, 200), api_key);
      if (resp.status == 429 || resp.status >= 500) {
        retryable = true;
      } else {
        log.error = last_error;
        if (options_.logger) options_.logger(log);
        throw RemoteError(last_error, resp.status);
      }
    } catch (const TransportError& e) {
      last_error = redact(e.what(), api_key);
      log.latency_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start).count();
      retryable = true;
    }
    log.error = last_error;
    if (options_.logger) options_.logger(log);
    if (retryable && attempt < attempts) {
      options_.sleeper(options_.backoff_base * (1LL << std::min(attempt - 1, 16)));
    }
  }
  throw ExhaustedError("model call failed after " + std::to_string(attempts) +
                           " attempts: " + last_error,
                       attempts);
}

void ScriptedTransport::push(HttpResponse response) {
  std::lock_guard lock(mu_);
  queue_.push_back(std::move(response));
}

HttpResponse ScriptedTransport::send(const HttpRequest& request) {
  HttpResponse resp;
  {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
    if (!handler_) {
      if (queue_.empty()) throw TransportError("scripted transport has no response queued");
      resp = std::move(queue_.front());
      queue_.pop_front();
    }
  }
  if (handler_) resp = handler_(request);
  if (resp.status < 0) throw TransportError(resp.body.empty() ? "injected failure" : resp.body);
  return resp;
}

std::vector<HttpRequest> ScriptedTransport::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

RecordingTransport::RecordingTransport(std::shared_ptr<Transport> inner,
                                       std::filesystem::path path)
    : inner_(std::move(inner)), path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

HttpResponse RecordingTransport::send(const HttpRequest& request) {
  nlohmann::json line = {{"request", request.body}};
  HttpResponse resp;
  try {
    resp = inner_->send(request);
    line["status"] = resp.status;
    line["response"] = resp.body;
  } catch (const TransportError& e) {
    line["status"] = -1;
    line["response"] = e.what();
    std::lock_guard lock(mu_);
    std::ofstream(path_, std::ios::app) << line.dump() << "\n";
    throw;
  }
  std::lock_guard lock(mu_);
  std::ofstream(path_, std::ios::app) << line.dump() << "\n";
  return resp;
}

ReplayTransport::ReplayTransport(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ConfigError("bad line in '" + path.string() + "'");
    responses_.push_back({j.at("status").get<int>(), j.at("response").get<std::string>()});
  }
}

HttpResponse ReplayTransport::send(const HttpRequest&) {
  std::lock_guard lock(mu_);
  if (next_ >= responses_.size()) throw TransportError("replay log exhausted");
  HttpResponse resp = responses_[next_++];
  if (resp.status < 0) throw TransportError(resp.body);
  return resp;
}

}  // namespace ctxopt
