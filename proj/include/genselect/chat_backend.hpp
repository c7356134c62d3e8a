#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <limits>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "genselect/backend.hpp"

// Live access to any chat-completions endpoint. The HTTP layer sits behind
// the Transport interface; http_transport.hpp provides the cpp-httplib
// implementation so that only binaries talking to a real server pay for it.

namespace genselect {

struct HttpResponse {
  // 0 means the request never produced an HTTP status (connect/read error).
  int status = 0;
  std::string body;
  std::string error;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& path, const HttpHeaders& headers,
                            const std::string& body) = 0;
};

struct RetryPolicy {
  int max_retries = 4;
  std::chrono::milliseconds initial_delay{1000};
  double backoff_factor = 2.0;
  std::chrono::milliseconds max_delay{30000};

  // Delay before retry number `attempt` (0-based).
  std::chrono::milliseconds delay_for(int attempt) const {
    double d = static_cast<double>(initial_delay.count());
    for (int i = 0; i < attempt; ++i) d *= backoff_factor;
    d = std::min(d, static_cast<double>(max_delay.count()));
    return std::chrono::milliseconds(static_cast<std::int64_t>(d));
  }
};

struct ChatEndpointConfig {
  std::string model;
  std::string api_key;
  // Appended to the base URL, which usually already ends in /v1.
  std::string path = "/chat/completions";
  std::size_t max_in_flight = 8;
  RetryPolicy retry;
};

inline bool is_transient_status(int status) {
  return status == 0 || status == 408 || status == 409 || status == 429 ||
         status >= 500;
}

inline bool looks_like_context_overflow(const std::string& body) {
  std::string lower(body);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const char* needle : {"context length", "context_length", "maximum context",
                             "too many tokens", "prompt is too long", "context window"}) {
    if (lower.find(needle) != std::string::npos) return true;
  }
  return false;
}

inline nlohmann::json build_chat_request(const ChatEndpointConfig& config,
                                         const GenerationRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", m.role}, {"content", m.text}});
  }
  nlohmann::json body = {{"model", config.model},
                         {"messages", std::move(messages)},
                         {"temperature", request.temperature},
                         {"top_p", request.top_p},
                         {"max_tokens", request.max_output_tokens}};
  if (request.seed_hint) body["seed"] = *request.seed_hint;
  return body;
}

inline GenerationResult parse_chat_response(const std::string& body) {
  const auto j = nlohmann::json::parse(body);
  const auto& choice = j.at("choices").at(0);
  GenerationResult r;
  const auto& msg = choice.at("message");
  if (msg.contains("content") && msg.at("content").is_string()) {
    r.text = msg.at("content").get<std::string>();
  }
  const auto finish =
      choice.contains("finish_reason") && choice.at("finish_reason").is_string()
          ? choice.at("finish_reason").get<std::string>()
          : std::string("stop");
  r.finish_reason = finish == "length" ? FinishReason::Length
                    : finish == "stop" ? FinishReason::Stop
                                       : FinishReason::Error;
  if (j.contains("usage") && j.at("usage").is_object()) {
    const auto& u = j.at("usage");
    r.prompt_tokens = u.value("prompt_tokens", std::size_t{0});
    r.output_tokens = u.value("completion_tokens", std::size_t{0});
  }
  return r;
}

// Chat-completions client with bounded in-flight requests and capped
// exponential backoff on transient failures.
class ChatCompletionsBackend final : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  ChatCompletionsBackend(ChatEndpointConfig config, std::shared_ptr<Transport> transport,
                         Sleeper sleeper = [](std::chrono::milliseconds d) {
                           std::this_thread::sleep_for(d);
                         })
      : config_(std::move(config)),
        transport_(std::move(transport)),
        sleeper_(std::move(sleeper)),
        slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(config_.max_in_flight, 1))) {}

  GenerationResult generate(const GenerationRequest& request) override {
    request.validate();
    const std::string body = build_chat_request(config_, request).dump();
    HttpHeaders headers{{"Content-Type", "application/json"}};
    if (!config_.api_key.empty()) {
      headers.emplace_back("Authorization", "Bearer " + config_.api_key);
    }

    std::string last_error;
    for (int attempt = 0; attempt <= config_.retry.max_retries; ++attempt) {
      if (attempt > 0) sleeper_(config_.retry.delay_for(attempt - 1));
      HttpResponse resp;
      const auto start = std::chrono::steady_clock::now();
      {
        slots_.acquire();
        struct Release {
          std::counting_semaphore<>& s;
          ~Release() { s.release(); }
        } release{slots_};
        resp = transport_->post(config_.path, headers, body);
      }
      const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - start);

      if (resp.status == 200) {
        try {
          auto result = parse_chat_response(resp.body);
          result.latency_ms = latency.count();
          return result;
        } catch (const std::exception& e) {
          last_error = std::string("malformed response: ") + e.what();
          continue;
        }
      }
      if (resp.status == 400 || resp.status == 413) {
        if (looks_like_context_overflow(resp.body)) {
          throw ContextOverflow("endpoint rejected prompt size: " + resp.body);
        }
      }
      if (!is_transient_status(resp.status)) {
        throw BackendError("HTTP " + std::to_string(resp.status) + ": " + resp.body);
      }
      last_error = resp.status == 0 ? resp.error
                                    : "HTTP " + std::to_string(resp.status) + ": " + resp.body;
    }
    throw BackendUnavailable("giving up after " +
                             std::to_string(config_.retry.max_retries + 1) +
                             " attempts: " + last_error);
  }

  const ChatEndpointConfig& config() const noexcept { return config_; }

 private:
  ChatEndpointConfig config_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
  std::counting_semaphore<> slots_;
};

}  // namespace genselect
