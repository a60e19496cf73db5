#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "trace/policy.hpp"

namespace trace {

struct RetryOptions {
  int max_retries = 3;       // attempts beyond the first
  int backoff_ms = 100;      // fixed pause between attempts
  int timeout_sec = 120;     // per-request read timeout
  bool include_seed = false; // most servers ignore it; off by default
};

// Client for an OpenAI-compatible completions endpoint. Sends
// model/prompt/temperature/max_tokens/stop (and seed when enabled), returns
// the first choice's text. Connection failures, timeouts, bad statuses and
// malformed bodies are retried up to max_retries, then surface as InfraError.
class RemotePolicy : public Policy {
 public:
  RemotePolicy(std::string base_url, std::string model,
               RetryOptions retry = {})
      : base_url_(std::move(base_url)),
        model_(std::move(model)),
        retry_(retry) {}

  std::string complete(const std::string& prompt,
                       const SamplingParams& params) override {
    nlohmann::json body{
        {"model", model_},
        {"prompt", prompt},
        {"temperature", params.temperature},
        {"max_tokens", params.max_new_tokens},
    };
    if (!params.stop.empty()) body["stop"] = params.stop;
    if (retry_.include_seed) body["seed"] = params.seed;
    const std::string payload = body.dump();

    InfraErrorKind last_kind = InfraErrorKind::unreachable;
    std::string last_detail = "no attempt made";
    for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(retry_.backoff_ms));
      }
      httplib::Client client(base_url_);
      client.set_connection_timeout(retry_.timeout_sec, 0);
      client.set_read_timeout(retry_.timeout_sec, 0);

      httplib::Result res =
          client.Post("/v1/completions", payload, "application/json");
      if (!res) {
        bool timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                         res.error() == httplib::Error::Read ||
                         res.error() == httplib::Error::Write;
        last_kind = timed_out ? InfraErrorKind::timeout
                              : InfraErrorKind::unreachable;
        last_detail = httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_kind = InfraErrorKind::http_error;
        last_detail = "status " + std::to_string(res->status);
        continue;
      }
      nlohmann::json doc = nlohmann::json::parse(res->body, nullptr, false);
      if (doc.is_discarded() || !doc.contains("choices") ||
          !doc["choices"].is_array() || doc["choices"].empty() ||
          !doc["choices"][0].contains("text") ||
          !doc["choices"][0]["text"].is_string()) {
        last_kind = InfraErrorKind::malformed_response;
        last_detail = "response lacks choices[0].text";
        continue;
      }
      return doc["choices"][0]["text"].get<std::string>();
    }
    throw InfraError(last_kind, "backend failed after " +
                                    std::to_string(retry_.max_retries + 1) +
                                    " attempts: " + last_detail);
  }

 private:
  std::string base_url_;
  std::string model_;
  RetryOptions retry_;
};

inline std::string remote_complete(const std::string& endpoint,
                                   const std::string& prompt,
                                   const SamplingParams& params,
                                   const std::string& model = "default",
                                   RetryOptions retry = {}) {
  RemotePolicy policy(endpoint, model, retry);
  return policy.complete(prompt, params);
}

}  // namespace trace
