#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include "trace/policy.hpp"
#include "trace/remote_policy.hpp"
#include "trace/runner.hpp"

namespace trace {

// Builds a per-seed policy factory from a model spec: an http(s) endpoint
// locator for a live backend, or "scripted:<file>" for a scripted policy.
inline PolicyFactory make_policy_factory(const std::string& model_spec,
                                         const std::string& model_name =
                                             "default",
                                         RetryOptions retry = {}) {
  if (model_spec.starts_with("scripted:")) {
    auto spec = std::make_shared<ScriptedSpec>(
        load_scripted_spec(model_spec.substr(9)));
    return [spec](std::uint64_t seed) {
      return make_scripted_policy(*spec, seed);
    };
  }
  if (model_spec.starts_with("http://") ||
      model_spec.starts_with("https://")) {
    return [model_spec, model_name, retry](std::uint64_t) {
      return std::make_unique<RemotePolicy>(model_spec, model_name, retry);
    };
  }
  throw std::invalid_argument(
      "model must be an http(s) endpoint or scripted:<file>, got: " +
      model_spec);
}

}  // namespace trace
