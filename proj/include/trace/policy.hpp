#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "trace/rng.hpp"

namespace trace {

struct SamplingParams {
  double temperature = 0.0;
  std::uint64_t seed = 0;
  int max_new_tokens = 256;
  std::vector<std::string> stop;
};

enum class InfraErrorKind {
  unreachable,
  timeout,
  malformed_response,
  http_error,
};

// Raised after a backend error survives the bounded retry loop. Episodes
// that see this are marked failed-infrastructure, distinct from task failure.
class InfraError : public std::runtime_error {
 public:
  InfraError(InfraErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  InfraErrorKind kind() const { return kind_; }

 private:
  InfraErrorKind kind_;
};

// One completion per call. Stateless from the caller's point of view apart
// from the scripted policies' seeded draw counters.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string complete(const std::string& prompt,
                               const SamplingParams& params) = 0;
};

using WeightedCompletions = std::vector<std::pair<std::string, double>>;

namespace detail {

inline WeightedCompletions normalise_weights(WeightedCompletions items) {
  if (items.empty()) {
    throw std::invalid_argument("scripted distribution must be non-empty");
  }
  double total = 0.0;
  for (const auto& [text, w] : items) {
    if (w < 0.0) {
      throw std::invalid_argument("scripted weight must be non-negative: " +
                                  text);
    }
    total += w;
  }
  if (total <= 0.0) {
    throw std::invalid_argument("scripted weights must sum to a positive value");
  }
  for (auto& [text, w] : items) w /= total;
  return items;
}

}  // namespace detail

// Deterministic test backend: each context (fingerprint = hash of the prompt
// text) maps to a weighted completion distribution. The draw for a given
// (fingerprint, seed, draw-index) triple is a pure function of the triple, so
// streams replay identically regardless of how episodes interleave.
class ScriptedPolicy : public Policy {
 public:
  explicit ScriptedPolicy(std::uint64_t seed) : seed_(seed) {}

  void set_default(WeightedCompletions items) {
    default_ = detail::normalise_weights(std::move(items));
    has_default_ = true;
  }

  void add_rule(const std::string& prompt, WeightedCompletions items) {
    exact_[fnv1a64(prompt)] = detail::normalise_weights(std::move(items));
  }

  void add_contains_rule(std::string needle, WeightedCompletions items) {
    contains_.emplace_back(std::move(needle),
                           detail::normalise_weights(std::move(items)));
  }

  std::string complete(const std::string& prompt,
                       const SamplingParams& params) override {
    std::uint64_t fp = fnv1a64(prompt);
    const WeightedCompletions* dist = find_distribution(prompt, fp);
    if (dist == nullptr) {
      throw std::logic_error("scripted policy has no rule for this context");
    }
    if (params.temperature == 0.0) {
      // Greedy decoding: the mode of the distribution, first on ties. No
      // draw is consumed, so a fixed prompt always completes identically.
      const auto* best = &dist->front();
      for (const auto& item : *dist) {
        if (item.second > best->second) best = &item;
      }
      return best->first;
    }
    int index = draw_counts_[fp]++;
    double u = draw_unit(fp, static_cast<std::uint64_t>(index));
    double acc = 0.0;
    for (const auto& [text, w] : *dist) {
      acc += w;
      if (u < acc) return text;
    }
    return dist->back().first;
  }

  void reset_draws() { draw_counts_.clear(); }

 private:
  const WeightedCompletions* find_distribution(const std::string& prompt,
                                               std::uint64_t fp) const {
    if (auto it = exact_.find(fp); it != exact_.end()) return &it->second;
    for (const auto& [needle, dist] : contains_) {
      if (prompt.find(needle) != std::string::npos) return &dist;
    }
    return has_default_ ? &default_ : nullptr;
  }

  double draw_unit(std::uint64_t fp, std::uint64_t index) const {
    std::uint64_t h = hash_combine(hash_combine(fp, seed_), index);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  std::uint64_t seed_;
  std::unordered_map<std::uint64_t, WeightedCompletions> exact_;
  std::vector<std::pair<std::string, WeightedCompletions>> contains_;
  WeightedCompletions default_;
  bool has_default_ = false;
  std::unordered_map<std::uint64_t, int> draw_counts_;
};

// Cycles through a fixed completion list per context, by draw index. Useful
// for forcing exact disagreement patterns (e.g. guaranteed non-unanimity).
class CyclingPolicy : public Policy {
 public:
  explicit CyclingPolicy(std::vector<std::string> items)
      : items_(std::move(items)) {
    if (items_.empty()) {
      throw std::invalid_argument("cycling policy needs at least one item");
    }
  }

  std::string complete(const std::string& prompt,
                       const SamplingParams&) override {
    std::uint64_t fp = fnv1a64(prompt);
    int index = draw_counts_[fp]++;
    return items_[static_cast<std::size_t>(index) % items_.size()];
  }

 private:
  std::vector<std::string> items_;
  std::unordered_map<std::uint64_t, int> draw_counts_;
};

// Serves pre-recorded draw streams per context. Lets a test replay the exact
// same samples under different controller settings.
class ReplayPolicy : public Policy {
 public:
  void add_stream(const std::string& prompt, std::vector<std::string> draws) {
    streams_[fnv1a64(prompt)] = std::move(draws);
  }

  std::string complete(const std::string& prompt,
                       const SamplingParams&) override {
    std::uint64_t fp = fnv1a64(prompt);
    auto it = streams_.find(fp);
    if (it == streams_.end()) {
      throw std::logic_error("replay policy has no stream for this context");
    }
    std::size_t index = static_cast<std::size_t>(draw_counts_[fp]++);
    if (index >= it->second.size()) {
      throw std::logic_error("replay stream exhausted");
    }
    return it->second[index];
  }

  void reset_draws() { draw_counts_.clear(); }

 private:
  std::unordered_map<std::uint64_t, std::vector<std::string>> streams_;
  std::unordered_map<std::uint64_t, int> draw_counts_;
};

// Scripted-policy spec file, JSON:
//   {"default": [["text", w], ...],
//    "rules": [{"contains": "...", "weights": [["text", w], ...]}],
//    "cycle": ["a", "b"]}
// "cycle" takes precedence and yields a CyclingPolicy; otherwise the rules
// and default build a ScriptedPolicy.
struct ScriptedSpec {
  WeightedCompletions default_weights;
  std::vector<std::pair<std::string, WeightedCompletions>> contains_rules;
  std::vector<std::string> cycle;
};

inline ScriptedSpec load_scripted_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scripted spec: " + path);
  nlohmann::json doc = nlohmann::json::parse(in);

  auto parse_weights = [](const nlohmann::json& arr) {
    WeightedCompletions out;
    for (const auto& entry : arr) {
      out.emplace_back(entry.at(0).get<std::string>(),
                       entry.at(1).get<double>());
    }
    return out;
  };

  ScriptedSpec spec;
  if (doc.contains("cycle")) {
    spec.cycle = doc["cycle"].get<std::vector<std::string>>();
  }
  if (doc.contains("default")) {
    spec.default_weights = parse_weights(doc["default"]);
  }
  if (doc.contains("rules")) {
    for (const auto& rule : doc["rules"]) {
      spec.contains_rules.emplace_back(rule.at("contains").get<std::string>(),
                                       parse_weights(rule.at("weights")));
    }
  }
  if (spec.cycle.empty() && spec.default_weights.empty() &&
      spec.contains_rules.empty()) {
    throw std::runtime_error("scripted spec defines no completions: " + path);
  }
  return spec;
}

inline std::unique_ptr<Policy> make_scripted_policy(const ScriptedSpec& spec,
                                                    std::uint64_t seed) {
  if (!spec.cycle.empty()) {
    return std::make_unique<CyclingPolicy>(spec.cycle);
  }
  auto policy = std::make_unique<ScriptedPolicy>(seed);
  for (const auto& [needle, weights] : spec.contains_rules) {
    policy->add_contains_rule(needle, weights);
  }
  if (!spec.default_weights.empty()) policy->set_default(spec.default_weights);
  return policy;
}

}  // namespace trace
