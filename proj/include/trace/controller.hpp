#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "trace/canon.hpp"
#include "trace/policy.hpp"

namespace trace {

// Everything the agent has seen so far: goal, observations o_1..o_t and the
// actions a_1..a_{t-1} that produced them. Once an episode has started,
// observations.size() == actions.size() + 1.
struct StepContext {
  std::string goal;
  std::vector<std::string> observations;
  std::vector<std::string> actions;
  int step_index = 0;
};

enum class ConditionKind { greedy, sc, trace };

struct ConditionConfig {
  ConditionKind kind = ConditionKind::greedy;
  int k = 1;          // sc: fixed draws per step
  int k_init = 2;     // trace: initial batch
  int k_max = 4;      // trace: expansion cap
  double tau_high = 0.75;
  double temperature = 0.0;
  std::string tag = "greedy";
};

inline void validate_condition(const ConditionConfig& cfg) {
  switch (cfg.kind) {
    case ConditionKind::greedy:
      if (cfg.temperature != 0.0) {
        throw std::invalid_argument("greedy requires temperature 0");
      }
      break;
    case ConditionKind::sc:
      if (cfg.k < 1) throw std::invalid_argument("sc requires k >= 1");
      if (cfg.temperature <= 0.0) {
        throw std::invalid_argument("sc requires temperature > 0");
      }
      break;
    case ConditionKind::trace:
      if (cfg.k_init < 1 || cfg.k_init > cfg.k_max) {
        throw std::invalid_argument("trace requires 1 <= k_init <= k_max");
      }
      if (cfg.tau_high < 0.0 || cfg.tau_high > 1.0) {
        throw std::invalid_argument("trace requires tau_high in [0,1]");
      }
      if (cfg.temperature <= 0.0) {
        throw std::invalid_argument("trace requires temperature > 0");
      }
      break;
  }
}

inline ConditionConfig make_greedy() { return ConditionConfig{}; }

inline ConditionConfig make_sc(int k, double temperature = 0.7) {
  ConditionConfig cfg;
  cfg.kind = ConditionKind::sc;
  cfg.k = k;
  cfg.temperature = temperature;
  cfg.tag = "sc" + std::to_string(k);
  validate_condition(cfg);
  return cfg;
}

inline ConditionConfig make_trace(int k_max, double tau_high = 0.75,
                                  int k_init = 2, double temperature = 0.7) {
  ConditionConfig cfg;
  cfg.kind = ConditionKind::trace;
  cfg.k_init = k_init;
  cfg.k_max = k_max;
  cfg.tau_high = tau_high;
  cfg.temperature = temperature;
  cfg.tag = "trace" + std::to_string(k_max);
  validate_condition(cfg);
  return cfg;
}

namespace detail {

inline std::string format_tau(double tau) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", tau);
  return buf;
}

inline int parse_positive_int(const std::string& digits,
                              const std::string& context) {
  if (digits.empty() || digits.size() > 6) {
    throw std::invalid_argument("unknown condition: " + context);
  }
  int value = 0;
  for (char c : digits) {
    if (c < '0' || c > '9') {
      throw std::invalid_argument("unknown condition: " + context);
    }
    value = value * 10 + (c - '0');
  }
  return value;
}

}  // namespace detail

// "greedy", "sc<k>" or "trace<k>"; a tau_high override retags trace
// conditions as "trace<k>-tau<t>" so ablation groups stay distinct rows.
inline ConditionConfig parse_condition(const std::string& name,
                                       double tau_high_override = -1.0) {
  ConditionConfig cfg;
  if (name == "greedy") {
    cfg = make_greedy();
  } else if (name.starts_with("sc")) {
    cfg = make_sc(detail::parse_positive_int(name.substr(2), name));
  } else if (name.starts_with("trace")) {
    cfg = make_trace(detail::parse_positive_int(name.substr(5), name));
  } else {
    throw std::invalid_argument("unknown condition: " + name);
  }
  if (tau_high_override >= 0.0 && cfg.kind == ConditionKind::trace) {
    cfg.tau_high = tau_high_override;
    cfg.tag += "-tau" + detail::format_tau(tau_high_override);
    validate_condition(cfg);
  }
  return cfg;
}

struct SampleRecord {
  std::string raw;
  CanonicalKey key;
};

struct AgreementResult {
  CanonicalKey plurality_key;
  std::string plurality_raw;  // first raw sample in the plurality class
  double alpha = 0.0;
  std::map<CanonicalKey, int> counts;
};

// Plurality vote over canonical keys. Ties break to the key whose first
// occurrence in sample order is earliest; alpha = plurality count / total.
inline AgreementResult compute_agreement(
    const std::vector<SampleRecord>& samples) {
  if (samples.empty()) {
    throw std::logic_error("compute_agreement requires at least one sample");
  }
  AgreementResult result;
  std::map<CanonicalKey, std::size_t> first_seen;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    result.counts[samples[i].key] += 1;
    first_seen.emplace(samples[i].key, i);
  }
  int best_count = 0;
  std::size_t best_first = samples.size();
  for (const auto& [key, count] : result.counts) {
    std::size_t first = first_seen[key];
    if (count > best_count || (count == best_count && first < best_first)) {
      best_count = count;
      best_first = first;
      result.plurality_key = key;
    }
  }
  result.plurality_raw = samples[best_first].raw;
  result.alpha =
      static_cast<double>(best_count) / static_cast<double>(samples.size());
  return result;
}

// Maps a raw completion to its equivalence key. The draw index lets
// benchmarks issue unique sentinel keys for unusable completions so they
// never vote together.
using KeyFn = std::function<std::string(const std::string& raw, int draw_index)>;

struct StepOutcome {
  std::string committed_action;  // verbatim raw representative
  CanonicalKey committed_key;
  int calls_used = 0;
  double final_alpha = 0.0;
  std::vector<SampleRecord> sample_log;
  std::vector<double> alpha_trace;  // alpha after each batch size reached
};

inline StepOutcome step_greedy(Policy& policy, const std::string& prompt,
                               const KeyFn& key_fn,
                               const SamplingParams& params) {
  SamplingParams p = params;
  p.temperature = 0.0;
  std::string raw = policy.complete(prompt, p);
  StepOutcome out;
  out.committed_action = raw;
  out.committed_key = key_fn(raw, 0);
  out.calls_used = 1;
  out.final_alpha = 1.0;  // by convention; greedy records no real agreement
  out.sample_log.push_back({raw, out.committed_key});
  out.alpha_trace.push_back(1.0);
  return out;
}

inline StepOutcome step_sc(Policy& policy, const std::string& prompt,
                           const KeyFn& key_fn, int k,
                           const SamplingParams& params) {
  if (k < 1) throw std::invalid_argument("sc step requires k >= 1");
  StepOutcome out;
  for (int i = 0; i < k; ++i) {
    std::string raw = policy.complete(prompt, params);
    out.sample_log.push_back({raw, key_fn(raw, i)});
  }
  AgreementResult agreement = compute_agreement(out.sample_log);
  out.committed_action = agreement.plurality_raw;
  out.committed_key = agreement.plurality_key;
  out.calls_used = k;
  out.final_alpha = agreement.alpha;
  out.alpha_trace.push_back(agreement.alpha);
  return out;
}

// Adaptive step: draw k_init candidates, commit as soon as agreement reaches
// tau_high, otherwise grow the batch one draw at a time up to k_max and
// commit the plurality. Agreement is recomputed over the full batch after
// every expansion.
inline StepOutcome step_trace(Policy& policy, const std::string& prompt,
                              const KeyFn& key_fn, int k_init, int k_max,
                              double tau_high, const SamplingParams& params) {
  if (k_init < 1 || k_init > k_max) {
    throw std::invalid_argument("trace step requires 1 <= k_init <= k_max");
  }
  StepOutcome out;
  auto draw = [&] {
    int index = static_cast<int>(out.sample_log.size());
    std::string raw = policy.complete(prompt, params);
    out.sample_log.push_back({raw, key_fn(raw, index)});
  };
  for (int i = 0; i < k_init; ++i) draw();
  AgreementResult agreement = compute_agreement(out.sample_log);
  out.alpha_trace.push_back(agreement.alpha);
  while (agreement.alpha < tau_high &&
         static_cast<int>(out.sample_log.size()) < k_max) {
    draw();
    agreement = compute_agreement(out.sample_log);
    out.alpha_trace.push_back(agreement.alpha);
  }
  out.committed_action = agreement.plurality_raw;
  out.committed_key = agreement.plurality_key;
  out.calls_used = static_cast<int>(out.sample_log.size());
  out.final_alpha = agreement.alpha;
  return out;
}

inline StepOutcome run_condition_step(Policy& policy, const std::string& prompt,
                                      const KeyFn& key_fn,
                                      const ConditionConfig& cfg,
                                      const SamplingParams& base_params) {
  SamplingParams params = base_params;
  params.temperature = cfg.temperature;
  switch (cfg.kind) {
    case ConditionKind::greedy:
      return step_greedy(policy, prompt, key_fn, params);
    case ConditionKind::sc:
      return step_sc(policy, prompt, key_fn, cfg.k, params);
    case ConditionKind::trace:
      return step_trace(policy, prompt, key_fn, cfg.k_init, cfg.k_max,
                        cfg.tau_high, params);
  }
  throw std::logic_error("unreachable condition kind");
}

struct StepExecution {
  std::string observation;
  bool terminal = false;
  bool success = false;
};

// One task instance the episode loop can drive: builds prompts from the
// running context, keys samples, executes committed actions. Single-shot
// benchmarks report terminal after the first execute.
class TaskSession {
 public:
  virtual ~TaskSession() = default;
  virtual std::string task_id() const = 0;
  virtual std::string goal() const = 0;
  virtual std::string start() = 0;  // reset; returns the initial observation
  virtual std::string prompt(const StepContext& ctx) const = 0;
  virtual std::string sample_key(const std::string& raw,
                                 int draw_index) const = 0;
  virtual StepExecution execute(const std::string& action) = 0;
};

struct EpisodeRecord {
  std::string task_id;
  std::string condition;
  std::int64_t seed = 0;
  bool success = false;
  bool infra_failed = false;
  int total_calls = 0;
  std::vector<StepOutcome> steps;
  std::int64_t wall_ms = 0;
};

// Drives one episode: per-step condition controller, action execution,
// context threading, step limit. Backend failures mark the record
// infra_failed and end the episode early.
inline EpisodeRecord run_episode(TaskSession& session, Policy& policy,
                                 const ConditionConfig& cfg,
                                 const SamplingParams& base_params,
                                 int step_limit) {
  validate_condition(cfg);
  if (step_limit < 1) throw std::invalid_argument("step_limit must be >= 1");

  EpisodeRecord record;
  record.task_id = session.task_id();
  record.condition = cfg.tag;
  record.seed = static_cast<std::int64_t>(base_params.seed);

  auto started = std::chrono::steady_clock::now();
  KeyFn key_fn = [&session](const std::string& raw, int draw_index) {
    return session.sample_key(raw, draw_index);
  };

  StepContext ctx;
  ctx.goal = session.goal();
  ctx.observations.push_back(session.start());

  try {
    while (ctx.step_index < step_limit) {
      std::string prompt = session.prompt(ctx);
      StepOutcome outcome =
          run_condition_step(policy, prompt, key_fn, cfg, base_params);
      record.steps.push_back(outcome);
      record.total_calls += outcome.calls_used;

      StepExecution exec = session.execute(outcome.committed_action);
      ctx.actions.push_back(outcome.committed_action);
      ctx.observations.push_back(exec.observation);
      ctx.step_index += 1;
      if (exec.terminal) {
        record.success = exec.success;
        break;
      }
    }
  } catch (const InfraError&) {
    record.infra_failed = true;
    record.success = false;
  }

  record.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - started)
                       .count();
  return record;
}

}  // namespace trace
