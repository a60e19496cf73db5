#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "trace/bench.hpp"
#include "trace/controller.hpp"
#include "trace/minihouse.hpp"
#include "trace/policy.hpp"

namespace trace {

struct PerStepRow {
  int step_index = 0;
  int calls_used = 0;
  double final_alpha = 0.0;
  std::string committed_action;
};

// One persisted episode; the unit of resume and of bootstrap resampling.
// (benchmark, task_id, condition, seed, tag) is the unique key.
struct RunRow {
  std::string benchmark;
  std::string task_id;
  std::string condition;
  std::int64_t seed = 0;
  std::string tag;
  bool success = false;
  bool infra_failed = false;
  int total_calls = 0;
  int num_steps = 0;
  std::vector<PerStepRow> per_step;
  std::int64_t wall_ms = 0;

  std::string key() const {
    return benchmark + '\x1f' + task_id + '\x1f' + condition + '\x1f' +
           std::to_string(seed) + '\x1f' + tag;
  }
};

inline void to_json(nlohmann::json& j, const PerStepRow& s) {
  j = nlohmann::json{{"step_index", s.step_index},
                     {"calls_used", s.calls_used},
                     {"final_alpha", s.final_alpha},
                     {"committed_action", s.committed_action}};
}

inline void from_json(const nlohmann::json& j, PerStepRow& s) {
  j.at("step_index").get_to(s.step_index);
  j.at("calls_used").get_to(s.calls_used);
  j.at("final_alpha").get_to(s.final_alpha);
  j.at("committed_action").get_to(s.committed_action);
}

inline void to_json(nlohmann::json& j, const RunRow& r) {
  j = nlohmann::json{{"benchmark", r.benchmark},
                     {"task_id", r.task_id},
                     {"condition", r.condition},
                     {"seed", r.seed},
                     {"tag", r.tag},
                     {"success", r.success},
                     {"infra_failed", r.infra_failed},
                     {"total_calls", r.total_calls},
                     {"num_steps", r.num_steps},
                     {"per_step", r.per_step},
                     {"wall_ms", r.wall_ms}};
}

inline void from_json(const nlohmann::json& j, RunRow& r) {
  j.at("benchmark").get_to(r.benchmark);
  j.at("task_id").get_to(r.task_id);
  j.at("condition").get_to(r.condition);
  j.at("seed").get_to(r.seed);
  j.at("tag").get_to(r.tag);
  j.at("success").get_to(r.success);
  j.at("infra_failed").get_to(r.infra_failed);
  j.at("total_calls").get_to(r.total_calls);
  j.at("num_steps").get_to(r.num_steps);
  j.at("per_step").get_to(r.per_step);
  j.at("wall_ms").get_to(r.wall_ms);
}

inline RunRow make_run_row(const EpisodeRecord& record,
                           const std::string& benchmark,
                           const std::string& tag) {
  RunRow row;
  row.benchmark = benchmark;
  row.task_id = record.task_id;
  row.condition = record.condition;
  row.seed = record.seed;
  row.tag = tag;
  row.success = record.success;
  row.infra_failed = record.infra_failed;
  row.total_calls = record.total_calls;
  row.num_steps = static_cast<int>(record.steps.size());
  for (std::size_t i = 0; i < record.steps.size(); ++i) {
    const StepOutcome& step = record.steps[i];
    row.per_step.push_back({static_cast<int>(i), step.calls_used,
                            step.final_alpha, step.committed_action});
  }
  row.wall_ms = record.wall_ms;
  return row;
}

struct RowsFile {
  std::vector<RunRow> rows;
  std::uintmax_t clean_prefix_bytes = 0;
  bool partial_tail = false;
};

// Parses a line-delimited rows file. Every '\n'-terminated line must parse
// and carry a unique key; an unterminated tail is a crash artifact and is
// dropped (the writer emits each row plus its newline in one write, so a
// partial write can only be a strict prefix of a line).
inline RowsFile load_rows_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open rows file: " + path);
  std::string content{std::istreambuf_iterator<char>(in),
                      std::istreambuf_iterator<char>()};

  RowsFile out;
  std::unordered_map<std::string, int> key_lines;
  std::size_t pos = 0;
  int line_no = 1;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) {
      out.partial_tail = true;
      break;
    }
    std::string line = content.substr(pos, nl - pos);
    nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": malformed row");
    }
    RunRow row;
    try {
      row = doc.get<RunRow>();
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": malformed row: " + e.what());
    }
    auto [it, inserted] = key_lines.emplace(row.key(), line_no);
    if (!inserted) {
      throw std::runtime_error(path + ": duplicate row key at lines " +
                               std::to_string(it->second) + " and " +
                               std::to_string(line_no));
    }
    out.rows.push_back(std::move(row));
    pos = nl + 1;
    out.clean_prefix_bytes = pos;
    ++line_no;
  }
  return out;
}

inline std::vector<RunRow> load_rows(const std::string& path) {
  RowsFile file = load_rows_file(path);
  if (file.partial_tail) {
    std::cerr << "warning: " << path
              << ": ignoring unterminated trailing line (crash artifact)\n";
  }
  return file.rows;
}

using PolicyFactory =
    std::function<std::unique_ptr<Policy>(std::uint64_t llm_seed)>;

struct RunSummary {
  int completed = 0;
  int skipped = 0;
  int infra_failed = 0;
  std::string rows_path;
};

struct RunConfig {
  std::string benchmark;  // "gsm8k" or "minihouse"
  PolicyFactory policy_factory;
  int n_tasks = 1;
  std::uint64_t task_seed = 0;
  std::vector<std::uint64_t> llm_seeds;
  std::vector<ConditionConfig> conditions;
  std::string tag = "main";
  std::string results_dir = "results";
  int step_limit = 0;      // 0: benchmark default (minihouse 15, gsm8k 1)
  int max_new_tokens = 0;  // 0: benchmark default (minihouse 32, gsm8k 256)
  std::string gsm8k_path;  // required for gsm8k
  int workers = 1;
  // Invoked after each row is flushed; exceptions propagate and abort the
  // run, which the tests use to simulate a mid-run kill.
  std::function<void(const RunRow&)> on_row;
};

inline std::string rows_path(const RunConfig& config) {
  return (std::filesystem::path(config.results_dir) /
          (config.benchmark + "_" + config.tag + ".rows"))
      .string();
}

// Enumerates the (condition x task x llm-seed) grid, skips keys already in
// the rows file, runs each remaining episode and appends exactly one row per
// episode, flushed before the next episode starts.
inline RunSummary run_experiment(const RunConfig& config) {
  if (config.benchmark != "gsm8k" && config.benchmark != "minihouse") {
    throw std::invalid_argument("unknown benchmark: " + config.benchmark);
  }
  if (!config.policy_factory) {
    throw std::invalid_argument("run_experiment requires a policy factory");
  }
  if (config.llm_seeds.empty()) {
    throw std::invalid_argument("run_experiment requires at least one seed");
  }
  if (config.conditions.empty()) {
    throw std::invalid_argument("run_experiment requires conditions");
  }
  for (const auto& cfg : config.conditions) validate_condition(cfg);

  const bool is_minihouse = config.benchmark == "minihouse";
  const int step_limit =
      config.step_limit > 0 ? config.step_limit
                            : (is_minihouse ? minihouse::kEpisodeStepLimit : 1);
  SamplingParams base;
  base.max_new_tokens =
      config.max_new_tokens > 0 ? config.max_new_tokens
                                : (is_minihouse ? 32 : 256);
  if (is_minihouse) base.stop = {"\n"};

  std::vector<minihouse::TaskSpec> house_tasks;
  std::vector<GsmTask> gsm_tasks;
  std::vector<std::string> task_ids;
  if (is_minihouse) {
    house_tasks = minihouse::load_tasks(config.n_tasks, config.task_seed);
    for (const auto& t : house_tasks) task_ids.push_back(t.task_id);
  } else {
    gsm_tasks = load_gsm8k(config.gsm8k_path, config.n_tasks, config.task_seed);
    for (const auto& t : gsm_tasks) task_ids.push_back(t.task_id);
  }
  auto make_session = [&](std::size_t index) -> std::unique_ptr<TaskSession> {
    if (is_minihouse) {
      return std::make_unique<MiniHouseSession>(house_tasks[index]);
    }
    return std::make_unique<GsmSession>(gsm_tasks[index]);
  };

  std::filesystem::create_directories(config.results_dir);
  const std::string path = rows_path(config);

  std::unordered_set<std::string> existing;
  if (std::filesystem::exists(path)) {
    RowsFile file = load_rows_file(path);
    if (file.partial_tail) {
      std::cerr << "warning: " << path
                << ": dropping unterminated trailing line before resume\n";
      std::filesystem::resize_file(path, file.clean_prefix_bytes);
    }
    for (const auto& row : file.rows) existing.insert(row.key());
  }

  std::ofstream appender(path, std::ios::app | std::ios::binary);
  if (!appender) {
    throw std::runtime_error("cannot open rows file for append: " + path);
  }

  struct WorkItem {
    const ConditionConfig* condition;
    std::size_t task_index;
    std::uint64_t seed;
  };
  RunSummary summary;
  summary.rows_path = path;
  std::vector<WorkItem> items;
  for (const auto& condition : config.conditions) {
    for (std::size_t t = 0; t < task_ids.size(); ++t) {
      for (std::uint64_t seed : config.llm_seeds) {
        RunRow probe;
        probe.benchmark = config.benchmark;
        probe.task_id = task_ids[t];
        probe.condition = condition.tag;
        probe.seed = static_cast<std::int64_t>(seed);
        probe.tag = config.tag;
        if (existing.contains(probe.key())) {
          summary.skipped += 1;
        } else {
          items.push_back({&condition, t, seed});
        }
      }
    }
  }

  std::mutex write_mutex;
  auto process = [&](const WorkItem& item) {
    std::unique_ptr<Policy> policy = config.policy_factory(item.seed);
    std::unique_ptr<TaskSession> session = make_session(item.task_index);
    SamplingParams params = base;
    params.seed = item.seed;
    EpisodeRecord record =
        run_episode(*session, *policy, *item.condition, params, step_limit);
    RunRow row = make_run_row(record, config.benchmark, config.tag);

    std::lock_guard<std::mutex> lock(write_mutex);
    std::string line = nlohmann::json(row).dump();
    line += '\n';
    appender.write(line.data(), static_cast<std::streamsize>(line.size()));
    appender.flush();
    if (!appender) throw std::runtime_error("write failed: " + path);
    summary.completed += 1;
    if (row.infra_failed) summary.infra_failed += 1;
    if (config.on_row) config.on_row(row);
  };

  if (config.workers <= 1) {
    for (const auto& item : items) process(item);
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
      while (!stop.load()) {
        std::size_t i = next.fetch_add(1);
        if (i >= items.size()) return;
        try {
          process(items[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          stop.store(true);
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    int n = std::min<int>(config.workers, static_cast<int>(items.size()));
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }
  return summary;
}

}  // namespace trace
