// Command-line front end: run experiment grids, resume them, sweep the
// agreement threshold, check environment solvability, and emit the table and
// figure data files from persisted rows.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "trace/bench.hpp"
#include "trace/controller.hpp"
#include "trace/minihouse.hpp"
#include "trace/policy_factory.hpp"
#include "trace/runner.hpp"
#include "trace/stats.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::string item;
  for (char c : csv) {
    if (c == ',') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else {
      item += c;
    }
  }
  if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_csv(csv)) out.push_back(std::stoull(item));
  if (out.empty()) throw std::invalid_argument("empty seed list");
  return out;
}

std::string default_results_dir() {
  const char* env = std::getenv("TRACE_RESULTS_DIR");
  return env != nullptr ? env : "results";
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

struct RunFlags {
  std::string benchmark = "minihouse";
  std::string model;
  std::string model_name = "default";
  int n_tasks = 0;  // 0: benchmark default
  std::uint64_t task_seed = 0;
  std::string seeds;  // empty: benchmark default
  std::string conditions = "greedy,sc4,sc8,trace4,trace8";
  double tau_high = -1.0;
  std::string tag = "main";
  std::string results_dir = default_results_dir();
  std::string gsm8k_file = "data/gsm8k_fixture.jsonl";
  int step_limit = 0;
  int max_new_tokens = 0;
  int workers = 1;
};

void add_common_run_flags(CLI::App& cmd, RunFlags& flags) {
  cmd.add_option("--benchmark", flags.benchmark, "gsm8k or minihouse")
      ->check(CLI::IsMember({"gsm8k", "minihouse"}));
  cmd.add_option("--model", flags.model,
                 "http(s) endpoint of an OpenAI-compatible completions "
                 "server, or scripted:<spec.json>")
      ->required();
  cmd.add_option("--model-name", flags.model_name,
                 "model field sent to remote backends");
  cmd.add_option("--n_tasks", flags.n_tasks,
                 "number of tasks (default: 30 minihouse, 50 gsm8k)");
  cmd.add_option("--task-seed", flags.task_seed, "task selection seed");
  cmd.add_option("--seeds", flags.seeds,
                 "comma list of sampling seeds (default: 0,1,2 minihouse, "
                 "0 gsm8k)");
  cmd.add_option("--tag", flags.tag, "experiment tag (rows file suffix)");
  cmd.add_option("--results-dir", flags.results_dir,
                 "rows directory (env TRACE_RESULTS_DIR)");
  cmd.add_option("--gsm8k-file", flags.gsm8k_file, "gsm8k jsonl input");
  cmd.add_option("--step-limit", flags.step_limit, "episode step limit");
  cmd.add_option("--max-new-tokens", flags.max_new_tokens,
                 "completion length cap");
  cmd.add_option("--workers", flags.workers, "parallel episodes");
}

trace::RunConfig to_run_config(
    const RunFlags& flags,
    const std::vector<trace::ConditionConfig>& conditions) {
  trace::RunConfig config;
  config.benchmark = flags.benchmark;
  config.policy_factory =
      trace::make_policy_factory(flags.model, flags.model_name);
  config.n_tasks = flags.n_tasks > 0
                       ? flags.n_tasks
                       : (flags.benchmark == "gsm8k" ? 50 : 30);
  config.task_seed = flags.task_seed;
  config.llm_seeds = parse_seed_list(
      !flags.seeds.empty() ? flags.seeds
                           : (flags.benchmark == "gsm8k" ? "0" : "0,1,2"));
  config.conditions = conditions;
  config.tag = flags.tag;
  config.results_dir = flags.results_dir;
  config.step_limit = flags.step_limit;
  config.max_new_tokens = flags.max_new_tokens;
  config.gsm8k_path = flags.gsm8k_file;
  config.workers = flags.workers;
  int done = 0;
  config.on_row = [done](const trace::RunRow& row) mutable {
    std::cerr << "row " << ++done << ": " << row.task_id << " "
              << row.condition << " seed=" << row.seed
              << (row.infra_failed ? " [infra]" : "") << "\n";
  };
  return config;
}

int report_summary(const trace::RunSummary& summary) {
  std::cerr << summary.rows_path << ": " << summary.completed << " new rows, "
            << summary.skipped << " skipped, " << summary.infra_failed
            << " infra-failed\n";
  return 0;
}

int cmd_run(const RunFlags& flags) {
  std::vector<trace::ConditionConfig> conditions;
  for (const auto& name : split_csv(flags.conditions)) {
    conditions.push_back(trace::parse_condition(name, flags.tau_high));
  }
  return report_summary(
      trace::run_experiment(to_run_config(flags, conditions)));
}

int cmd_ablate(const RunFlags& flags, const std::string& thresholds) {
  std::vector<trace::ConditionConfig> conditions;
  for (const auto& item : split_csv(thresholds)) {
    conditions.push_back(trace::parse_condition("trace4", std::stod(item)));
  }
  conditions.push_back(trace::make_sc(4));
  return report_summary(
      trace::run_experiment(to_run_config(flags, conditions)));
}

int cmd_figures(const std::string& tag, const std::string& results_dir,
                const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::vector<trace::RunRow> rows;
  for (const std::string benchmark : {"gsm8k", "minihouse"}) {
    fs::path path = fs::path(results_dir) / (benchmark + "_" + tag + ".rows");
    if (!fs::exists(path)) {
      std::cerr << "note: no rows file " << path.string() << "\n";
      continue;
    }
    auto loaded = trace::load_rows(path.string());
    rows.insert(rows.end(), loaded.begin(), loaded.end());
  }
  if (rows.empty()) {
    throw std::runtime_error("no rows found for tag '" + tag + "' in " +
                             results_dir);
  }
  fs::create_directories(out_dir);
  auto out = [&](const std::string& name) {
    return (fs::path(out_dir) / (tag + "_" + name)).string();
  };

  write_text(out("table.txt"), trace::emit_table(rows));
  std::cerr << "wrote " << out("table.txt") << "\n";
  write_text(out("frontier.csv"), trace::emit_frontier_csv(rows));
  std::cerr << "wrote " << out("frontier.csv") << "\n";
  write_text(out("calls_histogram.csv"),
             trace::emit_calls_histogram_csv(rows));
  std::cerr << "wrote " << out("calls_histogram.csv") << "\n";

  bool any_trace = false;
  bool any_ablation = false;
  for (const auto& row : rows) {
    any_trace |= row.condition.starts_with("trace");
    any_ablation |= row.condition.find("-tau") != std::string::npos;
  }
  if (any_trace) {
    write_text(out("agreement_bins.csv"),
               trace::emit_agreement_bins_csv(rows));
    std::cerr << "wrote " << out("agreement_bins.csv") << "\n";
  } else {
    std::cerr << "warning: no TrACE rows, skipping agreement bins\n";
  }
  if (any_ablation) {
    std::string tables;
    for (auto& [benchmark, by_condition] :
         trace::group_rows(rows)) {
      std::vector<trace::RunRow> flat;
      for (auto& [_, group] : by_condition) {
        flat.insert(flat.end(), group.begin(), group.end());
      }
      bool has_tau = false;
      for (const auto& row : flat) {
        has_tau |= row.condition.find("-tau") != std::string::npos;
      }
      if (!has_tau) continue;
      tables += trace::benchmark_display(benchmark) + "\n" +
                trace::render_ablation_table(trace::ablation_summary(flat)) +
                "\n";
    }
    write_text(out("ablation.txt"), tables);
    std::cerr << "wrote " << out("ablation.txt") << "\n";
  } else {
    std::cerr << "warning: no threshold-sweep rows, skipping ablation table\n";
  }
  return 0;
}

int cmd_tasks(const std::string& benchmark, int n, std::uint64_t seed,
              const std::string& gsm8k_file, const std::string& out_path) {
  std::string payload;
  if (benchmark == "minihouse") {
    for (const auto& task : trace::minihouse::load_tasks(n, seed)) {
      payload += nlohmann::json(task).dump() + "\n";
    }
  } else {
    for (const auto& task : trace::load_gsm8k(gsm8k_file, n, seed)) {
      payload += nlohmann::json(task).dump() + "\n";
    }
  }
  if (out_path.empty()) {
    std::cout << payload;
  } else {
    write_text(out_path, payload);
    std::cerr << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_oracle_check(int n, std::uint64_t seed) {
  auto tasks = trace::minihouse::load_tasks(n, seed);
  int failures = 0;
  for (const auto& task : tasks) {
    try {
      auto plan = trace::minihouse::oracle_solve(task);
      trace::minihouse::HouseEnv env(task);
      env.reset();
      for (const auto& action : plan) env.step(action);
      bool ok = env.state().success && plan.size() <= 15;
      if (!ok) ++failures;
      std::cout << task.task_id << ": " << plan.size() << " actions"
                << (ok ? "" : "  [FAIL]") << "\n";
    } catch (const std::exception& e) {
      ++failures;
      std::cout << task.task_id << ": unsolvable (" << e.what() << ")\n";
    }
  }
  std::cout << (static_cast<int>(tasks.size()) - failures) << "/"
            << tasks.size() << " solvable within 15 steps\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Adaptive-compute control for LLM agents: greedy, self-consistency and "
      "agreement-based adaptive sampling over scripted or remote backends"};
  app.require_subcommand(1);

  RunFlags run_flags;
  CLI::App* run =
      app.add_subcommand("run", "run an experiment grid (resumable)");
  add_common_run_flags(*run, run_flags);
  run->add_option("--conditions", run_flags.conditions,
                  "comma list from greedy,sc4,sc8,trace4,trace8");
  run->add_option("--tau-high", run_flags.tau_high,
                  "override the commit threshold for trace conditions");

  RunFlags ablate_flags;
  ablate_flags.tag = "ablate";
  std::string thresholds = "0.50,0.75,1.00";
  CLI::App* ablate = app.add_subcommand(
      "ablate",
      "sweep the commit threshold for TrACE-4 plus an SC-4 reference");
  add_common_run_flags(*ablate, ablate_flags);
  ablate->add_option("--thresholds", thresholds,
                     "comma list of tau_high values");

  std::string fig_tag = "main";
  std::string fig_results = default_results_dir();
  std::string fig_out;
  CLI::App* figures = app.add_subcommand(
      "figures", "emit the summary table and figure data for a tag");
  figures->add_option("--tag", fig_tag, "experiment tag");
  figures->add_option("--results-dir", fig_results, "rows directory");
  figures->add_option("--out-dir", fig_out,
                      "output directory (default: results dir)");

  std::string tasks_benchmark = "minihouse";
  int tasks_n = 30;
  std::uint64_t tasks_seed = 0;
  std::string tasks_gsm8k = "data/gsm8k_fixture.jsonl";
  std::string tasks_out;
  CLI::App* tasks = app.add_subcommand("tasks", "export a task list as jsonl");
  tasks->add_option("--benchmark", tasks_benchmark, "gsm8k or minihouse")
      ->check(CLI::IsMember({"gsm8k", "minihouse"}));
  tasks->add_option("--n", tasks_n, "number of tasks");
  tasks->add_option("--seed", tasks_seed, "task selection seed");
  tasks->add_option("--gsm8k-file", tasks_gsm8k, "gsm8k jsonl input");
  tasks->add_option("--out", tasks_out, "output file (default: stdout)");

  int oracle_n = 30;
  std::uint64_t oracle_seed = 0;
  CLI::App* oracle = app.add_subcommand(
      "oracle-check", "verify every generated task is solvable in 15 steps");
  oracle->add_option("--n", oracle_n, "number of tasks");
  oracle->add_option("--seed", oracle_seed, "task selection seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_flags);
    if (ablate->parsed()) return cmd_ablate(ablate_flags, thresholds);
    if (figures->parsed()) {
      return cmd_figures(fig_tag, fig_results,
                         fig_out.empty() ? fig_results : fig_out);
    }
    if (tasks->parsed()) {
      return cmd_tasks(tasks_benchmark, tasks_n, tasks_seed, tasks_gsm8k,
                       tasks_out);
    }
    if (oracle->parsed()) return cmd_oracle_check(oracle_n, oracle_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
