#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "trace/canon.hpp"
#include "trace/controller.hpp"
#include "trace/minihouse.hpp"
#include "trace/rng.hpp"

namespace trace {

struct GsmTask {
  std::string task_id;
  std::string question;
  std::string gold_answer;  // numeric-normalised
};

inline void to_json(nlohmann::json& j, const GsmTask& task) {
  j = nlohmann::json{{"task_id", task.task_id},
                     {"question", task.question},
                     {"gold_answer", task.gold_answer}};
}

// Input file: one JSON record per line with string fields "question" and
// "answer", the answer ending in the "#### N" convention. Records are
// shuffled with the given seed and the first n kept; task ids keep the
// original zero-based line index so identity is stable across n.
inline std::vector<GsmTask> load_gsm8k(const std::string& path, int n,
                                       std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("load_gsm8k requires n >= 1");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open gsm8k file: " + path);

  std::vector<GsmTask> all;
  std::string line;
  int line_index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) {
      ++line_index;
      continue;
    }
    nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.contains("question") ||
        !doc.contains("answer")) {
      throw std::runtime_error(path + ":" + std::to_string(line_index + 1) +
                               ": malformed record");
    }
    std::string answer = doc["answer"].get<std::string>();
    auto marker = answer.find("####");
    std::optional<std::string> gold;
    if (marker != std::string::npos) {
      std::size_t i = detail::skip_spaces(answer, marker + 4);
      std::size_t end = detail::numeric_token_end(answer, i);
      if (end > i) gold = normalise_numeric(answer.substr(i, end - i));
    }
    if (!gold) {
      throw std::runtime_error(path + ":" + std::to_string(line_index + 1) +
                               ": no parseable gold answer");
    }
    GsmTask task;
    task.task_id = "gsm8k_" + std::to_string(line_index);
    task.question = doc["question"].get<std::string>();
    task.gold_answer = *gold;
    all.push_back(std::move(task));
    ++line_index;
  }
  if (static_cast<std::size_t>(n) > all.size()) {
    throw std::runtime_error("requested " + std::to_string(n) +
                             " tasks but file has only " +
                             std::to_string(all.size()));
  }
  SplitMix64 rng(seed);
  seeded_shuffle(all, rng);
  all.resize(static_cast<std::size_t>(n));
  return all;
}

inline std::string build_gsm8k_prompt(const GsmTask& task) {
  return "Solve the following grade-school math problem. Reason step by "
         "step, then give the final numeric answer on its own line in the "
         "form \"Answer: N\".\n\nProblem: " +
         task.question + "\n\nSolution:";
}

// Exact match after value-like normalisation; an empty committed answer is
// always wrong.
inline bool judge_gsm8k(const std::string& committed, const std::string& gold) {
  if (committed.empty()) return false;
  return normalise_numeric(committed) == gold;
}

struct MiniHousePromptOptions {
  int max_history_pairs = 5;
  // Roughly a 4096-token context at ~4 chars/token, minus generation room.
  int char_budget = 12000;
};

// Prompt layout: goal, current observation, the enumerated valid actions one
// per line, then at most the last max_history_pairs (action, observation)
// pairs, then the instruction. If the rendered prompt would exceed the
// character budget, the oldest of those pairs are dropped first.
inline std::string build_minihouse_prompt(
    const StepContext& ctx, const std::vector<std::string>& valid_actions,
    const MiniHousePromptOptions& options = {}) {
  auto render = [&](int pairs) {
    std::ostringstream out;
    out << "Goal: " << ctx.goal << "\n\n";
    out << "Current observation: " << ctx.observations.back() << "\n\n";
    out << "Valid actions:\n";
    for (const auto& action : valid_actions) {
      out << "- " << action << "\n";
    }
    if (pairs > 0) {
      out << "\nRecent history (oldest first):\n";
      std::size_t total = ctx.actions.size();
      for (std::size_t i = total - static_cast<std::size_t>(pairs); i < total;
           ++i) {
        out << "> " << ctx.actions[i] << "\n";
        out << ctx.observations[i + 1] << "\n";
      }
    }
    out << "\nChoose exactly one action from the valid actions list and "
           "output it verbatim, with nothing else.\nAction:";
    return out.str();
  };

  int pairs = std::min(options.max_history_pairs,
                       static_cast<int>(ctx.actions.size()));
  std::string prompt = render(pairs);
  while (pairs > 0 &&
         static_cast<int>(prompt.size()) > options.char_budget) {
    --pairs;
    prompt = render(pairs);
  }
  return prompt;
}

// Single-shot session: one step, judged on the committed answer. Samples
// that yield no extractable number get unique sentinel keys so they can
// never form a plurality against a real answer.
class GsmSession : public TaskSession {
 public:
  explicit GsmSession(GsmTask task) : task_(std::move(task)) {}

  std::string task_id() const override { return task_.task_id; }
  std::string goal() const override { return task_.question; }
  std::string start() override { return task_.question; }

  std::string prompt(const StepContext&) const override {
    return build_gsm8k_prompt(task_);
  }

  std::string sample_key(const std::string& raw,
                         int draw_index) const override {
    auto answer = extract_numeric_answer(raw);
    if (answer) return *answer;
    return "<unparsed#" + std::to_string(draw_index) + ">";
  }

  StepExecution execute(const std::string& action) override {
    auto answer = extract_numeric_answer(action);
    bool success = answer && judge_gsm8k(*answer, task_.gold_answer);
    return {"", true, success};
  }

 private:
  GsmTask task_;
};

class MiniHouseSession : public TaskSession {
 public:
  explicit MiniHouseSession(minihouse::TaskSpec task,
                            MiniHousePromptOptions options = {})
      : env_(std::move(task)), options_(options) {}

  std::string task_id() const override { return env_.task().task_id; }
  std::string goal() const override { return env_.task().goal_text; }

  std::string start() override {
    std::string observation = env_.reset();
    actions_ = env_.valid_actions();
    return observation;
  }

  std::string prompt(const StepContext& ctx) const override {
    return build_minihouse_prompt(ctx, actions_, options_);
  }

  std::string sample_key(const std::string& raw, int) const override {
    return canonicalise_action(raw);
  }

  StepExecution execute(const std::string& action) override {
    auto result = env_.step(action);
    actions_ = env_.valid_actions();
    return {result.observation, result.done, result.success};
  }

  const minihouse::HouseEnv& env() const { return env_; }

 private:
  minihouse::HouseEnv env_;
  MiniHousePromptOptions options_;
  std::vector<std::string> actions_;
};

}  // namespace trace
