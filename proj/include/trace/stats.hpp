#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trace/rng.hpp"
#include "trace/runner.hpp"

namespace trace {

class NoDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Default bootstrap parameters used by the emitters.
inline constexpr int kBootstrapResamples = 2000;
inline constexpr double kBootstrapLevel = 0.95;
inline constexpr std::uint64_t kStatsSeed = 1;

struct BootstrapCI {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int B = 0;
  double level = 0.0;
  std::uint64_t seed = 0;
};

// Percentile bootstrap over the sample mean. Values are sorted before
// resampling so the result is invariant to input order; resample index b*n+i
// is SplitMix64(seed) draw number b*n+i taken modulo n, and quantiles use the
// nearest-rank ceil(q*B)-1. Endpoints are clamped to bracket the point
// estimate, which percentile bootstrap does not strictly guarantee at tiny B.
inline BootstrapCI bootstrap_ci(std::vector<double> values, int B,
                                double level, std::uint64_t seed) {
  if (values.empty()) throw NoDataError("bootstrap_ci: empty sample");
  if (B < 1) throw std::invalid_argument("bootstrap_ci: B must be >= 1");
  if (level <= 0.0 || level >= 1.0) {
    throw std::invalid_argument("bootstrap_ci: level must be in (0,1)");
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();

  double total = 0.0;
  for (double v : values) total += v;
  const double point = total / static_cast<double>(n);

  SplitMix64 rng(seed);
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += values[rng.next_below(n)];
    }
    means.push_back(sum / static_cast<double>(n));
  }
  std::sort(means.begin(), means.end());

  auto quantile = [&](double q) {
    int idx = static_cast<int>(std::ceil(q * static_cast<double>(B))) - 1;
    idx = std::clamp(idx, 0, B - 1);
    return means[static_cast<std::size_t>(idx)];
  };
  const double tail = (1.0 - level) / 2.0;

  BootstrapCI ci;
  ci.point = point;
  ci.lo = std::min(quantile(tail), point);
  ci.hi = std::max(quantile(1.0 - tail), point);
  ci.B = B;
  ci.level = level;
  ci.seed = seed;
  return ci;
}

namespace detail_stats {

inline std::vector<const RunRow*> usable_rows(const std::vector<RunRow>& rows) {
  std::vector<const RunRow*> out;
  for (const auto& row : rows) {
    if (!row.infra_failed) out.push_back(&row);
  }
  return out;
}

}  // namespace detail_stats

// Mean success over task-seed units, excluding infra-failed rows.
inline double accuracy(const std::vector<RunRow>& rows) {
  auto usable = detail_stats::usable_rows(rows);
  if (usable.empty()) throw NoDataError("accuracy: no usable rows");
  std::int64_t successes = 0;
  for (const auto* row : usable) successes += row->success ? 1 : 0;
  return static_cast<double>(successes) / static_cast<double>(usable.size());
}

inline double mean_calls(const std::vector<RunRow>& rows) {
  auto usable = detail_stats::usable_rows(rows);
  if (usable.empty()) throw NoDataError("mean_calls: no usable rows");
  std::int64_t calls = 0;
  for (const auto* row : usable) calls += row->total_calls;
  return static_cast<double>(calls) / static_cast<double>(usable.size());
}

inline std::vector<double> success_values(const std::vector<RunRow>& rows) {
  std::vector<double> values;
  for (const auto& row : rows) {
    if (!row.infra_failed) values.push_back(row.success ? 1.0 : 0.0);
  }
  return values;
}

struct AgreementBin {
  double lo = 0.0;
  double hi = 0.0;
  int n_steps = 0;
  double success_fraction = std::numeric_limits<double>::quiet_NaN();
  BootstrapCI ci;
};

inline const std::vector<double>& default_bin_edges() {
  static const std::vector<double> edges{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  return edges;
}

// Per-step agreement vs episode success, binned over [0,1]. Bins are
// half-open [lo, hi) except the last, which is closed. Only TrACE conditions
// record meaningful agreement, so anything else is rejected outright.
inline std::vector<AgreementBin> agreement_success_bins(
    const std::vector<RunRow>& rows,
    const std::vector<double>& edges = default_bin_edges(),
    int B = kBootstrapResamples, double level = kBootstrapLevel,
    std::uint64_t seed = kStatsSeed) {
  if (edges.size() < 2 || edges.front() != 0.0 || edges.back() != 1.0 ||
      !std::is_sorted(edges.begin(), edges.end())) {
    throw std::invalid_argument(
        "agreement bins require sorted edges spanning [0, 1]");
  }
  for (const auto& row : rows) {
    if (!row.condition.starts_with("trace")) {
      throw std::invalid_argument(
          "agreement_success_bins: non-TrACE condition: " + row.condition);
    }
  }
  auto usable = detail_stats::usable_rows(rows);
  if (usable.empty()) {
    throw NoDataError("agreement_success_bins: no usable TrACE rows");
  }

  const std::size_t n_bins = edges.size() - 1;
  std::vector<std::vector<double>> labels(n_bins);
  for (const auto* row : usable) {
    for (const auto& step : row->per_step) {
      std::size_t bin = n_bins - 1;
      for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        if (step.final_alpha >= edges[i] && step.final_alpha < edges[i + 1]) {
          bin = i;
          break;
        }
      }
      labels[bin].push_back(row->success ? 1.0 : 0.0);
    }
  }

  std::vector<AgreementBin> bins;
  for (std::size_t i = 0; i < n_bins; ++i) {
    AgreementBin bin;
    bin.lo = edges[i];
    bin.hi = edges[i + 1];
    bin.n_steps = static_cast<int>(labels[i].size());
    if (bin.n_steps > 0) {
      double sum = 0.0;
      for (double v : labels[i]) sum += v;
      bin.success_fraction = sum / static_cast<double>(bin.n_steps);
      bin.ci = bootstrap_ci(labels[i], B, level, seed);
    }
    bins.push_back(bin);
  }
  return bins;
}

struct CallsHistogram {
  bool per_step = false;
  // condition -> calls value -> count
  std::map<std::string, std::map<int, int>> counts;
};

inline CallsHistogram calls_histogram(const std::vector<RunRow>& rows,
                                      bool per_step) {
  CallsHistogram hist;
  hist.per_step = per_step;
  for (const auto& row : rows) {
    if (row.infra_failed) continue;
    if (per_step) {
      for (const auto& step : row.per_step) {
        hist.counts[row.condition][step.calls_used] += 1;
      }
    } else {
      hist.counts[row.condition][row.total_calls] += 1;
    }
  }
  return hist;
}

inline std::string benchmark_display(const std::string& benchmark) {
  if (benchmark == "gsm8k") return "GSM8K";
  if (benchmark == "minihouse") return "MiniHouse";
  return benchmark;
}

// rows grouped by (benchmark, condition), deterministically ordered.
inline std::map<std::string, std::map<std::string, std::vector<RunRow>>>
group_rows(const std::vector<RunRow>& rows) {
  std::map<std::string, std::map<std::string, std::vector<RunRow>>> grouped;
  for (const auto& row : rows) {
    grouped[row.benchmark][row.condition].push_back(row);
  }
  return grouped;
}

namespace detail_stats {

inline int condition_rank(const std::string& condition) {
  if (condition == "greedy") return 0;
  if (condition == "sc4") return 1;
  if (condition == "sc8") return 2;
  if (condition == "trace4") return 3;
  if (condition == "trace8") return 4;
  return 5;
}

inline bool condition_less(const std::string& a, const std::string& b) {
  int ra = condition_rank(a);
  int rb = condition_rank(b);
  return ra != rb ? ra < rb : a < b;
}

inline std::string condition_display(const std::string& condition) {
  if (condition == "greedy") return "Greedy (k=1)";
  if (condition.starts_with("sc")) {
    return "Self-Consistency (k=" + condition.substr(2) + ")";
  }
  if (condition.starts_with("trace")) {
    auto tau = condition.find("-tau");
    if (tau == std::string::npos) return "TrACE-" + condition.substr(5);
    return "TrACE-" + condition.substr(5, tau - 5) +
           " (tau_high=" + condition.substr(tau + 4) + ")";
  }
  return condition;
}

// condition tag "trace4-tau0.50" -> 0.50
inline std::optional<double> tau_from_condition(const std::string& condition) {
  auto pos = condition.find("-tau");
  if (!condition.starts_with("trace") || pos == std::string::npos) {
    return std::nullopt;
  }
  return std::stod(condition.substr(pos + 4));
}

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

inline std::vector<std::string> ordered_conditions(
    const std::map<std::string, std::vector<RunRow>>& by_condition) {
  std::vector<std::string> names;
  for (const auto& [name, _] : by_condition) names.push_back(name);
  std::sort(names.begin(), names.end(), condition_less);
  return names;
}

}  // namespace detail_stats

// "Benchmark | Method | Acc. | 95% CI | Calls/task" rows, accuracy and CI to
// 3 decimals, calls to 2. Groups with no usable rows are skipped with a
// warning on stderr.
inline std::string emit_table(const std::vector<RunRow>& rows,
                              int B = kBootstrapResamples,
                              double level = kBootstrapLevel,
                              std::uint64_t seed = kStatsSeed) {
  using namespace detail_stats;
  std::string out = "Benchmark | Method | Acc. | 95% CI | Calls/task\n";
  for (const auto& [benchmark, by_condition] : group_rows(rows)) {
    for (const auto& condition : ordered_conditions(by_condition)) {
      const auto& group = by_condition.at(condition);
      auto values = success_values(group);
      if (values.empty()) {
        std::cerr << "warning: no usable rows for " << benchmark << "/"
                  << condition << ", row omitted\n";
        continue;
      }
      BootstrapCI ci = bootstrap_ci(values, B, level, seed);
      out += benchmark_display(benchmark) + " | " +
             condition_display(condition) + " | " + fmt("%.3f", accuracy(group)) +
             " | [" + fmt("%.3f", ci.lo) + ", " + fmt("%.3f", ci.hi) + "] | " +
             fmt("%.2f", mean_calls(group)) + "\n";
    }
  }
  return out;
}

// One record per (benchmark, condition): the data behind the
// compute-accuracy frontier plot.
inline std::string emit_frontier_csv(const std::vector<RunRow>& rows,
                                     int B = kBootstrapResamples,
                                     double level = kBootstrapLevel,
                                     std::uint64_t seed = kStatsSeed) {
  using namespace detail_stats;
  std::string out = "benchmark,condition,calls_per_task,accuracy,ci_lo,ci_hi\n";
  for (const auto& [benchmark, by_condition] : group_rows(rows)) {
    for (const auto& condition : ordered_conditions(by_condition)) {
      const auto& group = by_condition.at(condition);
      auto values = success_values(group);
      if (values.empty()) {
        std::cerr << "warning: no usable rows for " << benchmark << "/"
                  << condition << ", record omitted\n";
        continue;
      }
      BootstrapCI ci = bootstrap_ci(values, B, level, seed);
      out += benchmark + "," + condition + "," +
             fmt("%.6f", mean_calls(group)) + "," +
             fmt("%.6f", accuracy(group)) + "," + fmt("%.6f", ci.lo) + "," +
             fmt("%.6f", ci.hi) + "\n";
    }
  }
  return out;
}

inline std::string emit_agreement_bins_csv(
    const std::vector<RunRow>& rows,
    const std::vector<double>& edges = default_bin_edges(),
    int B = kBootstrapResamples, double level = kBootstrapLevel,
    std::uint64_t seed = kStatsSeed) {
  using namespace detail_stats;
  std::string out =
      "benchmark,bin_lo,bin_hi,n_steps,success_fraction,ci_lo,ci_hi\n";
  std::map<std::string, std::vector<RunRow>> trace_rows;
  for (const auto& row : rows) {
    if (row.condition.starts_with("trace")) {
      trace_rows[row.benchmark].push_back(row);
    }
  }
  for (const auto& [benchmark, group] : trace_rows) {
    for (const auto& bin : agreement_success_bins(group, edges, B, level,
                                                  seed)) {
      out += benchmark + "," + fmt("%.2f", bin.lo) + "," + fmt("%.2f", bin.hi) +
             "," + std::to_string(bin.n_steps) + "," +
             fmt("%.6f", bin.success_fraction) + "," + fmt("%.6f", bin.ci.lo) +
             "," + fmt("%.6f", bin.ci.hi) + "\n";
    }
  }
  return out;
}

inline std::string emit_calls_histogram_csv(const std::vector<RunRow>& rows) {
  using namespace detail_stats;
  std::string out = "benchmark,condition,granularity,calls,count\n";
  for (const auto& [benchmark, by_condition] : group_rows(rows)) {
    std::vector<RunRow> flat;
    for (const auto& [_, group] : by_condition) {
      flat.insert(flat.end(), group.begin(), group.end());
    }
    for (bool per_step : {false, true}) {
      CallsHistogram hist = calls_histogram(flat, per_step);
      std::vector<std::string> conditions;
      for (const auto& [condition, _] : hist.counts) {
        conditions.push_back(condition);
      }
      std::sort(conditions.begin(), conditions.end(), condition_less);
      for (const auto& condition : conditions) {
        for (const auto& [calls, count] : hist.counts[condition]) {
          out += benchmark + "," + condition + "," +
                 (per_step ? "step" : "task") + "," + std::to_string(calls) +
                 "," + std::to_string(count) + "\n";
        }
      }
    }
  }
  return out;
}

struct AblationRow {
  std::string label;
  std::optional<double> tau_high;  // empty for the SC reference row
  double accuracy = 0.0;
  double calls_per_task = 0.0;
  BootstrapCI ci;
};

// Per-threshold accuracy and calls for TrACE rows tagged "trace<k>-tau<t>",
// alongside the SC-4 reference. Expected thresholds that are missing from
// the rows produce a warning and a partial table.
inline std::vector<AblationRow> ablation_summary(
    const std::vector<RunRow>& rows,
    const std::vector<double>& expected_taus = {0.50, 0.75, 1.00},
    int B = kBootstrapResamples, double level = kBootstrapLevel,
    std::uint64_t seed = kStatsSeed) {
  using namespace detail_stats;
  std::map<double, std::vector<RunRow>> by_tau;
  std::vector<RunRow> reference;
  for (const auto& row : rows) {
    if (auto tau = tau_from_condition(row.condition)) {
      by_tau[*tau].push_back(row);
    } else if (row.condition == "sc4") {
      reference.push_back(row);
    }
  }
  for (double tau : expected_taus) {
    if (!by_tau.contains(tau)) {
      std::cerr << "warning: no rows for tau_high=" << fmt("%.2f", tau)
                << ", ablation table is partial\n";
    }
  }

  std::vector<AblationRow> out;
  for (const auto& [tau, group] : by_tau) {
    auto values = success_values(group);
    if (values.empty()) continue;
    AblationRow row;
    row.label = "tau_high=" + fmt("%.2f", tau);
    row.tau_high = tau;
    row.accuracy = accuracy(group);
    row.calls_per_task = mean_calls(group);
    row.ci = bootstrap_ci(values, B, level, seed);
    out.push_back(row);
  }
  if (!reference.empty()) {
    auto values = success_values(reference);
    if (!values.empty()) {
      AblationRow row;
      row.label = "SC-4 (reference)";
      row.accuracy = accuracy(reference);
      row.calls_per_task = mean_calls(reference);
      row.ci = bootstrap_ci(values, B, level, seed);
      out.push_back(row);
    }
  }
  if (out.empty()) throw NoDataError("ablation_summary: no ablation rows");
  return out;
}

inline std::string render_ablation_table(const std::vector<AblationRow>& rows) {
  using detail_stats::fmt;
  std::string out = "Setting | Acc. | 95% CI | Calls/task\n";
  for (const auto& row : rows) {
    out += row.label + " | " + fmt("%.3f", row.accuracy) + " | [" +
           fmt("%.3f", row.ci.lo) + ", " + fmt("%.3f", row.ci.hi) + "] | " +
           fmt("%.2f", row.calls_per_task) + "\n";
  }
  return out;
}

}  // namespace trace
