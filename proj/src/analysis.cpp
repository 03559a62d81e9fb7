#include "atpo/analysis.hpp"

#include "atpo/metrics.hpp"

namespace atpo {

OutcomeCurves outcome_curves(std::span<const RolloutTrace> traces) {
  require(!traces.empty(), Err::EmptyBatch, "no traces to split by outcome");
  const int T = traces.front().T;
  for (const RolloutTrace& tr : traces) {
    require(tr.T == T, Err::MixedT, "traces disagree on T");
  }
  std::vector<RolloutTrace> good, bad;
  for (const RolloutTrace& tr : traces) {
    (tr.correct ? good : bad).push_back(tr);
  }
  OutcomeCurves out;
  out.correct_count = static_cast<int>(good.size());
  out.incorrect_count = static_cast<int>(bad.size());
  if (!good.empty()) out.correct = batch_mean_curves(good);
  if (!bad.empty()) out.incorrect = batch_mean_curves(bad);
  return out;
}

RunComparison compare_runs(std::span<const std::vector<RunRecord>> logs,
                           std::span<const std::string> labels) {
  require(!logs.empty(), Err::EmptyBatch, "no run logs to compare");
  require(logs.size() == labels.size(), Err::ShapeMismatch, "one label per run log");

  RunComparison cmp;
  cmp.labels.assign(labels.begin(), labels.end());
  for (std::size_t run = 0; run < logs.size(); ++run) {
    std::vector<int> grid;
    std::vector<double> column;
    for (const RunRecord& r : logs[run]) {
      if (!r.eval_reward) continue;
      grid.push_back(r.iteration);
      column.push_back(*r.eval_reward);
    }
    if (run == 0) {
      cmp.iterations = grid;
      cmp.values.assign(grid.size(), std::vector<double>(logs.size(), 0.0));
    } else {
      require(grid == cmp.iterations, Err::GridMismatch,
              "run '" + cmp.labels[run] + "' evaluates on a different iteration grid");
    }
    for (std::size_t row = 0; row < column.size(); ++row) cmp.values[row][run] = column[row];
  }
  return cmp;
}

std::string comparison_to_csv(const RunComparison& cmp) {
  std::string s = "iteration";
  for (const std::string& label : cmp.labels) s += "," + label;
  s += "\n";
  for (std::size_t row = 0; row < cmp.iterations.size(); ++row) {
    s += std::to_string(cmp.iterations[row]);
    for (double v : cmp.values[row]) s += "," + fmt_double(v);
    s += "\n";
  }
  return s;
}

OverheadReport selection_overhead(std::span<const PhaseTimings> adaptive,
                                  std::span<const PhaseTimings> uniform) {
  require(!adaptive.empty() && !uniform.empty(), Err::MissingTimings,
          "both timing streams must be non-empty");

  auto mean_of = [](std::span<const PhaseTimings> rows, double PhaseTimings::*member) {
    double sum = 0.0;
    for (const PhaseTimings& r : rows) sum += r.*member;
    return sum / static_cast<double>(rows.size());
  };

  OverheadReport report;
  const std::pair<const char*, double PhaseTimings::*> phases[] = {
      {"rollout", &PhaseTimings::rollout_s},   {"metrics", &PhaseTimings::metrics_s},
      {"selection", &PhaseTimings::selection_s}, {"scoring", &PhaseTimings::scoring_s},
      {"update", &PhaseTimings::update_s},
  };
  for (const auto& [name, member] : phases) {
    report.phases.push_back({name, mean_of(adaptive, member), mean_of(uniform, member)});
  }
  report.adaptive_total_mean = mean_of(adaptive, &PhaseTimings::total_s);
  report.uniform_total_mean = mean_of(uniform, &PhaseTimings::total_s);
  require(report.uniform_total_mean > 0.0, Err::MissingTimings, "uniform baseline has zero time");
  report.ratio = report.adaptive_total_mean / report.uniform_total_mean;
  return report;
}

std::string overhead_to_text(const OverheadReport& report) {
  std::string s = "phase,adaptive_mean_s,uniform_mean_s\n";
  for (const auto& p : report.phases) {
    s += p.name + "," + fmt_double(p.adaptive_mean) + "," + fmt_double(p.uniform_mean) + "\n";
  }
  s += "total," + fmt_double(report.adaptive_total_mean) + "," +
       fmt_double(report.uniform_total_mean) + "\n";
  s += "ratio," + fmt_double(report.ratio) + "\n";
  return s;
}

}  // namespace atpo
