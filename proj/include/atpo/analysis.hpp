#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atpo/core.hpp"
#include "atpo/rl.hpp"
#include "atpo/trace_io.hpp"

namespace atpo {

/// Batch-mean curves split by final outcome, with subset sizes. A subset may
/// be empty (count 0, no curves). Errors: MixedT, EmptyBatch.
struct OutcomeCurves {
  int correct_count = 0;
  int incorrect_count = 0;
  std::optional<DifficultyCurves> correct;
  std::optional<DifficultyCurves> incorrect;
};

OutcomeCurves outcome_curves(std::span<const RolloutTrace> traces);

/// Eval-reward columns of several runs aligned on a shared iteration grid.
/// Errors: GridMismatch when the eval iterations differ across runs.
struct RunComparison {
  std::vector<int> iterations;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> values;  // values[row][column]
};

RunComparison compare_runs(std::span<const std::vector<RunRecord>> logs,
                           std::span<const std::string> labels);

std::string comparison_to_csv(const RunComparison& cmp);

/// Mean wall time per phase for an adaptive run against a uniform baseline,
/// plus the total-time ratio. Errors: MissingTimings.
struct OverheadReport {
  struct Phase {
    std::string name;
    double adaptive_mean = 0.0;
    double uniform_mean = 0.0;
  };
  std::vector<Phase> phases;
  double adaptive_total_mean = 0.0;
  double uniform_total_mean = 0.0;
  double ratio = 0.0;
};

OverheadReport selection_overhead(std::span<const PhaseTimings> adaptive,
                                  std::span<const PhaseTimings> uniform);

std::string overhead_to_text(const OverheadReport& report);

}  // namespace atpo
