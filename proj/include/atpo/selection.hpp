#pragma once

#include <span>
#include <utility>
#include <vector>

#include "atpo/core.hpp"

namespace atpo {

/// Population mean and standard deviation (divide by T) of a curve.
struct CurveStats {
  double mean = 0.0;
  double stddev = 0.0;
};

CurveStats curve_stats(std::span<const double> values);

/// Even partition: boundaries floor(i*T/N) for i = 0..N. Errors: BadN.
SegmentPlan select_uniform(int T, int N);

/// Two-stage adaptive rule. Falls back to the even partition when T < 2N or
/// the RoEC curve is flat (sigma below 1e-9). Stage 1 takes steps whose RoEC
/// exceeds mean + sigma_mult*sigma, in increasing step order; stage 2
/// backfills from the largest inverse-margin values. A selected step t
/// becomes boundary t-1, so the unstable step opens its segment.
SegmentPlan select_hybrid(const DifficultyCurves& curves, int N, double sigma_mult = 1.0);

/// Stage 1 of the hybrid rule only; remaining slots are backfilled with the
/// even-partition boundaries not already chosen.
SegmentPlan select_roec_only(const DifficultyCurves& curves, int N, double sigma_mult = 1.0);

/// Pure top-k rule on the inverse-margin curve (ties toward smaller t).
SegmentPlan select_cm_only(const DifficultyCurves& curves, int N);

/// Dispatch on the configured policy.
SegmentPlan select_plan(SelectionPolicy policy, const DifficultyCurves& curves, int N,
                        double sigma_mult = 1.0);

/// The plan's half-open [b_i, b_{i+1}) step intervals, in order.
std::vector<std::pair<int, int>> segments_of(const SegmentPlan& plan);

}  // namespace atpo
