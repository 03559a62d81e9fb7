#include "atpo/selection.hpp"

#include <algorithm>
#include <cmath>

namespace atpo {

namespace {

void check_target(int T, int N) {
  require(1 <= N && N <= T, Err::BadN, "need 1 <= N <= T");
}

std::vector<int> uniform_boundaries(int T, int N) {
  std::vector<int> b;
  b.reserve(static_cast<std::size_t>(N) + 1);
  for (int i = 0; i <= N; ++i) {
    b.push_back(static_cast<int>((static_cast<long long>(i) * T) / N));
  }
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

bool interior(int boundary, int T) { return boundary >= 1 && boundary <= T - 1; }

// Steps t with RoEC above mean + mult*sigma, mapped to boundary t-1, taken in
// increasing t until the split budget is filled. Steps are 1-based; curve
// storage is 0-based.
void stage_one(const DifficultyCurves& curves, int N, double sigma_mult, std::vector<int>& splits) {
  const CurveStats stats = curve_stats(curves.roec);
  const double threshold = stats.mean + sigma_mult * stats.stddev;
  for (int t = 1; t <= curves.T() && static_cast<int>(splits.size()) < N - 1; ++t) {
    if (curves.roec[static_cast<std::size_t>(t - 1)] <= threshold) continue;
    const int boundary = t - 1;
    if (!interior(boundary, curves.T())) continue;
    if (std::find(splits.begin(), splits.end(), boundary) == splits.end()) {
      splits.push_back(boundary);
    }
  }
}

SegmentPlan finish(std::vector<int> splits, int T, int N) {
  std::sort(splits.begin(), splits.end());
  splits.erase(std::unique(splits.begin(), splits.end()), splits.end());
  std::vector<int> boundaries;
  boundaries.reserve(splits.size() + 2);
  boundaries.push_back(0);
  boundaries.insert(boundaries.end(), splits.begin(), splits.end());
  boundaries.push_back(T);
  return validate_plan(std::move(boundaries), T, N);
}

// (inverse margin, step) pairs ordered largest-first, ties toward smaller t.
std::vector<std::pair<double, int>> by_inv_margin(const DifficultyCurves& curves) {
  std::vector<std::pair<double, int>> order;
  order.reserve(static_cast<std::size_t>(curves.T()));
  for (int t = 1; t <= curves.T(); ++t) {
    order.emplace_back(curves.inv_margin[static_cast<std::size_t>(t - 1)], t);
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  return order;
}

}  // namespace

CurveStats curve_stats(std::span<const double> values) {
  require(!values.empty(), Err::BadShape, "stats of an empty curve");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return CurveStats{mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

SegmentPlan select_uniform(int T, int N) {
  check_target(T, N);
  return validate_plan(uniform_boundaries(T, N), T, N);
}

SegmentPlan select_hybrid(const DifficultyCurves& curves, int N, double sigma_mult) {
  const int T = curves.T();
  check_target(T, N);
  if (T < 2 * N || curve_stats(curves.roec).stddev < 1e-9) {
    return select_uniform(T, N);
  }

  std::vector<int> splits;
  stage_one(curves, N, sigma_mult, splits);

  if (static_cast<int>(splits.size()) < N - 1) {
    for (const auto& [value, t] : by_inv_margin(curves)) {
      if (static_cast<int>(splits.size()) >= N - 1) break;
      const int boundary = t - 1;
      if (!interior(boundary, T)) continue;
      if (std::find(splits.begin(), splits.end(), boundary) != splits.end()) continue;
      splits.push_back(boundary);
    }
  }
  return finish(std::move(splits), T, N);
}

SegmentPlan select_roec_only(const DifficultyCurves& curves, int N, double sigma_mult) {
  const int T = curves.T();
  check_target(T, N);
  if (T < 2 * N || curve_stats(curves.roec).stddev < 1e-9) {
    return select_uniform(T, N);
  }

  std::vector<int> splits;
  stage_one(curves, N, sigma_mult, splits);

  if (static_cast<int>(splits.size()) < N - 1) {
    const std::vector<int> even = uniform_boundaries(T, N);
    for (std::size_t i = 1; i + 1 < even.size(); ++i) {  // interior boundaries only
      if (static_cast<int>(splits.size()) >= N - 1) break;
      if (std::find(splits.begin(), splits.end(), even[i]) == splits.end()) {
        splits.push_back(even[i]);
      }
    }
  }
  return finish(std::move(splits), T, N);
}

SegmentPlan select_cm_only(const DifficultyCurves& curves, int N) {
  const int T = curves.T();
  check_target(T, N);
  std::vector<int> splits;
  for (const auto& [value, t] : by_inv_margin(curves)) {
    if (static_cast<int>(splits.size()) >= N - 1) break;
    const int boundary = t - 1;
    if (!interior(boundary, T)) continue;
    if (std::find(splits.begin(), splits.end(), boundary) != splits.end()) continue;
    splits.push_back(boundary);
  }
  return finish(std::move(splits), T, N);
}

SegmentPlan select_plan(SelectionPolicy policy, const DifficultyCurves& curves, int N,
                        double sigma_mult) {
  switch (policy) {
    case SelectionPolicy::Uniform: return select_uniform(curves.T(), N);
    case SelectionPolicy::Roec: return select_roec_only(curves, N, sigma_mult);
    case SelectionPolicy::Cm: return select_cm_only(curves, N);
    case SelectionPolicy::Hybrid: return select_hybrid(curves, N, sigma_mult);
  }
  fail(Err::BadConfig, "unknown selection policy");
}

std::vector<std::pair<int, int>> segments_of(const SegmentPlan& plan) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(plan.segment_count()));
  for (int i = 0; i + 1 < static_cast<int>(plan.boundaries.size()); ++i) {
    out.emplace_back(plan.boundaries[static_cast<std::size_t>(i)],
                     plan.boundaries[static_cast<std::size_t>(i) + 1]);
  }
  return out;
}

}  // namespace atpo
