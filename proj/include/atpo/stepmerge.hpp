#pragma once

#include <span>
#include <utility>
#include <vector>

#include "atpo/core.hpp"
#include "atpo/model.hpp"

namespace atpo {

/// One segment's likelihood evaluation: the completion positions committed
/// inside its step interval and their log-probabilities under a snapshot.
struct SegmentScore {
  int index = 0;
  std::pair<int, int> interval{0, 0};  // [b_i, b_{i+1})
  std::vector<int> changed;            // C_i, sorted
  std::vector<double> logp;            // aligned with changed
};

/// C_i per segment: the union of the transfer masks of steps b_i+1..b_{i+1}.
/// Disjoint across segments and covering [0, L). Errors: TMismatch.
std::vector<std::vector<int>> changed_sets(const RolloutTrace& trace, const SegmentPlan& plan);

/// Score each segment in one forward pass: re-mask everything committed after
/// boundary b_i on the final completion (the segment's entering state) and
/// read off the log-probabilities of the final tokens at C_i.
std::vector<SegmentScore> segment_logprobs(const RolloutTrace& trace,
                                           std::span<const Token> prompt, const SegmentPlan& plan,
                                           const ParamSnapshot& snapshot);

}  // namespace atpo
