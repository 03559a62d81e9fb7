#include "atpo/stepmerge.hpp"

#include <algorithm>

#include "atpo/sampler.hpp"

namespace atpo {

std::vector<std::vector<int>> changed_sets(const RolloutTrace& trace, const SegmentPlan& plan) {
  require(plan.T == trace.T, Err::TMismatch, "plan and trace disagree on T");
  std::vector<std::vector<int>> sets;
  sets.reserve(static_cast<std::size_t>(plan.segment_count()));
  for (int i = 0; i + 1 < static_cast<int>(plan.boundaries.size()); ++i) {
    const int begin = plan.boundaries[static_cast<std::size_t>(i)];
    const int end = plan.boundaries[static_cast<std::size_t>(i) + 1];
    std::vector<int> c;
    for (int t = begin + 1; t <= end; ++t) {
      const auto& transfer = trace.steps[static_cast<std::size_t>(t - 1)].transfer;
      c.insert(c.end(), transfer.begin(), transfer.end());
    }
    std::sort(c.begin(), c.end());
    sets.push_back(std::move(c));
  }
  return sets;
}

std::vector<SegmentScore> segment_logprobs(const RolloutTrace& trace,
                                           std::span<const Token> prompt, const SegmentPlan& plan,
                                           const ParamSnapshot& snapshot) {
  const std::vector<std::vector<int>> sets = changed_sets(trace, plan);
  std::vector<SegmentScore> scores;
  scores.reserve(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const int begin = plan.boundaries[i];
    const int end = plan.boundaries[i + 1];
    // entering state of step begin+1: everything committed after b_i is masked
    const SequenceState state = entering_state(trace, prompt, begin + 1);
    std::vector<Token> targets;
    targets.reserve(sets[i].size());
    for (int pos : sets[i]) targets.push_back(trace.final_tokens[static_cast<std::size_t>(pos)]);
    SegmentScore score;
    score.index = static_cast<int>(i);
    score.interval = {begin, end};
    score.logp = log_probs_at(snapshot.params, state, sets[i], targets);
    score.changed = sets[i];
    scores.push_back(std::move(score));
  }
  return scores;
}

}  // namespace atpo
