#include "atpo/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "atpo/metrics.hpp"
#include "atpo/rng.hpp"

namespace atpo {

namespace {
constexpr std::uint64_t kRolloutStream = 0x5011;
}

std::vector<int> commit_schedule(int L, int T) {
  require(T >= 1 && T <= L, Err::BadShape, "need 1 <= T <= L");
  std::vector<int> k;
  k.reserve(static_cast<std::size_t>(T));
  int remaining = L;
  for (int t = 1; t <= T; ++t) {
    const int steps_left = T - t + 1;
    const int kt = (remaining + steps_left - 1) / steps_left;
    k.push_back(kt);
    remaining -= kt;
  }
  return k;
}

RolloutTrace rollout(const ParamSnapshot& params_old, std::span<const Token> prompt,
                     const DecodeSpec& spec) {
  require(spec.temperature > 0.0, Err::BadConfig, "temperature must be positive");
  const std::vector<int> schedule = commit_schedule(spec.L, spec.T);
  const int P = static_cast<int>(prompt.size());
  require(P == params_old.params.dims().prompt_len && spec.L == params_old.params.dims().completion_len,
          Err::ShapeMismatch, "prompt/completion lengths disagree with model dims");

  Rng rng(spec.seed, static_cast<std::uint64_t>(spec.prompt_id),
          static_cast<std::uint64_t>(spec.rollout_id), kRolloutStream);

  SequenceState state;
  state.prompt.assign(prompt.begin(), prompt.end());
  state.completion.assign(static_cast<std::size_t>(spec.L), Vocab::kMask);
  // committed-ness is tracked separately: the model may legitimately emit the
  // MASK token, and a committed position is never revisited
  std::vector<char> committed(static_cast<std::size_t>(spec.L), 0);

  RolloutTrace trace;
  trace.prompt_id = spec.prompt_id;
  trace.rollout_id = spec.rollout_id;
  trace.T = spec.T;
  trace.L = spec.L;
  trace.steps.reserve(static_cast<std::size_t>(spec.T));

  for (int t = 1; t <= spec.T; ++t) {
    const Mat logits = forward_logits(params_old.params, state);

    std::vector<int> masked;
    for (int pos = 0; pos < spec.L; ++pos) {
      if (!committed[static_cast<std::size_t>(pos)]) masked.push_back(pos);
    }

    std::vector<ProbVector> dists;
    dists.reserve(masked.size());
    for (int pos : masked) {
      const Eigen::VectorXd p = softmax_row(logits.row(P + pos).transpose());
      dists.push_back(ProbVector{{p.data(), p.data() + p.size()}});
    }
    const StepMeans means = step_means(dists, spec.margin_eps);

    // confidence-ordered unmasking: highest top-1 probability first
    std::vector<std::pair<double, int>> ranked;
    ranked.reserve(masked.size());
    for (std::size_t i = 0; i < masked.size(); ++i) {
      double top1 = 0.0;
      for (double v : dists[i].values) top1 = std::max(top1, v);
      ranked.emplace_back(top1, masked[i]);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });

    const int kt = schedule[static_cast<std::size_t>(t - 1)];
    std::vector<int> transfer;
    transfer.reserve(static_cast<std::size_t>(kt));
    for (int i = 0; i < kt; ++i) transfer.push_back(ranked[static_cast<std::size_t>(i)].second);
    std::sort(transfer.begin(), transfer.end());

    for (int pos : transfer) {
      const Eigen::VectorXd row = logits.row(P + pos).transpose();
      Token chosen;
      if (spec.greedy) {
        Eigen::Index arg;
        softmax_row(row).maxCoeff(&arg);
        chosen = static_cast<Token>(arg);
      } else {
        const Eigen::VectorXd p = softmax_row(row / spec.temperature);
        chosen = static_cast<Token>(rng.next_categorical({p.data(), static_cast<std::size_t>(p.size())}));
      }
      state.completion[static_cast<std::size_t>(pos)] = chosen;
      committed[static_cast<std::size_t>(pos)] = 1;
    }

    trace.steps.push_back(StepTrace{t, std::move(transfer), means.mean_entropy, means.mean_inv_margin});
  }

  trace.final_tokens = state.completion;
  trace.validate();
  return trace;
}

SequenceState entering_state(const RolloutTrace& trace, std::span<const Token> prompt, int t) {
  require(t >= 1 && t <= trace.T + 1, Err::BadShape, "step index out of range");
  SequenceState state;
  state.prompt.assign(prompt.begin(), prompt.end());
  state.completion = trace.final_tokens;
  for (const StepTrace& s : trace.steps) {
    if (s.t < t) continue;
    for (int pos : s.transfer) state.completion[static_cast<std::size_t>(pos)] = Vocab::kMask;
  }
  return state;
}

std::vector<StepLogProbs> stepwise_logprobs(const RolloutTrace& trace,
                                            std::span<const Token> prompt,
                                            const ParamSnapshot& snapshot) {
  std::vector<StepLogProbs> out;
  out.reserve(trace.steps.size());
  for (const StepTrace& s : trace.steps) {
    const SequenceState state = entering_state(trace, prompt, s.t);
    std::vector<Token> targets;
    targets.reserve(s.transfer.size());
    for (int pos : s.transfer) targets.push_back(trace.final_tokens[static_cast<std::size_t>(pos)]);
    out.push_back(StepLogProbs{
        s.t, s.transfer, log_probs_at(snapshot.params, state, s.transfer, targets)});
  }
  return out;
}

}  // namespace atpo
