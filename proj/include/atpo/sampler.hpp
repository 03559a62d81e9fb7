#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "atpo/core.hpp"
#include "atpo/model.hpp"

namespace atpo {

/// How to run one instrumented denoising rollout.
struct DecodeSpec {
  int T = 16;
  int L = 16;
  double temperature = 1.0;
  bool greedy = false;
  double margin_eps = 1e-6;

  // rng stream key; rollouts are reproducible independent of scheduling order
  std::uint64_t seed = 0;
  std::int64_t prompt_id = 0;
  std::int64_t rollout_id = 0;
};

/// Number of positions committed at each step: k_t = ceil(m_t / (T - t + 1))
/// over the remaining masked count m_t. Sums to L, every entry >= 1.
/// Errors: BadShape when T > L.
std::vector<int> commit_schedule(int L, int T);

/// Run one denoising rollout with confidence-ordered unmasking, recording the
/// transfer masks and per-step mean uncertainty signals. Reward/correctness
/// are left at zero for the task layer to fill in.
RolloutTrace rollout(const ParamSnapshot& params_old, std::span<const Token> prompt,
                     const DecodeSpec& spec);

/// The state the rollout held when step t (1-based) began: the final
/// completion with every position committed at steps >= t re-masked.
SequenceState entering_state(const RolloutTrace& trace, std::span<const Token> prompt, int t);

/// Log-probabilities of the committed tokens at one step's transfer mask,
/// scored on the reconstructed entering state.
struct StepLogProbs {
  int t = 0;
  std::vector<int> positions;
  std::vector<double> logp;
};

std::vector<StepLogProbs> stepwise_logprobs(const RolloutTrace& trace,
                                            std::span<const Token> prompt,
                                            const ParamSnapshot& snapshot);

}  // namespace atpo
