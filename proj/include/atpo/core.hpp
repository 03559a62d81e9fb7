#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atpo/error.hpp"

namespace atpo {

using Token = int;

/// Fixed symbol-table vocabulary. MASK and PAD are reserved ids without a
/// printable symbol; printable symbols map to consecutive ids starting at 2.
class Vocab {
 public:
  static constexpr Token kMask = 0;
  static constexpr Token kPad = 1;

  /// Build from the printable symbol string, e.g. "0123456789+>".
  explicit Vocab(std::string symbols);

  /// The default 14-token vocabulary: digits, '+', and the '>' separator.
  static Vocab standard() { return Vocab("0123456789+>"); }

  int size() const { return 2 + static_cast<int>(symbols_.size()); }
  Token mask() const { return kMask; }
  Token pad() const { return kPad; }

  bool has_symbol(char c) const;
  Token encode(char c) const;
  char decode(Token t) const;

  /// Like decode, but renders MASK as '_' and PAD as '.'.
  char display(Token t) const;

  std::vector<Token> encode_string(const std::string& s) const;
  const std::string& symbols() const { return symbols_; }

 private:
  std::string symbols_;
};

/// A categorical distribution over the vocabulary at one position.
struct ProbVector {
  std::vector<double> values;

  int size() const { return static_cast<int>(values.size()); }
};

/// Validates entries (non-negative, sum within 1e-6 of 1) and wraps them.
/// Errors: NegativeEntry, SumOutOfTolerance.
ProbVector validate_prob(std::vector<double> values);

/// A prompt plus a completion whose slots are either committed tokens or MASK.
struct SequenceState {
  std::vector<Token> prompt;
  std::vector<Token> completion;

  int prompt_len() const { return static_cast<int>(prompt.size()); }
  int completion_len() const { return static_cast<int>(completion.size()); }
  int total_len() const { return prompt_len() + completion_len(); }

  int masked_count() const;

  /// One flat token array, prompt then completion.
  std::vector<Token> tokens() const;
};

/// Completion positions committed at denoising step t (1-based).
struct TransferMask {
  int step = 0;
  std::vector<int> positions;  // sorted ascending
};

/// Per-step record inside a rollout trace. The entering-masked set is not
/// stored; it is the union of transfer masks of this and all later steps.
struct StepTrace {
  int t = 0;
  std::vector<int> transfer;  // sorted completion indices committed at t
  double mean_entropy = 0.0;
  double mean_inv_margin = 0.0;

  bool operator==(const StepTrace&) const = default;
};

/// The synchronized traces of one denoising rollout: transfer masks and
/// per-step mean uncertainty signals, plus the final completion and reward.
struct RolloutTrace {
  std::int64_t prompt_id = 0;
  std::int64_t rollout_id = 0;
  int T = 0;
  int L = 0;
  std::vector<StepTrace> steps;
  std::vector<Token> final_tokens;
  double reward = 0.0;
  bool correct = false;

  /// Completion positions still masked when step t (1-based) begins.
  std::vector<int> entering_masked(int t) const;

  /// Checks the step/partition invariants; throws on violation.
  void validate() const;

  bool operator==(const RolloutTrace&) const = default;
};

/// Batch-averaged difficulty series indexed by step (1-based internally
/// stored at offset 0). RoEC is always derived from H, so the recurrence
/// RoEC[0]=0, RoEC[t]=|H[t]-H[t-1]| holds exactly by construction.
struct DifficultyCurves {
  std::vector<double> entropy;
  std::vector<double> inv_margin;
  std::vector<double> roec;

  int T() const { return static_cast<int>(entropy.size()); }

  static DifficultyCurves from_means(std::vector<double> entropy, std::vector<double> inv_margin);

  bool operator==(const DifficultyCurves&) const = default;
};

/// Ordered boundary set 0 = b_1 < ... < b_{M+1} = T; segment i is the
/// half-open step interval [b_i, b_{i+1}), covering steps b_i+1 .. b_{i+1}.
struct SegmentPlan {
  int T = 0;
  std::vector<int> boundaries;

  int segment_count() const { return static_cast<int>(boundaries.size()) - 1; }

  bool operator==(const SegmentPlan&) const = default;
};

/// Validates boundary ordering, endpoints, and the segment budget.
/// Errors: NotStrictlyIncreasing, BadEndpoints, TooManySegments.
SegmentPlan validate_plan(std::vector<int> boundaries, int T, int N);

enum class SelectionPolicy { Uniform, Roec, Cm, Hybrid };

SelectionPolicy parse_policy(const std::string& name);
const char* policy_name(SelectionPolicy p);

/// Full training configuration. Everything needed for a deterministic run.
struct TrainConfig {
  std::string task = "copy";
  std::string vocab = "0123456789+>";

  int T = 16;  // denoising steps
  int N = 4;   // target segments
  int L = 16;  // completion length
  int P = 6;   // prompt length
  int dim = 32;

  int group_size = 6;     // rollouts per prompt (G)
  int batch_prompts = 8;  // prompts per iteration (B)
  int iterations = 300;

  double learning_rate = 1e-3;
  double clip_eps = 0.2;    // PPO ratio clip
  double clip_norm = 0.2;   // global gradient-norm clip
  double kl_beta = 0.01;
  double adv_eps = 1e-8;
  double margin_eps = 1e-6;
  double roec_sigma_mult = 1.0;  // threshold = mu + mult * sigma

  SelectionPolicy policy = SelectionPolicy::Hybrid;
  double temperature = 1.0;
  std::uint64_t seed = 1;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  int eval_every = 10;   // 0 disables periodic eval
  int eval_count = 64;   // held-out instances per eval
  int checkpoint_every = 0;  // 0 = final checkpoint only
  int train_pool = 0;    // cycle through this many train instances; 0 = fresh each batch

  /// Throws BadConfig on any violated invariant (1 <= N <= T <= L, G >= 2,
  /// positive rates, non-empty vocab, ...).
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

}  // namespace atpo
