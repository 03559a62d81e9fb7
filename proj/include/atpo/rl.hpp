#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "atpo/core.hpp"
#include "atpo/model.hpp"
#include "atpo/tasks.hpp"

namespace atpo {

/// G rollouts of one prompt with rewards and group-normalized advantages.
struct RolloutGroup {
  std::int64_t prompt_id = 0;
  std::vector<RolloutTrace> traces;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

/// A_j = (R_j - mean) / (population std + eps). A single-element group gets [0].
std::vector<double> group_advantages(std::span<const double> rewards, double eps_adv);

/// Clipped-surrogate objective with a k3 KL penalty, to be maximized:
///   r = exp(logp_new - logp_old)
///   surrogate = min(r*A, clamp(r, 1-eps, 1+eps)*A)
///   kl = exp(logp_ref - logp_new) - (logp_ref - logp_new) - 1
///   objective = surrogate - beta*kl
double token_objective(double logp_new, double logp_old, double logp_ref, double advantage,
                       double clip_eps, double beta);

/// The same objective as a differentiable per-token term for loss_and_grad,
/// with logp_old/logp_ref/advantage held fixed.
ObjectiveFn ppo_objective(double logp_old, double logp_ref, double advantage, double clip_eps,
                          double beta);

/// Loss of one trajectory over the plan's segments: the trajectory advantage
/// is broadcast to every scored position and the result is the negated mean
/// objective. Also returns the per-state token terms that reproduce the same
/// loss (and its gradient) through loss_and_grad.
struct TrajectoryLoss {
  double loss = 0.0;
  double mean_kl = 0.0;
  std::vector<StateTerms> terms;
};

TrajectoryLoss trajectory_loss(const RolloutTrace& trace, std::span<const Token> prompt,
                               const SegmentPlan& plan, const ParamSnapshot& current,
                               const ParamSnapshot& old, const ParamSnapshot& ref,
                               double advantage, const TrainConfig& cfg);

/// Adam moment accumulators; shapes mirror the parameter buffer.
struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState for_params(const ModelParams& params, double beta1, double beta2,
                                   double eps);
};

/// Global-norm clip to clip_norm, then a bias-corrected Adam update in place.
/// Errors: ShapeMismatch.
void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr,
               double clip_norm);

struct IterationMetrics {
  int iteration = 0;
  double mean_reward = 0.0;
  double loss = 0.0;
  double mean_kl = 0.0;
  std::vector<int> boundaries;
  double entropy_mean = 0.0, entropy_max = 0.0;
  double roec_mean = 0.0, roec_max = 0.0;
};

struct PhaseTimings {
  int iteration = 0;
  double rollout_s = 0.0, metrics_s = 0.0, selection_s = 0.0, scoring_s = 0.0, update_s = 0.0;
  double total_s = 0.0;
};

struct EvalResult {
  double mean_reward = 0.0;
  double exact_rate = 0.0;
};

/// The full training loop state: policy parameters, the frozen reference
/// snapshot, optimizer state, and the deterministic data source.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg, int workers = 1);

  /// One full iteration: snapshot, rollouts, curves, shared plan, advantages,
  /// segment-scored loss, Adam update. Errors: NumericFailure on a non-finite
  /// loss.
  IterationMetrics run_iteration();

  /// Greedy decoding on the fixed held-out instance range.
  EvalResult evaluate(int count) const;

  const TrainConfig& config() const { return cfg_; }
  const ModelParams& params() const { return params_; }
  const PhaseTimings& last_timings() const { return timings_; }
  const std::vector<RolloutTrace>& last_traces() const { return last_traces_; }
  int iteration() const { return iteration_; }

  /// First held-out instance index; training draws indices below this.
  static constexpr std::int64_t kEvalBase = 1'000'000;

 private:
  TrainConfig cfg_;
  int workers_ = 1;
  Vocab vocab_;
  TaskId task_;
  ModelParams params_;
  ParamSnapshot ref_;
  OptimizerState opt_;
  int iteration_ = 0;
  PhaseTimings timings_;
  std::vector<RolloutTrace> last_traces_;
};

}  // namespace atpo
