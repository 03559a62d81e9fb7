#pragma once

#include <span>
#include <vector>

#include "atpo/core.hpp"

namespace atpo {

/// Per-step uncertainty samples over the positions predicted at step t.
struct StepMetricSample {
  int t = 0;
  std::vector<double> entropies;
  std::vector<double> inv_margins;

  int position_count() const { return static_cast<int>(entropies.size()); }
};

/// Shannon entropy in nats; zero-probability terms contribute nothing.
/// Always in [0, ln V].
double shannon_entropy(const ProbVector& p);

/// Difference between the two largest probabilities; 0 on a top-2 tie.
double confidence_margin(const ProbVector& p);

/// 1 / max(margin, eps_margin): the clamped inverse confidence margin.
double inverse_margin(const ProbVector& p, double eps_margin);

/// D_KL(p || q) with q optionally smoothed as (q + eps) / (1 + V*eps).
/// Errors: QHasZeroSupport when eps_smooth = 0 and p places mass where q has none.
double kl_divergence(const ProbVector& p, const ProbVector& q, double eps_smooth);

/// Arithmetic means of per-position entropy and inverse margin over the
/// entering-masked set of one step. Errors: EmptyStep.
struct StepMeans {
  double mean_entropy = 0.0;
  double mean_inv_margin = 0.0;
};
StepMeans step_means(std::span<const ProbVector> distributions, double eps_margin);

/// RoEC[1] = 0, RoEC[t] = |H[t] - H[t-1]|.
std::vector<double> roec_curve(std::span<const double> entropy);

/// Unweighted mean over rollouts of the per-rollout step means, with RoEC
/// recomputed from the averaged entropy. Errors: MixedT, EmptyBatch.
DifficultyCurves batch_mean_curves(std::span<const RolloutTrace> traces);

}  // namespace atpo
