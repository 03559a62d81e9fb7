#include "atpo/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace atpo {

double shannon_entropy(const ProbVector& p) {
  double h = 0.0;
  for (double v : p.values) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h < 0.0 ? 0.0 : h;  // clamp -0.0 from rounding
}

double confidence_margin(const ProbVector& p) {
  double top1 = -1.0, top2 = -1.0;
  for (double v : p.values) {
    if (v > top1) {
      top2 = top1;
      top1 = v;
    } else if (v > top2) {
      top2 = v;
    }
  }
  return top1 - top2;
}

double inverse_margin(const ProbVector& p, double eps_margin) {
  return 1.0 / std::max(confidence_margin(p), eps_margin);
}

double kl_divergence(const ProbVector& p, const ProbVector& q, double eps_smooth) {
  require(p.size() == q.size(), Err::ShapeMismatch, "distributions differ in length");
  const double denom = 1.0 + q.size() * eps_smooth;
  double kl = 0.0;
  for (int v = 0; v < p.size(); ++v) {
    double pv = p.values[static_cast<std::size_t>(v)];
    if (pv <= 0.0) continue;
    double qv = q.values[static_cast<std::size_t>(v)];
    if (eps_smooth > 0.0) {
      qv = (qv + eps_smooth) / denom;
    } else {
      require(qv > 0.0, Err::QHasZeroSupport, "p has mass where q is zero and no smoothing was requested");
    }
    kl += pv * std::log(pv / qv);
  }
  return kl < 0.0 ? 0.0 : kl;
}

StepMeans step_means(std::span<const ProbVector> distributions, double eps_margin) {
  require(!distributions.empty(), Err::EmptyStep, "no entering-masked positions at this step");
  double h = 0.0, m = 0.0;
  for (const ProbVector& p : distributions) {
    h += shannon_entropy(p);
    m += inverse_margin(p, eps_margin);
  }
  const double n = static_cast<double>(distributions.size());
  return StepMeans{h / n, m / n};
}

std::vector<double> roec_curve(std::span<const double> entropy) {
  require(!entropy.empty(), Err::BadShape, "entropy curve must have at least one step");
  std::vector<double> roec(entropy.size(), 0.0);
  for (std::size_t t = 1; t < entropy.size(); ++t) {
    roec[t] = std::abs(entropy[t] - entropy[t - 1]);
  }
  return roec;
}

DifficultyCurves batch_mean_curves(std::span<const RolloutTrace> traces) {
  require(!traces.empty(), Err::EmptyBatch, "no traces to average");
  const int T = traces.front().T;
  for (const RolloutTrace& tr : traces) {
    require(tr.T == T, Err::MixedT, "traces disagree on T");
  }
  std::vector<double> h(static_cast<std::size_t>(T), 0.0);
  std::vector<double> m(static_cast<std::size_t>(T), 0.0);
  for (const RolloutTrace& tr : traces) {
    for (int t = 0; t < T; ++t) {
      h[static_cast<std::size_t>(t)] += tr.steps[static_cast<std::size_t>(t)].mean_entropy;
      m[static_cast<std::size_t>(t)] += tr.steps[static_cast<std::size_t>(t)].mean_inv_margin;
    }
  }
  const double n = static_cast<double>(traces.size());
  for (int t = 0; t < T; ++t) {
    h[static_cast<std::size_t>(t)] /= n;
    m[static_cast<std::size_t>(t)] /= n;
  }
  return DifficultyCurves::from_means(std::move(h), std::move(m));
}

}  // namespace atpo
