#include "atpo/rl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "atpo/metrics.hpp"
#include "atpo/parallel.hpp"
#include "atpo/sampler.hpp"
#include "atpo/selection.hpp"
#include "atpo/stepmerge.hpp"

namespace atpo {

namespace {

double clamp(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

double k3_kl(double logp_ref, double logp_new) {
  const double delta = logp_ref - logp_new;
  return std::exp(delta) - delta - 1.0;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

std::vector<double> group_advantages(std::span<const double> rewards, double eps_adv) {
  const std::size_t g = rewards.size();
  if (g <= 1) return std::vector<double>(g, 0.0);
  // all-equal rewards carry no signal; return exact zeros rather than
  // mean-rounding residue divided by eps
  bool all_equal = true;
  for (double r : rewards) all_equal &= r == rewards[0];
  if (all_equal) return std::vector<double>(g, 0.0);
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_pop = std::sqrt(var / static_cast<double>(g));
  std::vector<double> adv(g);
  for (std::size_t j = 0; j < g; ++j) adv[j] = (rewards[j] - mean) / (std_pop + eps_adv);
  return adv;
}

double token_objective(double logp_new, double logp_old, double logp_ref, double advantage,
                       double clip_eps, double beta) {
  const double ratio = std::exp(logp_new - logp_old);
  const double surrogate =
      std::min(ratio * advantage, clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage);
  return surrogate - beta * k3_kl(logp_ref, logp_new);
}

ObjectiveFn ppo_objective(double logp_old, double logp_ref, double advantage, double clip_eps,
                          double beta) {
  return [=](double logp_new) {
    const double ratio = std::exp(logp_new - logp_old);
    const double unclipped = ratio * advantage;
    const double clipped = clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    double value, dvalue;
    if (unclipped <= clipped) {
      value = unclipped;
      dvalue = ratio * advantage;
    } else {
      value = clipped;  // ratio is outside the clamp range here
      dvalue = 0.0;
    }
    const double delta = logp_ref - logp_new;
    value -= beta * (std::exp(delta) - delta - 1.0);
    dvalue -= beta * (1.0 - std::exp(delta));
    return ObjectiveEval{value, dvalue};
  };
}

TrajectoryLoss trajectory_loss(const RolloutTrace& trace, std::span<const Token> prompt,
                               const SegmentPlan& plan, const ParamSnapshot& current,
                               const ParamSnapshot& old, const ParamSnapshot& ref,
                               double advantage, const TrainConfig& cfg) {
  const std::vector<SegmentScore> cur = segment_logprobs(trace, prompt, plan, current);
  const std::vector<SegmentScore> prev = segment_logprobs(trace, prompt, plan, old);
  const std::vector<SegmentScore> anchor = segment_logprobs(trace, prompt, plan, ref);

  std::size_t total = 0;
  for (const SegmentScore& s : cur) total += s.changed.size();
  require(total > 0, Err::BadShape, "plan scores no positions");
  const double weight = -1.0 / static_cast<double>(total);

  TrajectoryLoss out;
  double objective_sum = 0.0;
  double kl_sum = 0.0;
  for (std::size_t i = 0; i < cur.size(); ++i) {
    StateTerms st;
    st.state = entering_state(trace, prompt, plan.boundaries[i] + 1);
    st.terms.reserve(cur[i].changed.size());
    for (std::size_t p = 0; p < cur[i].changed.size(); ++p) {
      const int pos = cur[i].changed[p];
      const double lp_new = cur[i].logp[p];
      const double lp_old = prev[i].logp[p];
      const double lp_ref = anchor[i].logp[p];
      objective_sum +=
          token_objective(lp_new, lp_old, lp_ref, advantage, cfg.clip_eps, cfg.kl_beta);
      kl_sum += k3_kl(lp_ref, lp_new);
      st.terms.push_back(TokenTerm{
          pos, trace.final_tokens[static_cast<std::size_t>(pos)], weight,
          ppo_objective(lp_old, lp_ref, advantage, cfg.clip_eps, cfg.kl_beta)});
    }
    out.terms.push_back(std::move(st));
  }
  out.loss = -objective_sum / static_cast<double>(total);
  out.mean_kl = kl_sum / static_cast<double>(total);
  return out;
}

OptimizerState OptimizerState::for_params(const ModelParams& params, double beta1, double beta2,
                                          double eps) {
  OptimizerState s;
  s.m.assign(params.size(), 0.0);
  s.v.assign(params.size(), 0.0);
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr,
               double clip_norm) {
  require(params.dims() == grads.dims(), Err::ShapeMismatch, "gradient dims differ from params");
  require(state.m.size() == params.size() && state.v.size() == params.size(), Err::ShapeMismatch,
          "optimizer state dims differ from params");

  const std::span<const double> g = grads.flat();
  double sq = 0.0;
  for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  const double scale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  std::span<double> p = params.flat();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i] * scale;
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * gi;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * gi * gi;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

Trainer::Trainer(TrainConfig cfg, int workers)
    : cfg_((cfg.validate(), std::move(cfg))),
      workers_(std::max(1, workers)),
      vocab_(cfg_.vocab),
      task_(parse_task(cfg_.task)),
      params_(ModelParams::init(cfg_.seed, ModelDims{vocab_.size(), cfg_.P, cfg_.L, cfg_.dim})),
      ref_{params_, SnapshotLabel::Ref},
      opt_(OptimizerState::for_params(params_, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps)) {
  require(cfg_.P == task_prompt_len(task_), Err::BadConfig,
          std::string("task '") + task_name(task_) + "' needs prompt length " +
              std::to_string(task_prompt_len(task_)));
}

IterationMetrics Trainer::run_iteration() {
  iteration_ += 1;
  const int n_traces = cfg_.batch_prompts * cfg_.group_size;
  const double t0 = now_seconds();

  const ParamSnapshot old{params_, SnapshotLabel::Old};
  const ParamSnapshot cur{params_, SnapshotLabel::Current};

  // data source: a rolling window over the training index range, optionally
  // wrapped onto a finite pool of instances
  std::vector<TaskInstance> instances;
  instances.reserve(static_cast<std::size_t>(cfg_.batch_prompts));
  for (int j = 0; j < cfg_.batch_prompts; ++j) {
    std::int64_t id = static_cast<std::int64_t>(iteration_ - 1) * cfg_.batch_prompts + j;
    if (cfg_.train_pool > 0) id %= cfg_.train_pool;
    instances.push_back(generate_instances(task_, id, 1, cfg_.L, cfg_.seed, vocab_)[0]);
  }

  std::vector<RolloutTrace> traces(static_cast<std::size_t>(n_traces));
  parallel_for(n_traces, workers_, [&](int idx) {
    const int j = idx / cfg_.group_size;
    const int g = idx % cfg_.group_size;
    const TaskInstance& inst = instances[static_cast<std::size_t>(j)];
    DecodeSpec spec;
    spec.T = cfg_.T;
    spec.L = cfg_.L;
    spec.temperature = cfg_.temperature;
    spec.greedy = false;
    spec.margin_eps = cfg_.margin_eps;
    spec.seed = cfg_.seed;
    spec.prompt_id = inst.id;
    // unique stream per visit: pooled prompts recur across iterations
    spec.rollout_id = static_cast<std::int64_t>(iteration_ - 1) * cfg_.group_size + g;
    RolloutTrace tr = rollout(old, inst.prompt, spec);
    tr.reward = reward(inst, tr.final_tokens);
    tr.correct = is_correct(inst, tr.final_tokens);
    traces[static_cast<std::size_t>(idx)] = std::move(tr);
  });
  const double t1 = now_seconds();

  const DifficultyCurves curves = batch_mean_curves(traces);
  const double t2 = now_seconds();

  const SegmentPlan plan = select_plan(cfg_.policy, curves, cfg_.N, cfg_.roec_sigma_mult);
  const double t3 = now_seconds();

  std::vector<double> advantages(static_cast<std::size_t>(n_traces), 0.0);
  for (int j = 0; j < cfg_.batch_prompts; ++j) {
    std::vector<double> rewards(static_cast<std::size_t>(cfg_.group_size));
    for (int g = 0; g < cfg_.group_size; ++g) {
      rewards[static_cast<std::size_t>(g)] =
          traces[static_cast<std::size_t>(j * cfg_.group_size + g)].reward;
    }
    const std::vector<double> adv = group_advantages(rewards, cfg_.adv_eps);
    for (int g = 0; g < cfg_.group_size; ++g) {
      advantages[static_cast<std::size_t>(j * cfg_.group_size + g)] = adv[static_cast<std::size_t>(g)];
    }
  }

  std::vector<double> losses(static_cast<std::size_t>(n_traces), 0.0);
  std::vector<double> kls(static_cast<std::size_t>(n_traces), 0.0);
  std::vector<ModelParams> grads(static_cast<std::size_t>(n_traces), ModelParams(params_.dims()));
  parallel_for(n_traces, workers_, [&](int idx) {
    const int j = idx / cfg_.group_size;
    const TaskInstance& inst = instances[static_cast<std::size_t>(j)];
    const TrajectoryLoss tl =
        trajectory_loss(traces[static_cast<std::size_t>(idx)], inst.prompt, plan, cur, old, ref_,
                        advantages[static_cast<std::size_t>(idx)], cfg_);
    losses[static_cast<std::size_t>(idx)] =
        loss_and_grad(params_, tl.terms, grads[static_cast<std::size_t>(idx)]);
    kls[static_cast<std::size_t>(idx)] = tl.mean_kl;
  });

  // reduce in fixed trajectory order so results do not depend on --workers
  ModelParams grad(params_.dims());
  double loss_sum = 0.0, kl_sum = 0.0, reward_sum = 0.0;
  for (int idx = 0; idx < n_traces; ++idx) {
    std::span<double> acc = grad.flat();
    std::span<const double> g = grads[static_cast<std::size_t>(idx)].flat();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    loss_sum += losses[static_cast<std::size_t>(idx)];
    kl_sum += kls[static_cast<std::size_t>(idx)];
    reward_sum += traces[static_cast<std::size_t>(idx)].reward;
  }
  const double inv_n = 1.0 / static_cast<double>(n_traces);
  for (double& v : grad.flat()) v *= inv_n;
  const double batch_loss = loss_sum * inv_n;
  require(std::isfinite(batch_loss), Err::NumericFailure,
          "non-finite loss at iteration " + std::to_string(iteration_));
  const double t4 = now_seconds();

  adam_step(params_, grad, opt_, cfg_.learning_rate, cfg_.clip_norm);
  const double t5 = now_seconds();

  IterationMetrics m;
  m.iteration = iteration_;
  m.mean_reward = reward_sum * inv_n;
  m.loss = batch_loss;
  m.mean_kl = kl_sum * inv_n;
  m.boundaries = plan.boundaries;
  m.entropy_mean = curve_stats(curves.entropy).mean;
  m.entropy_max = *std::max_element(curves.entropy.begin(), curves.entropy.end());
  m.roec_mean = curve_stats(curves.roec).mean;
  m.roec_max = *std::max_element(curves.roec.begin(), curves.roec.end());

  timings_ = PhaseTimings{iteration_, t1 - t0, t2 - t1, t3 - t2, t4 - t3, t5 - t4, t5 - t0};
  last_traces_ = std::move(traces);
  return m;
}

EvalResult Trainer::evaluate(int count) const {
  require(count >= 1, Err::BadConfig, "eval count must be positive");
  const std::vector<TaskInstance> instances =
      generate_instances(task_, kEvalBase, count, cfg_.L, cfg_.seed, vocab_);
  const ParamSnapshot cur{params_, SnapshotLabel::Current};

  std::vector<double> rewards(static_cast<std::size_t>(count), 0.0);
  std::vector<char> exact(static_cast<std::size_t>(count), 0);
  parallel_for(count, workers_, [&](int i) {
    const TaskInstance& inst = instances[static_cast<std::size_t>(i)];
    DecodeSpec spec;
    spec.T = cfg_.T;
    spec.L = cfg_.L;
    spec.greedy = true;
    spec.margin_eps = cfg_.margin_eps;
    spec.seed = cfg_.seed;
    spec.prompt_id = inst.id;
    const RolloutTrace tr = rollout(cur, inst.prompt, spec);
    rewards[static_cast<std::size_t>(i)] = reward(inst, tr.final_tokens);
    exact[static_cast<std::size_t>(i)] = is_correct(inst, tr.final_tokens) ? 1 : 0;
  });

  EvalResult r;
  for (int i = 0; i < count; ++i) {
    r.mean_reward += rewards[static_cast<std::size_t>(i)];
    r.exact_rate += exact[static_cast<std::size_t>(i)];
  }
  r.mean_reward /= count;
  r.exact_rate /= count;
  return r;
}

}  // namespace atpo
