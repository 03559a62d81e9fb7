#include "atpo/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace atpo {

const char* err_name(Err code) {
  switch (code) {
    case Err::NegativeEntry: return "negative entry";
    case Err::SumOutOfTolerance: return "sum out of tolerance";
    case Err::NotStrictlyIncreasing: return "not strictly increasing";
    case Err::BadEndpoints: return "bad endpoints";
    case Err::TooManySegments: return "too many segments";
    case Err::QHasZeroSupport: return "q has zero support";
    case Err::EmptyStep: return "empty step";
    case Err::MixedT: return "mixed T";
    case Err::EmptyBatch: return "empty batch";
    case Err::BadN: return "bad N";
    case Err::BadShape: return "bad shape";
    case Err::PositionNotMasked: return "position not masked";
    case Err::ShapeMismatch: return "shape mismatch";
    case Err::TMismatch: return "T mismatch";
    case Err::LTooSmall: return "L too small";
    case Err::IoError: return "io error";
    case Err::ParseError: return "parse error";
    case Err::RoecInconsistent: return "roec inconsistent";
    case Err::GridMismatch: return "grid mismatch";
    case Err::MissingTimings: return "missing timings";
    case Err::BadConfig: return "bad config";
    case Err::NumericFailure: return "numeric failure";
  }
  return "unknown";
}

Vocab::Vocab(std::string symbols) : symbols_(std::move(symbols)) {
  require(size() >= 4, Err::BadConfig, "vocabulary needs at least 2 printable symbols");
  std::set<char> seen;
  for (char c : symbols_) {
    require(seen.insert(c).second, Err::BadConfig, std::string("duplicate symbol '") + c + "'");
  }
}

bool Vocab::has_symbol(char c) const { return symbols_.find(c) != std::string::npos; }

Token Vocab::encode(char c) const {
  auto pos = symbols_.find(c);
  require(pos != std::string::npos, Err::BadConfig, std::string("symbol '") + c + "' not in vocabulary");
  return 2 + static_cast<Token>(pos);
}

char Vocab::decode(Token t) const {
  require(t >= 2 && t < size(), Err::BadConfig, "token id has no printable symbol");
  return symbols_[static_cast<std::size_t>(t - 2)];
}

char Vocab::display(Token t) const {
  if (t == kMask) return '_';
  if (t == kPad) return '.';
  return decode(t);
}

std::vector<Token> Vocab::encode_string(const std::string& s) const {
  std::vector<Token> out;
  out.reserve(s.size());
  for (char c : s) out.push_back(encode(c));
  return out;
}

ProbVector validate_prob(std::vector<double> values) {
  double sum = 0.0;
  for (double v : values) {
    require(v >= 0.0, Err::NegativeEntry, "probability entry below zero");
    sum += v;
  }
  require(std::abs(sum - 1.0) <= 1e-6, Err::SumOutOfTolerance,
          "probabilities sum to " + std::to_string(sum));
  return ProbVector{std::move(values)};
}

int SequenceState::masked_count() const {
  return static_cast<int>(std::count(completion.begin(), completion.end(), Vocab::kMask));
}

std::vector<Token> SequenceState::tokens() const {
  std::vector<Token> out;
  out.reserve(prompt.size() + completion.size());
  out.insert(out.end(), prompt.begin(), prompt.end());
  out.insert(out.end(), completion.begin(), completion.end());
  return out;
}

std::vector<int> RolloutTrace::entering_masked(int t) const {
  std::vector<int> out;
  for (const StepTrace& s : steps) {
    if (s.t >= t) out.insert(out.end(), s.transfer.begin(), s.transfer.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void RolloutTrace::validate() const {
  require(static_cast<int>(steps.size()) == T, Err::BadShape, "trace must hold exactly T step records");
  require(static_cast<int>(final_tokens.size()) == L, Err::BadShape, "final tokens must have length L");
  std::vector<char> seen(static_cast<std::size_t>(L), 0);
  int total = 0;
  for (int i = 0; i < T; ++i) {
    const StepTrace& s = steps[static_cast<std::size_t>(i)];
    require(s.t == i + 1, Err::BadShape, "step records must be 1..T in order");
    require(s.mean_entropy >= 0.0, Err::BadShape, "mean entropy must be non-negative");
    require(s.mean_inv_margin >= 1.0, Err::BadShape, "mean inverse margin must be at least 1");
    for (int p : s.transfer) {
      require(p >= 0 && p < L, Err::BadShape, "transfer position out of range");
      require(!seen[static_cast<std::size_t>(p)], Err::BadShape, "transfer masks must be disjoint");
      seen[static_cast<std::size_t>(p)] = 1;
      ++total;
    }
  }
  require(total == L, Err::BadShape, "transfer masks must cover every completion position");
}

DifficultyCurves DifficultyCurves::from_means(std::vector<double> entropy,
                                              std::vector<double> inv_margin) {
  require(!entropy.empty(), Err::BadShape, "curves need at least one step");
  require(entropy.size() == inv_margin.size(), Err::BadShape, "curve lengths differ");
  DifficultyCurves c;
  c.roec.resize(entropy.size(), 0.0);
  for (std::size_t t = 1; t < entropy.size(); ++t) {
    c.roec[t] = std::abs(entropy[t] - entropy[t - 1]);
  }
  c.entropy = std::move(entropy);
  c.inv_margin = std::move(inv_margin);
  for (std::size_t t = 0; t < c.entropy.size(); ++t) {
    require(std::isfinite(c.entropy[t]) && c.entropy[t] >= 0.0, Err::BadShape,
            "entropy curve entries must be finite and non-negative");
    require(std::isfinite(c.inv_margin[t]), Err::BadShape, "inverse-margin entries must be finite");
  }
  return c;
}

SegmentPlan validate_plan(std::vector<int> boundaries, int T, int N) {
  require(!boundaries.empty() && boundaries.front() == 0 && boundaries.back() == T,
          Err::BadEndpoints, "plan must start at 0 and end at T");
  for (std::size_t i = 1; i < boundaries.size(); ++i) {
    require(boundaries[i] > boundaries[i - 1], Err::NotStrictlyIncreasing,
            "plan boundaries must be strictly increasing");
  }
  int segments = static_cast<int>(boundaries.size()) - 1;
  require(segments <= N, Err::TooManySegments,
          "plan has " + std::to_string(segments) + " segments, budget is " + std::to_string(N));
  return SegmentPlan{T, std::move(boundaries)};
}

SelectionPolicy parse_policy(const std::string& name) {
  if (name == "uniform") return SelectionPolicy::Uniform;
  if (name == "roec") return SelectionPolicy::Roec;
  if (name == "cm") return SelectionPolicy::Cm;
  if (name == "hybrid") return SelectionPolicy::Hybrid;
  fail(Err::BadConfig, "unknown selection policy '" + name + "'");
}

const char* policy_name(SelectionPolicy p) {
  switch (p) {
    case SelectionPolicy::Uniform: return "uniform";
    case SelectionPolicy::Roec: return "roec";
    case SelectionPolicy::Cm: return "cm";
    case SelectionPolicy::Hybrid: return "hybrid";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  require(1 <= N && N <= T && T <= L, Err::BadConfig, "need 1 <= N <= T <= L");
  require(P >= 1, Err::BadConfig, "prompt length must be positive");
  require(dim >= 2, Err::BadConfig, "model dim must be at least 2");
  require(group_size >= 2, Err::BadConfig, "group size must be at least 2");
  require(batch_prompts >= 1, Err::BadConfig, "batch must contain at least one prompt");
  require(iterations >= 0, Err::BadConfig, "iterations must be non-negative");
  // zero is allowed: a frozen-parameter run is a useful control
  require(learning_rate >= 0.0, Err::BadConfig, "learning rate must be non-negative");
  require(clip_eps > 0.0 && clip_eps < 1.0, Err::BadConfig, "clip epsilon must lie in (0,1)");
  require(clip_norm > 0.0, Err::BadConfig, "gradient-norm clip must be positive");
  require(kl_beta >= 0.0, Err::BadConfig, "KL coefficient must be non-negative");
  require(adv_eps > 0.0, Err::BadConfig, "advantage epsilon must be positive");
  require(margin_eps > 0.0, Err::BadConfig, "margin epsilon must be positive");
  require(roec_sigma_mult > 0.0, Err::BadConfig, "sigma multiplier must be positive");
  require(temperature > 0.0, Err::BadConfig, "temperature must be positive");
  require(adam_beta1 > 0.0 && adam_beta1 < 1.0, Err::BadConfig, "adam beta1 must lie in (0,1)");
  require(adam_beta2 > 0.0 && adam_beta2 < 1.0, Err::BadConfig, "adam beta2 must lie in (0,1)");
  require(adam_eps > 0.0, Err::BadConfig, "adam epsilon must be positive");
  require(eval_every >= 0 && eval_count >= 1, Err::BadConfig, "bad eval cadence");
  require(checkpoint_every >= 0, Err::BadConfig, "bad checkpoint cadence");
  require(train_pool >= 0, Err::BadConfig, "train pool must be non-negative");
  Vocab v(vocab);  // validates the symbol table itself
}

}  // namespace atpo
