#include "atpo/model.hpp"

#include <cmath>

#include "doctest.h"
#include "grad_check.hpp"
#include "oracles.hpp"

using namespace atpo;

namespace {
const ModelDims kDims{14, 8, 16, 32};

SequenceState all_masked_state(const ModelDims& dims, Rng& rng) {
  SequenceState s;
  s.prompt.resize(static_cast<std::size_t>(dims.prompt_len));
  for (Token& t : s.prompt) {
    t = 2 + static_cast<Token>(rng.next_below(static_cast<std::uint64_t>(dims.vocab - 2)));
  }
  s.completion.assign(static_cast<std::size_t>(dims.completion_len), Vocab::kMask);
  return s;
}
}  // namespace

TEST_CASE("parameter count matches the shape list") {
  const int V = 14, P = 8, L = 16, d = 32, h = 4 * d, S = P + L;
  const std::size_t expected = static_cast<std::size_t>(
      V * d + S * d + 4 * d * d + 2 * d + d * h + h + h * d + d + 2 * d + d * V);
  CHECK(ModelParams::param_count(kDims) == expected);
  CHECK(ModelParams::param_count(kDims) == 14240);
}

TEST_CASE("init is deterministic in the seed") {
  const ModelParams a = ModelParams::init(7, kDims);
  const ModelParams b = ModelParams::init(7, kDims);
  const ModelParams c = ModelParams::init(8, kDims);
  CHECK(std::equal(a.flat().begin(), a.flat().end(), b.flat().begin()));
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a.flat()[i] != c.flat()[i];
  CHECK(differs);
}

TEST_CASE("snapshots are isolated from later mutation") {
  ModelParams params = ModelParams::init(3, kDims);
  const ParamSnapshot snap{params, SnapshotLabel::Ref};
  const std::vector<double> before(snap.params.flat().begin(), snap.params.flat().end());
  params.flat()[0] += 1.0;
  params.flat()[100] = -5.0;
  CHECK(std::equal(before.begin(), before.end(), snap.params.flat().begin()));
}

TEST_CASE("softmax rows are normalized even for adversarial logits") {
  Rng rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd logits(14);
    for (int i = 0; i < 14; ++i) logits(i) = (2.0 * rng.next_double() - 1.0) * 1e4;
    const Eigen::VectorXd p = softmax_row(logits);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-6);
    CHECK(p.minCoeff() >= 0.0);
    // log-softmax agrees with the direct log of softmax where it is finite
    int arg;
    p.maxCoeff(&arg);
    CHECK(std::abs(log_softmax_at(logits, arg) - std::log(p(arg))) <= 1e-9);
  }
}

TEST_CASE("zero parameters give uniform predictions") {
  const ModelParams zero(kDims);
  Rng rng(5);
  const SequenceState state = all_masked_state(kDims, rng);
  const Mat logits = forward_logits(zero, state);
  CHECK(logits.rows() == kDims.seq_len());
  CHECK(logits.cols() == kDims.vocab);
  CHECK(logits.cwiseAbs().maxCoeff() == 0.0);

  std::vector<int> positions{0, 5};
  std::vector<Token> targets{3, 9};
  const std::vector<double> lp = log_probs_at(zero, state, positions, targets);
  for (double v : lp) CHECK(v == doctest::Approx(-std::log(14.0)).epsilon(1e-12));
}

TEST_CASE("forward is deterministic and couples positions through attention") {
  const ModelParams params = ModelParams::init(11, kDims);
  Rng rng(6);
  SequenceState state = all_masked_state(kDims, rng);
  const Mat a = forward_logits(params, state);
  const Mat b = forward_logits(params, state);
  CHECK(a == b);

  // commit one slot; logits at other positions must move (attention coupling)
  state.completion[3] = 7;
  const Mat c = forward_logits(params, state);
  double moved = 0.0;
  for (int i = 0; i < kDims.seq_len(); ++i) {
    if (i == kDims.prompt_len + 3) continue;
    moved += (a.row(i) - c.row(i)).cwiseAbs().sum();
  }
  CHECK(moved > 1e-9);
}

TEST_CASE("log_probs_at: normalization, definitional consistency, masking") {
  const ModelParams params = ModelParams::init(13, kDims);
  Rng rng(7);
  SequenceState state = all_masked_state(kDims, rng);

  // full-vocabulary scan at one position sums to 1
  double total = 0.0;
  for (Token t = 0; t < kDims.vocab; ++t) {
    std::vector<int> pos{4};
    std::vector<Token> tgt{t};
    total += std::exp(log_probs_at(params, state, pos, tgt)[0]);
  }
  CHECK(std::abs(total - 1.0) <= 1e-6);

  // matches log of the forward softmax
  const Mat logits = forward_logits(params, state);
  const Eigen::VectorXd row = logits.row(kDims.prompt_len + 4).transpose();
  std::vector<int> pos{4};
  std::vector<Token> tgt{9};
  CHECK(std::abs(log_probs_at(params, state, pos, tgt)[0] - std::log(softmax_row(row)(9))) <=
        1e-12);

  state.completion[4] = 2;
  CHECK_THROWS_AS(log_probs_at(params, state, pos, tgt), Error);
}

TEST_CASE("loss_and_grad: zero weights, NLL at zero params") {
  const ModelParams zero(kDims);
  Rng rng(8);
  SequenceState state = all_masked_state(kDims, rng);

  StateTerms st;
  st.state = state;
  st.terms.push_back(TokenTerm{0, 5, 0.0, nll_objective()});
  ModelParams grad(kDims);
  std::vector<StateTerms> batch{st};
  CHECK(loss_and_grad(zero, batch, grad) == 0.0);
  double gnorm = 0.0;
  for (double v : grad.flat()) gnorm += std::abs(v);
  CHECK(gnorm == 0.0);

  batch[0].terms[0].weight = 1.0;
  CHECK(loss_and_grad(zero, batch, grad) == doctest::Approx(std::log(14.0)).epsilon(1e-12));
}

TEST_CASE("analytic gradients match centered finite differences") {
  for (std::uint64_t seed : {101, 202, 303}) {
    CHECK(oracle::max_grad_error(seed, kDims, 50) <= 1e-3);
  }
}
