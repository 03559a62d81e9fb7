#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "atpo/core.hpp"

namespace atpo {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelDims {
  int vocab = 14;
  int prompt_len = 6;
  int completion_len = 16;
  int embed = 32;

  int seq_len() const { return prompt_len + completion_len; }
  int hidden() const { return 4 * embed; }

  bool operator==(const ModelDims&) const = default;
};

/// All parameters of the denoiser in one flat buffer with named views:
/// token/position embeddings, a single bidirectional self-attention block,
/// a tanh feed-forward block, two layer norms, and the output projection.
/// The flat layout is the checkpoint order.
class ModelParams {
 public:
  explicit ModelParams(ModelDims dims);

  /// Deterministic init: embeddings and projections ~ N(0, 0.02^2) from a
  /// counter-based stream keyed by seed; layer-norm gains 1, biases 0.
  static ModelParams init(std::uint64_t seed, ModelDims dims);

  const ModelDims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void set_zero();

  // tensor views over the flat buffer, in checkpoint order
  Eigen::Map<Mat> tok_emb();
  Eigen::Map<Mat> pos_emb();
  Eigen::Map<Mat> wq();
  Eigen::Map<Mat> wk();
  Eigen::Map<Mat> wv();
  Eigen::Map<Mat> wo();
  Eigen::Map<Eigen::VectorXd> ln1_gain();
  Eigen::Map<Eigen::VectorXd> ln1_bias();
  Eigen::Map<Mat> w1();
  Eigen::Map<Eigen::VectorXd> b1();
  Eigen::Map<Mat> w2();
  Eigen::Map<Eigen::VectorXd> b2();
  Eigen::Map<Eigen::VectorXd> ln2_gain();
  Eigen::Map<Eigen::VectorXd> ln2_bias();
  Eigen::Map<Mat> wout();

  Eigen::Map<const Mat> tok_emb() const;
  Eigen::Map<const Mat> pos_emb() const;
  Eigen::Map<const Mat> wq() const;
  Eigen::Map<const Mat> wk() const;
  Eigen::Map<const Mat> wv() const;
  Eigen::Map<const Mat> wo() const;
  Eigen::Map<const Eigen::VectorXd> ln1_gain() const;
  Eigen::Map<const Eigen::VectorXd> ln1_bias() const;
  Eigen::Map<const Mat> w1() const;
  Eigen::Map<const Eigen::VectorXd> b1() const;
  Eigen::Map<const Mat> w2() const;
  Eigen::Map<const Eigen::VectorXd> b2() const;
  Eigen::Map<const Eigen::VectorXd> ln2_gain() const;
  Eigen::Map<const Eigen::VectorXd> ln2_bias() const;
  Eigen::Map<const Mat> wout() const;

  static std::size_t param_count(ModelDims dims);

 private:
  ModelDims dims_;
  std::vector<double> data_;
};

enum class SnapshotLabel { Current, Old, Ref };

/// A frozen deep copy of the parameters. Treated as immutable after creation.
struct ParamSnapshot {
  ModelParams params;
  SnapshotLabel label = SnapshotLabel::Current;
};

/// Numerically stable row softmax (max subtraction).
Eigen::VectorXd softmax_row(const Eigen::VectorXd& logits);

/// log softmax(logits)[index], stable for logits of any magnitude.
double log_softmax_at(const Eigen::VectorXd& logits, int index);

/// Logits at every sequence position, (P+L) x V. Deterministic in
/// (params, state).
Mat forward_logits(const ModelParams& params, const SequenceState& state);

/// Log-probabilities of the given targets at the given completion positions,
/// which must all be masked in the state. Errors: PositionNotMasked.
std::vector<double> log_probs_at(const ModelParams& params, const SequenceState& state,
                                 std::span<const int> positions, std::span<const Token> targets);

/// Value and d(value)/d(logp) of a per-token objective at the model's
/// log-probability for the token.
struct ObjectiveEval {
  double value = 0.0;
  double dvalue_dlogp = 0.0;
};
using ObjectiveFn = std::function<ObjectiveEval(double)>;

/// value = -logp: plain negative log-likelihood.
ObjectiveFn nll_objective();

struct TokenTerm {
  int position = 0;  // completion index; must be masked in the state
  Token target = 0;
  double weight = 1.0;
  ObjectiveFn objective;  // defaults to NLL when empty
};

/// One masked input with the token terms scored against it. All terms share
/// one forward/backward pass.
struct StateTerms {
  SequenceState state;
  std::vector<TokenTerm> terms;
};

/// loss = sum over terms of weight * objective(logp). Accumulates d(loss)/d(params)
/// into grad, which must have the same dims. Errors: PositionNotMasked,
/// ShapeMismatch.
double loss_and_grad(const ModelParams& params, std::span<const StateTerms> batch,
                     ModelParams& grad);

}  // namespace atpo
