#include "atpo/model.hpp"

#include <cmath>

#include "atpo/rng.hpp"

namespace atpo {

namespace {

constexpr double kLnEps = 1e-5;

struct Layout {
  std::size_t tok, pos, wq, wk, wv, wo, ln1g, ln1b, w1, b1, w2, b2, ln2g, ln2b, wout, total;
};

Layout layout_of(const ModelDims& dims) {
  const std::size_t V = static_cast<std::size_t>(dims.vocab);
  const std::size_t S = static_cast<std::size_t>(dims.seq_len());
  const std::size_t d = static_cast<std::size_t>(dims.embed);
  const std::size_t h = static_cast<std::size_t>(dims.hidden());
  Layout l{};
  std::size_t off = 0;
  l.tok = off;  off += V * d;
  l.pos = off;  off += S * d;
  l.wq = off;   off += d * d;
  l.wk = off;   off += d * d;
  l.wv = off;   off += d * d;
  l.wo = off;   off += d * d;
  l.ln1g = off; off += d;
  l.ln1b = off; off += d;
  l.w1 = off;   off += d * h;
  l.b1 = off;   off += h;
  l.w2 = off;   off += h * d;
  l.b2 = off;   off += d;
  l.ln2g = off; off += d;
  l.ln2b = off; off += d;
  l.wout = off; off += d * V;
  l.total = off;
  return l;
}

}  // namespace

ModelParams::ModelParams(ModelDims dims) : dims_(dims) {
  require(dims.vocab >= 4 && dims.prompt_len >= 1 && dims.completion_len >= 1 && dims.embed >= 2,
          Err::BadShape, "invalid model dims");
  data_.assign(layout_of(dims).total, 0.0);
}

std::size_t ModelParams::param_count(ModelDims dims) { return layout_of(dims).total; }

void ModelParams::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

#define ATPO_MAT_VIEW(name, offset_field, rows_expr, cols_expr)                               \
  Eigen::Map<Mat> ModelParams::name() {                                                       \
    const Layout l = layout_of(dims_);                                                        \
    return Eigen::Map<Mat>(data_.data() + l.offset_field, (rows_expr), (cols_expr));          \
  }                                                                                           \
  Eigen::Map<const Mat> ModelParams::name() const {                                           \
    const Layout l = layout_of(dims_);                                                        \
    return Eigen::Map<const Mat>(data_.data() + l.offset_field, (rows_expr), (cols_expr));    \
  }

#define ATPO_VEC_VIEW(name, offset_field, size_expr)                                          \
  Eigen::Map<Eigen::VectorXd> ModelParams::name() {                                           \
    const Layout l = layout_of(dims_);                                                        \
    return Eigen::Map<Eigen::VectorXd>(data_.data() + l.offset_field, (size_expr));           \
  }                                                                                           \
  Eigen::Map<const Eigen::VectorXd> ModelParams::name() const {                               \
    const Layout l = layout_of(dims_);                                                        \
    return Eigen::Map<const Eigen::VectorXd>(data_.data() + l.offset_field, (size_expr));     \
  }

ATPO_MAT_VIEW(tok_emb, tok, dims_.vocab, dims_.embed)
ATPO_MAT_VIEW(pos_emb, pos, dims_.seq_len(), dims_.embed)
ATPO_MAT_VIEW(wq, wq, dims_.embed, dims_.embed)
ATPO_MAT_VIEW(wk, wk, dims_.embed, dims_.embed)
ATPO_MAT_VIEW(wv, wv, dims_.embed, dims_.embed)
ATPO_MAT_VIEW(wo, wo, dims_.embed, dims_.embed)
ATPO_VEC_VIEW(ln1_gain, ln1g, dims_.embed)
ATPO_VEC_VIEW(ln1_bias, ln1b, dims_.embed)
ATPO_MAT_VIEW(w1, w1, dims_.embed, dims_.hidden())
ATPO_VEC_VIEW(b1, b1, dims_.hidden())
ATPO_MAT_VIEW(w2, w2, dims_.hidden(), dims_.embed)
ATPO_VEC_VIEW(b2, b2, dims_.embed)
ATPO_VEC_VIEW(ln2_gain, ln2g, dims_.embed)
ATPO_VEC_VIEW(ln2_bias, ln2b, dims_.embed)
ATPO_MAT_VIEW(wout, wout, dims_.embed, dims_.vocab)

#undef ATPO_MAT_VIEW
#undef ATPO_VEC_VIEW

ModelParams ModelParams::init(std::uint64_t seed, ModelDims dims) {
  ModelParams p(dims);
  Rng rng(seed, /*stream*/ 0x1417);
  auto fill_normal = [&](Eigen::Map<Mat> m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = 0.02 * rng.next_normal();
    }
  };
  fill_normal(p.tok_emb());
  fill_normal(p.pos_emb());
  fill_normal(p.wq());
  fill_normal(p.wk());
  fill_normal(p.wv());
  fill_normal(p.wo());
  p.ln1_gain().setOnes();
  fill_normal(p.w1());
  fill_normal(p.w2());
  p.ln2_gain().setOnes();
  fill_normal(p.wout());
  return p;
}

Eigen::VectorXd softmax_row(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

double log_softmax_at(const Eigen::VectorXd& logits, int index) {
  const double m = logits.maxCoeff();
  const double lse = std::log((logits.array() - m).exp().sum());
  return logits(index) - m - lse;
}

namespace {

struct Cache {
  Mat x0, xhat1, h1, q, k, v, attn, ctx, x1, xhat2, h2, f, x2, logits;
  Eigen::VectorXd inv_std1, inv_std2;
};

// y = gain .* (x - mean)/sqrt(var + eps) + bias, per row
void layer_norm(const Mat& x, Eigen::Map<const Eigen::VectorXd> gain,
                Eigen::Map<const Eigen::VectorXd> bias, Mat& xhat, Eigen::VectorXd& inv_std,
                Mat& out) {
  const Eigen::Index S = x.rows(), d = x.cols();
  xhat.resize(S, d);
  out.resize(S, d);
  inv_std.resize(S);
  for (Eigen::Index i = 0; i < S; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().sum() / static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLnEps);
    inv_std(i) = is;
    xhat.row(i) = ((x.row(i).array() - mean) * is).matrix();
    out.row(i) = xhat.row(i).cwiseProduct(gain.transpose()) + bias.transpose();
  }
}

void layer_norm_backward(const Mat& dy, const Mat& xhat, const Eigen::VectorXd& inv_std,
                         Eigen::Map<const Eigen::VectorXd> gain, Mat& dx,
                         Eigen::Map<Eigen::VectorXd> dgain, Eigen::Map<Eigen::VectorXd> dbias) {
  const Eigen::Index S = dy.rows(), d = dy.cols();
  dx.resize(S, d);
  for (Eigen::Index i = 0; i < S; ++i) {
    Eigen::RowVectorXd dxhat = dy.row(i).cwiseProduct(gain.transpose());
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
    dx.row(i) = (inv_std(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2)).matrix();
    dgain += dy.row(i).cwiseProduct(xhat.row(i)).transpose();
    dbias += dy.row(i).transpose();
  }
}

void forward_impl(const ModelParams& p, const std::vector<Token>& tokens, Cache& c) {
  const ModelDims& dims = p.dims();
  const Eigen::Index S = dims.seq_len();
  require(static_cast<Eigen::Index>(tokens.size()) == S, Err::BadShape,
          "state length must be P + L");

  c.x0.resize(S, dims.embed);
  for (Eigen::Index i = 0; i < S; ++i) {
    const Token t = tokens[static_cast<std::size_t>(i)];
    require(t >= 0 && t < dims.vocab, Err::BadShape, "token id outside vocabulary");
    c.x0.row(i) = p.tok_emb().row(t) + p.pos_emb().row(i);
  }

  layer_norm(c.x0, p.ln1_gain(), p.ln1_bias(), c.xhat1, c.inv_std1, c.h1);

  c.q = c.h1 * p.wq();
  c.k = c.h1 * p.wk();
  c.v = c.h1 * p.wv();

  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.embed));
  Mat scores = (c.q * c.k.transpose()) * scale;
  c.attn.resize(S, S);
  for (Eigen::Index i = 0; i < S; ++i) {
    c.attn.row(i) = softmax_row(scores.row(i).transpose()).transpose();
  }
  c.ctx = c.attn * c.v;
  c.x1 = c.x0 + c.ctx * p.wo();

  layer_norm(c.x1, p.ln2_gain(), p.ln2_bias(), c.xhat2, c.inv_std2, c.h2);

  c.f = ((c.h2 * p.w1()).rowwise() + p.b1().transpose()).array().tanh().matrix();
  c.x2 = c.x1 + ((c.f * p.w2()).rowwise() + p.b2().transpose()).eval();

  c.logits = c.x2 * p.wout();
}

void backward_impl(const ModelParams& p, const std::vector<Token>& tokens, const Cache& c,
                   const Mat& dlogits, ModelParams& grad) {
  const ModelDims& dims = p.dims();
  const Eigen::Index S = dims.seq_len();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.embed));

  grad.wout() += c.x2.transpose() * dlogits;
  Mat dx2 = dlogits * p.wout().transpose();

  // feed-forward block
  Mat dffn = dx2;  // gradient of the block output before the residual add
  grad.b2() += dffn.colwise().sum().transpose();
  grad.w2() += c.f.transpose() * dffn;
  Mat df = dffn * p.w2().transpose();
  Mat du = df.cwiseProduct((1.0 - c.f.array().square()).matrix());
  grad.b1() += du.colwise().sum().transpose();
  grad.w1() += c.h2.transpose() * du;
  Mat dh2 = du * p.w1().transpose();

  Mat dx1_ln;
  layer_norm_backward(dh2, c.xhat2, c.inv_std2, p.ln2_gain(), dx1_ln, grad.ln2_gain(),
                      grad.ln2_bias());
  Mat dx1 = dx2 + dx1_ln;

  // attention block
  Mat dattn_out = dx1;
  grad.wo() += c.ctx.transpose() * dattn_out;
  Mat dctx = dattn_out * p.wo().transpose();
  Mat dattn = dctx * c.v.transpose();
  Mat dv = c.attn.transpose() * dctx;

  Mat dscores(S, S);
  for (Eigen::Index i = 0; i < S; ++i) {
    const double dot = dattn.row(i).dot(c.attn.row(i));
    dscores.row(i) = (c.attn.row(i).array() * (dattn.row(i).array() - dot)).matrix();
  }
  Mat dq = dscores * c.k * scale;
  Mat dk = dscores.transpose() * c.q * scale;

  grad.wq() += c.h1.transpose() * dq;
  grad.wk() += c.h1.transpose() * dk;
  grad.wv() += c.h1.transpose() * dv;
  Mat dh1 = dq * p.wq().transpose() + dk * p.wk().transpose() + dv * p.wv().transpose();

  Mat dx0_ln;
  layer_norm_backward(dh1, c.xhat1, c.inv_std1, p.ln1_gain(), dx0_ln, grad.ln1_gain(),
                      grad.ln1_bias());
  Mat dx0 = dx1 + dx0_ln;

  for (Eigen::Index i = 0; i < S; ++i) {
    grad.tok_emb().row(tokens[static_cast<std::size_t>(i)]) += dx0.row(i);
    grad.pos_emb().row(i) += dx0.row(i);
  }
}

void check_masked(const SequenceState& state, int position) {
  require(position >= 0 && position < state.completion_len(), Err::BadShape,
          "completion position out of range");
  require(state.completion[static_cast<std::size_t>(position)] == Vocab::kMask,
          Err::PositionNotMasked,
          "completion position " + std::to_string(position) + " is already committed");
}

}  // namespace

Mat forward_logits(const ModelParams& params, const SequenceState& state) {
  Cache c;
  forward_impl(params, state.tokens(), c);
  return std::move(c.logits);
}

std::vector<double> log_probs_at(const ModelParams& params, const SequenceState& state,
                                 std::span<const int> positions, std::span<const Token> targets) {
  require(positions.size() == targets.size(), Err::ShapeMismatch,
          "positions and targets differ in length");
  for (int pos : positions) check_masked(state, pos);
  Cache c;
  forward_impl(params, state.tokens(), c);
  const int P = state.prompt_len();
  std::vector<double> out;
  out.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Eigen::VectorXd row = c.logits.row(P + positions[i]).transpose();
    out.push_back(log_softmax_at(row, targets[i]));
  }
  return out;
}

ObjectiveFn nll_objective() {
  return [](double logp) { return ObjectiveEval{-logp, -1.0}; };
}

double loss_and_grad(const ModelParams& params, std::span<const StateTerms> batch,
                     ModelParams& grad) {
  require(grad.dims() == params.dims(), Err::ShapeMismatch, "gradient dims differ from params");
  double loss = 0.0;
  for (const StateTerms& st : batch) {
    if (st.terms.empty()) continue;
    for (const TokenTerm& term : st.terms) check_masked(st.state, term.position);

    const std::vector<Token> tokens = st.state.tokens();
    Cache c;
    forward_impl(params, tokens, c);

    const int P = st.state.prompt_len();
    Mat dlogits = Mat::Zero(c.logits.rows(), c.logits.cols());
    bool any = false;
    for (const TokenTerm& term : st.terms) {
      const Eigen::Index row = P + term.position;
      const Eigen::VectorXd logits_row = c.logits.row(row).transpose();
      const double logp = log_softmax_at(logits_row, term.target);
      const ObjectiveEval ev = term.objective ? term.objective(logp)
                                              : ObjectiveEval{-logp, -1.0};
      loss += term.weight * ev.value;
      const double coeff = term.weight * ev.dvalue_dlogp;
      if (coeff == 0.0) continue;
      any = true;
      const Eigen::VectorXd probs = softmax_row(logits_row);
      dlogits.row(row) -= coeff * probs.transpose();
      dlogits(row, term.target) += coeff;
    }
    if (any) backward_impl(params, tokens, c, dlogits, grad);
  }
  return loss;
}

}  // namespace atpo
