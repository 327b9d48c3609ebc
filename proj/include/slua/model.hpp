#ifndef SLUA_MODEL_HPP
#define SLUA_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "slua/common.hpp"
#include "slua/corpus.hpp"

namespace slua {

struct Hyperparams {
  int dim = 256;
  int win = 3;
  int k = 5;
  double alpha = 0.3;
  bool use_s2t = true;
  bool use_t2s = true;
  bool use_agreement = true;

  void validate() const;

  // Weight actually applied to the disagreement term.
  double agreement_weight() const { return use_agreement ? alpha : 0.0; }
};

struct LossBreakdown {
  double s2t = 0.0;
  double t2s = 0.0;
  double disagree = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    s2t += o.s2t;
    t2s += o.t2s;
    disagree += o.disagree;
    total += o.total;
    return *this;
  }

  LossBreakdown& operator*=(double w) {
    s2t *= w;
    t2s *= w;
    disagree *= w;
    total *= w;
    return *this;
  }
};

/// The only trainable parameters: one embedding row per vocabulary entry.
template <typename Scalar>
struct EmbeddingTable {
  Matrix<Scalar> src;
  Matrix<Scalar> tgt;

  Eigen::Index dim() const { return src.cols(); }

  template <typename Other>
  EmbeddingTable<Other> cast() const {
    return {src.template cast<Other>(), tgt.template cast<Other>()};
  }

  bool all_finite() const { return src.allFinite() && tgt.allFinite(); }
};

/// Soft attention maps for one sentence pair plus the attention contexts.
///
/// `s2t` is |s| x |t| with row i the distribution of source query i over
/// target positions; `t2s` is |t| x |s|. `src_context` row i is the expected
/// target representation under s2t row i, `tgt_context` row j likewise for t2s.
template <typename Scalar>
struct Attention {
  Matrix<Scalar> s2t;
  Matrix<Scalar> t2s;
  Matrix<Scalar> src_context;
  Matrix<Scalar> tgt_context;
};

/// Uniform Glorot initialization in [-sqrt(6/(rows+d)), +sqrt(6/(rows+d))].
template <typename Scalar = float>
Matrix<Scalar> xavier_init(Eigen::Index rows, Eigen::Index dim, std::uint64_t seed) {
  if (rows < 1 || dim < 1) throw InputError("xavier_init: rows and dim must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + dim));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<Scalar> m(rows, dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  return m;
}

template <typename Scalar>
Matrix<Scalar> gather_rows(const Matrix<Scalar>& table, std::span<const WordId> ids) {
  Matrix<Scalar> out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
  return out;
}

/// Window mean-pooling plus residual:
///   out_i = (1/win) * sum_{|j-i| <= (win-1)/2} pad(e_j) + e_i
/// with zero padding outside the sentence and a constant divisor. The
/// operator is a symmetric banded matrix, so it is its own adjoint.
template <typename Derived>
Matrix<typename Derived::Scalar> contextualize(const Eigen::MatrixBase<Derived>& rows, int win) {
  using Scalar = typename Derived::Scalar;
  if (win < 1 || win % 2 == 0) throw InputError("contextualize: window must be odd and >= 1");
  const Eigen::Index n = rows.rows();
  const Eigen::Index half = (win - 1) / 2;
  const Scalar inv = Scalar(1) / static_cast<Scalar>(win);
  Matrix<Scalar> out = rows;
  RowVector<Scalar> acc(rows.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    acc.setZero();
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - half);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + half);
    for (Eigen::Index j = lo; j <= hi; ++j) acc += rows.row(j);
    out.row(i) += inv * acc;
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> contextualize_ids(const Matrix<Scalar>& table, std::span<const WordId> ids, int win) {
  return contextualize(gather_rows(table, ids), win);
}

/// Numerically safe softmax over each row.
template <typename Derived>
Matrix<typename Derived::Scalar> row_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

template <typename DerivedX, typename DerivedY>
Attention<typename DerivedX::Scalar> attention_forward(const Eigen::MatrixBase<DerivedX>& x,
                                                       const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  if (x.rows() < 1 || y.rows() < 1) throw InputError("attention_forward: empty sentence");
  if (x.cols() != y.cols()) throw InputError("attention_forward: dimension mismatch");
  Attention<Scalar> att;
  const Matrix<Scalar> logits = x * y.transpose();
  att.s2t = row_softmax(logits);
  att.t2s = row_softmax(logits.transpose());
  att.src_context = att.s2t * y;
  att.tgt_context = att.t2s * x;
  return att;
}

namespace detail {

// log(sigmoid(z)) without overflow.
inline double log_sigmoid(double z) {
  return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

/// sigma(<q, c>).
template <typename DerivedQ, typename DerivedC>
double align_score(const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedC>& c) {
  return detail::sigmoid(static_cast<double>(q.dot(c)));
}

/// Contrastive loss for one attention direction, averaged over queries.
///
/// `negatives` holds k rows per query: row i*k + r is the r-th negative for
/// query i. Per query the loss is
///   -log( A(q_i, c_i) / (A(q_i, c_i) + sum_r A(n_ir, c_i)) ),  A = align_score,
/// evaluated in log space. When gradient outputs are supplied they receive
/// `scale` times the gradient of the mean loss.
template <typename Scalar>
double nce_direction(const Matrix<Scalar>& queries, const Matrix<Scalar>& contexts,
                     const Matrix<Scalar>& negatives, int k, double scale = 1.0,
                     Matrix<Scalar>* d_queries = nullptr, Matrix<Scalar>* d_contexts = nullptr,
                     Matrix<Scalar>* d_negatives = nullptr) {
  if (k < 1) throw InputError("nce: at least one negative is required");
  const Eigen::Index n = queries.rows();
  if (contexts.rows() != n || negatives.rows() != n * k)
    throw InputError("nce: expected " + std::to_string(n * k) + " negatives, got " +
                     std::to_string(negatives.rows()));
  if (n == 0) return 0.0;
  const bool grad = d_queries != nullptr;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> log_align(static_cast<std::size_t>(k) + 1);
  std::vector<double> dots(static_cast<std::size_t>(k) + 1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto c = contexts.row(i);
    dots[0] = static_cast<double>(queries.row(i).dot(c));
    for (int r = 0; r < k; ++r) dots[static_cast<std::size_t>(r) + 1] = static_cast<double>(negatives.row(i * k + r).dot(c));
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < dots.size(); ++r) {
      log_align[r] = detail::log_sigmoid(dots[r]);
      mx = std::max(mx, log_align[r]);
    }
    double sum = 0.0;
    for (double la : log_align) sum += std::exp(la - mx);
    const double log_denom = mx + std::log(sum);
    total += log_denom - log_align[0];
    if (!grad) continue;

    // d/du = (1 - s(u)) (s(u)/D - 1),  d/dv_r = (1 - s(v_r)) s(v_r)/D
    const double w = scale * inv_n;
    const double g_pos = w * detail::sigmoid(-dots[0]) * (std::exp(log_align[0] - log_denom) - 1.0);
    d_queries->row(i) += static_cast<Scalar>(g_pos) * c;
    d_contexts->row(i) += static_cast<Scalar>(g_pos) * queries.row(i);
    for (int r = 0; r < k; ++r) {
      const std::size_t slot = static_cast<std::size_t>(r) + 1;
      const double g = w * detail::sigmoid(-dots[slot]) * std::exp(log_align[slot] - log_denom);
      d_negatives->row(i * k + r) += static_cast<Scalar>(g) * c;
      d_contexts->row(i) += static_cast<Scalar>(g) * negatives.row(i * k + r);
    }
  }
  return total * inv_n;
}

template <typename Scalar>
double nce_loss_direction(const Matrix<Scalar>& queries, const Matrix<Scalar>& contexts,
                          const Matrix<Scalar>& negatives, int k) {
  return nce_direction(queries, contexts, negatives, k);
}

/// sum_ij (s2t_ij - t2s_ji)^2
template <typename Scalar>
double agreement_loss(const Matrix<Scalar>& s2t, const Matrix<Scalar>& t2s) {
  if (s2t.rows() != t2s.cols() || s2t.cols() != t2s.rows())
    throw InputError("agreement_loss: shape mismatch");
  return (s2t - t2s.transpose()).template cast<double>().squaredNorm();
}

template <typename Scalar>
double agreement_loss(const Attention<Scalar>& att) {
  return agreement_loss(att.s2t, att.t2s);
}

/// Gradients of the pair objective with respect to its dense inputs.
template <typename Scalar>
struct PairGradient {
  Matrix<Scalar> x;
  Matrix<Scalar> y;
  Matrix<Scalar> src_negatives;
  Matrix<Scalar> tgt_negatives;

  void resize_like(const Matrix<Scalar>& x_in, const Matrix<Scalar>& y_in, Eigen::Index src_neg,
                   Eigen::Index tgt_neg) {
    x.setZero(x_in.rows(), x_in.cols());
    y.setZero(y_in.rows(), y_in.cols());
    src_negatives.setZero(src_neg, x_in.cols());
    tgt_negatives.setZero(tgt_neg, x_in.cols());
  }
};

namespace detail {

// In-place softmax Jacobian-vector product: d_logits = p * (d_p - <p, d_p>).
template <typename Scalar>
void softmax_backward(const Matrix<Scalar>& probs, Matrix<Scalar>& grad) {
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const Scalar inner = probs.row(i).dot(grad.row(i));
    grad.row(i) = (probs.row(i).array() * (grad.row(i).array() - inner)).matrix();
  }
}

}  // namespace detail

/// Loss of one sentence pair given its contextual representations.
///
/// `src_negatives` are source-side representations contrasted against the
/// s2t contexts (k rows per source position); `tgt_negatives` likewise for
/// t2s. When `grad` is non-null it is resized and filled with `scale` times
/// the gradient of `total`.
template <typename Scalar>
LossBreakdown pair_objective(const Matrix<Scalar>& x, const Matrix<Scalar>& y,
                             const Matrix<Scalar>& src_negatives,
                             const Matrix<Scalar>& tgt_negatives, const Hyperparams& hp,
                             PairGradient<Scalar>* grad = nullptr, double scale = 1.0) {
  const Attention<Scalar> att = attention_forward(x, y);
  const double alpha = hp.agreement_weight();

  LossBreakdown loss;
  if (grad) grad->resize_like(x, y, src_negatives.rows(), tgt_negatives.rows());

  // Upstream gradients into the attention maps and contexts.
  Matrix<Scalar> d_src_ctx, d_tgt_ctx;
  if (grad) {
    d_src_ctx.setZero(att.src_context.rows(), att.src_context.cols());
    d_tgt_ctx.setZero(att.tgt_context.rows(), att.tgt_context.cols());
  }

  if (hp.use_s2t) {
    loss.s2t = nce_direction(x, att.src_context, src_negatives, hp.k, scale,
                             grad ? &grad->x : nullptr, grad ? &d_src_ctx : nullptr,
                             grad ? &grad->src_negatives : nullptr);
  }
  if (hp.use_t2s) {
    loss.t2s = nce_direction(y, att.tgt_context, tgt_negatives, hp.k, scale,
                             grad ? &grad->y : nullptr, grad ? &d_tgt_ctx : nullptr,
                             grad ? &grad->tgt_negatives : nullptr);
  }
  loss.disagree = agreement_loss(att);
  loss.total = (hp.use_s2t ? loss.s2t : 0.0) + (hp.use_t2s ? loss.t2s : 0.0) + alpha * loss.disagree;
  if (!grad) return loss;

  const bool need_s2t = hp.use_s2t || alpha != 0.0;
  const bool need_t2s = hp.use_t2s || alpha != 0.0;
  if (!need_s2t && !need_t2s) return loss;

  // context = map * values
  Matrix<Scalar> d_s2t = Matrix<Scalar>::Zero(att.s2t.rows(), att.s2t.cols());
  Matrix<Scalar> d_t2s = Matrix<Scalar>::Zero(att.t2s.rows(), att.t2s.cols());
  if (hp.use_s2t) {
    d_s2t.noalias() += d_src_ctx * y.transpose();
    grad->y.noalias() += att.s2t.transpose() * d_src_ctx;
  }
  if (hp.use_t2s) {
    d_t2s.noalias() += d_tgt_ctx * x.transpose();
    grad->x.noalias() += att.t2s.transpose() * d_tgt_ctx;
  }
  if (alpha != 0.0) {
    const Matrix<Scalar> diff =
        static_cast<Scalar>(2.0 * alpha * scale) * (att.s2t - att.t2s.transpose());
    d_s2t += diff;
    d_t2s -= diff.transpose();
  }

  detail::softmax_backward(att.s2t, d_s2t);
  detail::softmax_backward(att.t2s, d_t2s);
  // Both maps are softmaxes of the same logits x y^T, one over each axis.
  const Matrix<Scalar> d_logits = d_s2t + d_t2s.transpose();
  grad->x.noalias() += d_logits * y;
  grad->y.noalias() += d_logits.transpose() * x;
  return loss;
}

/// A negative sample: position `pos` of the same-side sentence of
/// `context[pair]`.
struct NegativeRef {
  std::uint32_t pair = 0;
  std::uint32_t pos = 0;

  friend bool operator==(const NegativeRef&, const NegativeRef&) = default;
};

/// Negatives for one sentence pair, k per query position.
struct NegativeSamples {
  int k = 0;
  std::vector<NegativeRef> src;  // |s| * k source positions for s2t
  std::vector<NegativeRef> tgt;  // |t| * k target positions for t2s
};

namespace detail {

template <typename Scalar>
class ContextCache {
 public:
  ContextCache(std::span<const SentencePair> context, const EmbeddingTable<Scalar>& params, int win)
      : context_(context), params_(params), win_(win) {}

  const Matrix<Scalar>& src(std::uint32_t p) { return get(src_, p, true); }
  const Matrix<Scalar>& tgt(std::uint32_t p) { return get(tgt_, p, false); }

 private:
  const Matrix<Scalar>& get(std::unordered_map<std::uint32_t, Matrix<Scalar>>& cache, std::uint32_t p,
                            bool source) {
    if (p >= context_.size()) throw InputError("negative sample refers to a pair outside the context");
    auto it = cache.find(p);
    if (it == cache.end()) {
      const auto& ids = source ? context_[p].src : context_[p].tgt;
      it = cache.emplace(p, contextualize_ids(source ? params_.src : params_.tgt, ids, win_)).first;
    }
    return it->second;
  }

  std::span<const SentencePair> context_;
  const EmbeddingTable<Scalar>& params_;
  int win_;
  std::unordered_map<std::uint32_t, Matrix<Scalar>> src_;
  std::unordered_map<std::uint32_t, Matrix<Scalar>> tgt_;
};

template <typename Scalar>
Matrix<Scalar> gather_negatives(ContextCache<Scalar>& cache, std::span<const NegativeRef> refs,
                                bool source, Eigen::Index dim) {
  Matrix<Scalar> out(static_cast<Eigen::Index>(refs.size()), dim);
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const Matrix<Scalar>& reps = source ? cache.src(refs[r].pair) : cache.tgt(refs[r].pair);
    if (refs[r].pos >= reps.rows()) throw InputError("negative sample position out of range");
    out.row(static_cast<Eigen::Index>(r)) = reps.row(refs[r].pos);
  }
  return out;
}

inline void check_negatives(const SentencePair& pair, const Hyperparams& hp, const NegativeSamples& neg) {
  if (hp.use_s2t && (neg.k != hp.k || neg.src.size() != pair.src.size() * static_cast<std::size_t>(hp.k)))
    throw InputError("negatives: expected k=" + std::to_string(hp.k) + " per source position");
  if (hp.use_t2s && (neg.k != hp.k || neg.tgt.size() != pair.tgt.size() * static_cast<std::size_t>(hp.k)))
    throw InputError("negatives: expected k=" + std::to_string(hp.k) + " per target position");
}

// Accumulates the embedding-space gradient of one side: the adjoint of
// contextualize (itself) followed by a scatter onto word rows.
template <typename Scalar>
void scatter_rows(const Matrix<Scalar>& d_reps, std::span<const WordId> ids, int win,
                  Matrix<Scalar>& table_grad) {
  const Matrix<Scalar> d_emb = contextualize(d_reps, win);
  for (std::size_t i = 0; i < ids.size(); ++i) table_grad.row(ids[i]) += d_emb.row(static_cast<Eigen::Index>(i));
}

}  // namespace detail

/// Combined objective for one pair. Negative references index into
/// `context`, which usually is the batch containing `pair`.
template <typename Scalar>
LossBreakdown total_loss(const SentencePair& pair, std::span<const SentencePair> context,
                         const EmbeddingTable<Scalar>& params, const Hyperparams& hp,
                         const NegativeSamples& negatives) {
  detail::check_negatives(pair, hp, negatives);
  detail::ContextCache<Scalar> cache(context, params, hp.win);
  const Matrix<Scalar> x = contextualize_ids(params.src, std::span<const WordId>(pair.src), hp.win);
  const Matrix<Scalar> y = contextualize_ids(params.tgt, std::span<const WordId>(pair.tgt), hp.win);
  const Matrix<Scalar> src_neg =
      hp.use_s2t ? detail::gather_negatives(cache, negatives.src, true, params.dim()) : Matrix<Scalar>(0, params.dim());
  const Matrix<Scalar> tgt_neg =
      hp.use_t2s ? detail::gather_negatives(cache, negatives.tgt, false, params.dim()) : Matrix<Scalar>(0, params.dim());
  return pair_objective(x, y, src_neg, tgt_neg, hp);
}

/// Gradient of `total_loss` with respect to both embedding tables. Rows of
/// words that appear neither in the pair nor among its negatives are zero.
template <typename Scalar>
EmbeddingTable<Scalar> backward(const SentencePair& pair, std::span<const SentencePair> context,
                                const EmbeddingTable<Scalar>& params, const Hyperparams& hp,
                                const NegativeSamples& negatives, LossBreakdown* loss = nullptr) {
  detail::check_negatives(pair, hp, negatives);
  detail::ContextCache<Scalar> cache(context, params, hp.win);
  const Matrix<Scalar> x = contextualize_ids(params.src, std::span<const WordId>(pair.src), hp.win);
  const Matrix<Scalar> y = contextualize_ids(params.tgt, std::span<const WordId>(pair.tgt), hp.win);
  const Matrix<Scalar> src_neg =
      hp.use_s2t ? detail::gather_negatives(cache, negatives.src, true, params.dim()) : Matrix<Scalar>(0, params.dim());
  const Matrix<Scalar> tgt_neg =
      hp.use_t2s ? detail::gather_negatives(cache, negatives.tgt, false, params.dim()) : Matrix<Scalar>(0, params.dim());

  PairGradient<Scalar> g;
  const LossBreakdown value = pair_objective(x, y, src_neg, tgt_neg, hp, &g);
  if (loss) *loss = value;

  EmbeddingTable<Scalar> out{Matrix<Scalar>::Zero(params.src.rows(), params.src.cols()),
                             Matrix<Scalar>::Zero(params.tgt.rows(), params.tgt.cols())};
  detail::scatter_rows(g.x, std::span<const WordId>(pair.src), hp.win, out.src);
  detail::scatter_rows(g.y, std::span<const WordId>(pair.tgt), hp.win, out.tgt);

  // Negatives: route each row's gradient to its sentence position, then
  // through that sentence's pooling.
  auto route = [&](std::span<const NegativeRef> refs, const Matrix<Scalar>& d_neg, bool source) {
    std::unordered_map<std::uint32_t, Matrix<Scalar>> per_pair;
    for (std::size_t r = 0; r < refs.size(); ++r) {
      const auto& ids = source ? context[refs[r].pair].src : context[refs[r].pair].tgt;
      auto [it, inserted] = per_pair.try_emplace(refs[r].pair);
      if (inserted) it->second.setZero(static_cast<Eigen::Index>(ids.size()), params.dim());
      it->second.row(refs[r].pos) += d_neg.row(static_cast<Eigen::Index>(r));
    }
    for (const auto& [p, d_reps] : per_pair) {
      const auto& ids = source ? context[p].src : context[p].tgt;
      detail::scatter_rows(d_reps, std::span<const WordId>(ids), hp.win, source ? out.src : out.tgt);
    }
  };
  if (hp.use_s2t) route(negatives.src, g.src_negatives, true);
  if (hp.use_t2s) route(negatives.tgt, g.tgt_negatives, false);
  return out;
}

}  // namespace slua

#endif  // SLUA_MODEL_HPP
