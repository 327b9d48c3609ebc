#include "slua/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <thread>

#include "slua/decode.hpp"

namespace slua {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::mt19937_64 pair_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t pair_index) {
  return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ epoch) ^ pair_index));
}

EmbeddingTable<float> initial_params(std::size_t src_vocab, std::size_t tgt_vocab, int dim, std::uint64_t seed) {
  return {xavier_init<float>(static_cast<Eigen::Index>(src_vocab), dim, splitmix64(seed ^ 0x5352434bULL)),
          xavier_init<float>(static_cast<Eigen::Index>(tgt_vocab), dim, splitmix64(seed ^ 0x5447544bULL))};
}

std::vector<NegativeRef> sample_side_negatives(std::span<const std::size_t> lengths, std::size_t pair, int k,
                                               NegativeScope scope, std::mt19937_64& rng) {
  const std::size_t n = lengths[pair];
  std::vector<NegativeRef> out;
  out.reserve(n * static_cast<std::size_t>(k));

  std::vector<std::size_t> offsets;  // built on first batch-scope draw
  std::size_t total = 0;
  auto batch_draw = [&](std::size_t pos) -> NegativeRef {
    if (offsets.empty()) {
      offsets.resize(lengths.size() + 1, 0);
      std::partial_sum(lengths.begin(), lengths.end(), offsets.begin() + 1);
      total = offsets.back();
    }
    const std::size_t self = offsets[pair] + pos;
    if (total < 2) return {static_cast<std::uint32_t>(pair), static_cast<std::uint32_t>(pos)};
    std::uniform_int_distribution<std::size_t> dist(0, total - 2);
    std::size_t flat = dist(rng);
    if (flat >= self) ++flat;
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
    const auto p = static_cast<std::size_t>(it - offsets.begin()) - 1;
    return {static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(flat - offsets[p])};
  };

  for (std::size_t i = 0; i < n; ++i) {
    for (int r = 0; r < k; ++r) {
      if (scope == NegativeScope::kSentence && n >= 2) {
        std::uniform_int_distribution<std::size_t> dist(0, n - 2);
        std::size_t j = dist(rng);
        if (j >= i) ++j;
        out.push_back({static_cast<std::uint32_t>(pair), static_cast<std::uint32_t>(j)});
      } else {
        out.push_back(batch_draw(i));
      }
    }
  }
  return out;
}

NegativeSamples sample_negatives(std::span<const SentencePair> batch, std::size_t pair, int k,
                                 NegativeScope scope, std::mt19937_64& rng) {
  if (k < 1) throw InputError("k must be >= 1");
  std::vector<std::size_t> src_len(batch.size()), tgt_len(batch.size());
  for (std::size_t p = 0; p < batch.size(); ++p) {
    src_len[p] = batch[p].src.size();
    tgt_len[p] = batch[p].tgt.size();
  }
  NegativeSamples out;
  out.k = k;
  out.src = sample_side_negatives(src_len, pair, k, scope, rng);
  out.tgt = sample_side_negatives(tgt_len, pair, k, scope, rng);
  return out;
}

// Gradient rows for the words a batch touched; slot[id] indexes `rows`.
struct Trainer::SparseGrad {
  std::vector<int>& slot;
  std::vector<WordId>& ids;
  Matrix<float> rows;
};

// Per-thread accumulation: gradients with respect to each batch sentence's
// contextual representations.
struct Trainer::Buffers {
  std::vector<Matrix<float>> dx, dy;
  LossBreakdown loss;
  std::ptrdiff_t bad_pair = -1;
};

Trainer::Trainer(EmbeddingTable<float> params, TrainConfig config)
    : params_(std::move(params)), config_(std::move(config)) {
  config_.validate();
  if (params_.src.cols() != config_.hp.dim || params_.tgt.cols() != config_.hp.dim)
    throw InputError("embedding dimension does not match config");
  if (config_.optimizer == Optimizer::kAdam) {
    m1_src_.setZero(params_.src.rows(), params_.src.cols());
    m2_src_.setZero(params_.src.rows(), params_.src.cols());
    m1_tgt_.setZero(params_.tgt.rows(), params_.tgt.cols());
    m2_tgt_.setZero(params_.tgt.rows(), params_.tgt.cols());
  }
  slot_src_.assign(static_cast<std::size_t>(params_.src.rows()), -1);
  slot_tgt_.assign(static_cast<std::size_t>(params_.tgt.rows()), -1);
}

void Trainer::accumulate(std::span<const SentencePair> batch, std::uint64_t epoch, std::size_t begin,
                         std::size_t end, Buffers& buf) const {
  // Contextual representations are recomputed per worker; they are cheap
  // relative to the attention products and keep workers independent.
  const auto& hp = config_.hp;
  const std::size_t B = batch.size();
  const double weight = 1.0 / static_cast<double>(B);
  const Eigen::Index d = params_.dim();

  std::vector<Matrix<float>> xs(B), ys(B);
  for (std::size_t p = 0; p < B; ++p) {
    xs[p] = contextualize_ids(params_.src, std::span<const WordId>(batch[p].src), hp.win);
    ys[p] = contextualize_ids(params_.tgt, std::span<const WordId>(batch[p].tgt), hp.win);
  }
  buf.dx.resize(B);
  buf.dy.resize(B);
  for (std::size_t p = 0; p < B; ++p) {
    buf.dx[p].setZero(xs[p].rows(), d);
    buf.dy[p].setZero(ys[p].rows(), d);
  }

  std::vector<std::size_t> src_len(B), tgt_len(B);
  for (std::size_t p = 0; p < B; ++p) {
    src_len[p] = batch[p].src.size();
    tgt_len[p] = batch[p].tgt.size();
  }

  Matrix<float> src_neg, tgt_neg;
  PairGradient<float> g;
  for (std::size_t p = begin; p < end; ++p) {
    auto rng = pair_rng(config_.seed, epoch, batch[p].index);
    const auto src_refs = sample_side_negatives(src_len, p, hp.k, config_.neg_scope, rng);
    const auto tgt_refs = sample_side_negatives(tgt_len, p, hp.k, config_.neg_scope, rng);
    src_neg.resize(hp.use_s2t ? static_cast<Eigen::Index>(src_refs.size()) : 0, d);
    tgt_neg.resize(hp.use_t2s ? static_cast<Eigen::Index>(tgt_refs.size()) : 0, d);
    for (Eigen::Index r = 0; r < src_neg.rows(); ++r) src_neg.row(r) = xs[src_refs[r].pair].row(src_refs[r].pos);
    for (Eigen::Index r = 0; r < tgt_neg.rows(); ++r) tgt_neg.row(r) = ys[tgt_refs[r].pair].row(tgt_refs[r].pos);

    LossBreakdown loss = pair_objective(xs[p], ys[p], src_neg, tgt_neg, hp, &g, weight);
    if (!std::isfinite(loss.total)) {
      buf.bad_pair = static_cast<std::ptrdiff_t>(batch[p].index);
      return;
    }
    loss *= weight;
    buf.loss += loss;
    buf.dx[p] += g.x;
    buf.dy[p] += g.y;
    for (Eigen::Index r = 0; r < src_neg.rows(); ++r) buf.dx[src_refs[r].pair].row(src_refs[r].pos) += g.src_negatives.row(r);
    for (Eigen::Index r = 0; r < tgt_neg.rows(); ++r) buf.dy[tgt_refs[r].pair].row(tgt_refs[r].pos) += g.tgt_negatives.row(r);
  }
}

void Trainer::apply(SparseGrad& grad, Matrix<float>& table, Matrix<float>& m1, Matrix<float>& m2) {
  const float lr = static_cast<float>(config_.lr);
  if (config_.optimizer == Optimizer::kSgd) {
    for (std::size_t s = 0; s < grad.ids.size(); ++s)
      table.row(grad.ids[s]) -= lr * grad.rows.row(static_cast<Eigen::Index>(s));
    return;
  }
  // Lazy Adam: moments of untouched rows are left as they are.
  const double t = static_cast<double>(steps_);
  const float b1 = static_cast<float>(config_.beta1);
  const float b2 = static_cast<float>(config_.beta2);
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(config_.beta1, t)));
  const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(config_.beta2, t)));
  const float eps = static_cast<float>(config_.eps);
  for (std::size_t s = 0; s < grad.ids.size(); ++s) {
    const WordId id = grad.ids[s];
    const auto g = grad.rows.row(static_cast<Eigen::Index>(s)).array();
    m1.row(id).array() = b1 * m1.row(id).array() + (1.0f - b1) * g;
    m2.row(id).array() = b2 * m2.row(id).array() + (1.0f - b2) * g.square();
    table.row(id).array() -= lr * (c1 * m1.row(id).array()) / ((c2 * m2.row(id).array()).sqrt() + eps);
  }
}

LossBreakdown Trainer::step(std::span<const SentencePair> batch, std::uint64_t epoch) {
  touched_src_.clear();
  touched_tgt_.clear();
  if (batch.empty()) return {};
  const auto& hp = config_.hp;
  const std::size_t B = batch.size();
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config_.threads), B);

  std::vector<Buffers> bufs(workers);
  if (workers == 1) {
    accumulate(batch, epoch, 0, B, bufs[0]);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (B + workers - 1) / workers;
    for (std::size_t t = 0; t < workers; ++t) {
      const std::size_t begin = std::min(B, t * chunk);
      const std::size_t end = std::min(B, begin + chunk);
      pool.emplace_back([&, t, begin, end] { accumulate(batch, epoch, begin, end, bufs[t]); });
    }
    for (auto& th : pool) th.join();
  }

  for (const auto& b : bufs)
    if (b.bad_pair >= 0) throw NumericError(static_cast<std::size_t>(b.bad_pair), "loss");

  LossBreakdown loss;
  for (std::size_t t = 0; t < workers; ++t) {
    loss += bufs[t].loss;
    if (t == 0) continue;
    for (std::size_t p = 0; p < B; ++p) {
      bufs[0].dx[p] += bufs[t].dx[p];
      bufs[0].dy[p] += bufs[t].dy[p];
    }
  }

  // Collect touched rows in ascending id order so the update order is fixed.
  auto collect = [&](bool source, std::vector<int>& slot, std::vector<WordId>& ids) {
    for (const auto& pair : batch)
      for (WordId id : source ? pair.src : pair.tgt) slot[static_cast<std::size_t>(id)] = 0;
    for (const auto& pair : batch)
      for (WordId id : source ? pair.src : pair.tgt)
        if (slot[static_cast<std::size_t>(id)] == 0) {
          ids.push_back(id);
          slot[static_cast<std::size_t>(id)] = 1;
        }
    std::sort(ids.begin(), ids.end());
    for (std::size_t s = 0; s < ids.size(); ++s) slot[static_cast<std::size_t>(ids[s])] = static_cast<int>(s);
  };
  collect(true, slot_src_, touched_src_);
  collect(false, slot_tgt_, touched_tgt_);

  SparseGrad gs{slot_src_, touched_src_, Matrix<float>::Zero(static_cast<Eigen::Index>(touched_src_.size()), params_.dim())};
  SparseGrad gt{slot_tgt_, touched_tgt_, Matrix<float>::Zero(static_cast<Eigen::Index>(touched_tgt_.size()), params_.dim())};
  for (std::size_t p = 0; p < B; ++p) {
    const Matrix<float> ex = contextualize(bufs[0].dx[p], hp.win);
    const Matrix<float> ey = contextualize(bufs[0].dy[p], hp.win);
    for (std::size_t i = 0; i < batch[p].src.size(); ++i)
      gs.rows.row(slot_src_[static_cast<std::size_t>(batch[p].src[i])]) += ex.row(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < batch[p].tgt.size(); ++j)
      gt.rows.row(slot_tgt_[static_cast<std::size_t>(batch[p].tgt[j])]) += ey.row(static_cast<Eigen::Index>(j));
  }

  ++steps_;
  apply(gs, params_.src, m1_src_, m2_src_);
  apply(gt, params_.tgt, m1_tgt_, m2_tgt_);

#ifndef NDEBUG
  for (WordId id : touched_src_)
    if (!params_.src.row(id).allFinite()) throw NumericError(batch.front().index, "source embedding update");
  for (WordId id : touched_tgt_)
    if (!params_.tgt.row(id).allFinite()) throw NumericError(batch.front().index, "target embedding update");
#endif

  for (WordId id : touched_src_) slot_src_[static_cast<std::size_t>(id)] = -1;
  for (WordId id : touched_tgt_) slot_tgt_[static_cast<std::size_t>(id)] = -1;
  return loss;
}

TrainResult train(std::span<const SentencePair> corpus, const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                  const TrainConfig& config, std::span<const GoldAlignment> dev_gold,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  config.validate();
  if (corpus.empty()) throw InputError("empty training corpus");

  TrainResult result;
  result.checkpoint.src_vocab = src_vocab;
  result.checkpoint.tgt_vocab = tgt_vocab;
  result.checkpoint.config = config;
  Trainer trainer(initial_params(src_vocab.size(), tgt_vocab.size(), config.hp.dim, config.seed), config);

  const BatchIterator batches(corpus, static_cast<std::size_t>(config.batch_size), config.seed);
  std::optional<double> best_aer;
  EmbeddingTable<float> best_params;
  int best_epoch = 0;

  for (int e = 1; e <= config.epochs; ++e) {
    EpochMetrics metrics;
    metrics.epoch = e;
    for (const auto& idx : batches.epoch(static_cast<std::uint64_t>(e))) {
      const auto batch = batches.gather(idx);
      LossBreakdown l = trainer.step(batch, static_cast<std::uint64_t>(e));
      l *= static_cast<double>(batch.size());
      metrics.loss += l;
    }
    metrics.loss *= 1.0 / static_cast<double>(corpus.size());

    if (!dev_gold.empty()) {
      AlignOptions opts;
      opts.threads = config.threads;
      const auto aligned = align_corpus(trainer.params(), config.hp.win, corpus, opts);
      metrics.dev_aer = compute_metrics(aligned, dev_gold).aer;
      if (!best_aer || *metrics.dev_aer < *best_aer) {
        best_aer = metrics.dev_aer;
        if (config.keep_best) best_params = trainer.params();
        best_epoch = e;
      }
    }
    if (on_epoch) on_epoch(metrics);
    result.log.push_back(metrics);
  }

  if (config.keep_best && best_aer) {
    result.checkpoint.params = std::move(best_params);
    result.checkpoint.epoch = best_epoch;
  } else {
    result.checkpoint.params = trainer.params();
    result.checkpoint.epoch = config.epochs;
  }
  return result;
}

void write_metrics_header(std::ostream& out, bool with_dev) {
  out << "epoch\tloss_s2t\tloss_t2s\tloss_disagree\ttotal";
  if (with_dev) out << "\tdev_aer";
  out << '\n';
}

void write_metrics_row(std::ostream& out, const EpochMetrics& m) {
  const auto prec = out.precision();
  out << std::setprecision(9) << m.epoch << '\t' << m.loss.s2t << '\t' << m.loss.t2s << '\t' << m.loss.disagree
      << '\t' << m.loss.total;
  if (m.dev_aer) out << '\t' << *m.dev_aer;
  out << '\n';
  out.precision(prec);
}

EmbeddingSide parse_embedding_side(std::string_view name) {
  if (name == "src") return EmbeddingSide::kSrc;
  if (name == "tgt") return EmbeddingSide::kTgt;
  if (name == "joint") return EmbeddingSide::kJoint;
  throw InputError("unknown embedding side '" + std::string(name) + "' (expected src, tgt or joint)");
}

EmbeddingSpace export_embeddings(const Checkpoint& ckpt, EmbeddingSide side) {
  EmbeddingSpace space;
  const auto& p = ckpt.params;
  switch (side) {
    case EmbeddingSide::kSrc:
      space.tokens = ckpt.src_vocab.tokens();
      space.vectors = p.src;
      break;
    case EmbeddingSide::kTgt:
      space.tokens = ckpt.tgt_vocab.tokens();
      space.vectors = p.tgt;
      break;
    case EmbeddingSide::kJoint:
      for (const auto& t : ckpt.src_vocab.tokens()) space.tokens.push_back(std::string(kSrcPrefix) + t);
      for (const auto& t : ckpt.tgt_vocab.tokens()) space.tokens.push_back(std::string(kTgtPrefix) + t);
      space.vectors.resize(p.src.rows() + p.tgt.rows(), p.src.cols());
      space.vectors.topRows(p.src.rows()) = p.src;
      space.vectors.bottomRows(p.tgt.rows()) = p.tgt;
      break;
  }
  return space;
}

}  // namespace slua
