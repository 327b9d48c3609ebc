#ifndef SLUA_TRAIN_HPP
#define SLUA_TRAIN_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "slua/checkpoint.hpp"
#include "slua/corpus.hpp"
#include "slua/eval.hpp"
#include "slua/model.hpp"

namespace slua {

/// Draws k negatives for every position of one side of `batch[pair]`.
///
/// Sentence scope samples uniformly from the other positions of the same
/// sentence (with replacement); a one-word sentence falls back to batch
/// scope. Batch scope samples uniformly from every position of every
/// sentence in the batch except the query itself. If the batch holds a
/// single one-word sentence the query is its own negative.
std::vector<NegativeRef> sample_side_negatives(std::span<const std::size_t> lengths, std::size_t pair, int k,
                                               NegativeScope scope, std::mt19937_64& rng);

NegativeSamples sample_negatives(std::span<const SentencePair> batch, std::size_t pair, int k,
                                 NegativeScope scope, std::mt19937_64& rng);

// Independent stream per (seed, epoch, pair) so sampling does not depend on
// batch composition order or thread count.
std::mt19937_64 pair_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t pair_index);

EmbeddingTable<float> initial_params(std::size_t src_vocab, std::size_t tgt_vocab, int dim, std::uint64_t seed);

/// Owns parameters and optimizer state; one `step` per mini-batch.
class Trainer {
 public:
  Trainer(EmbeddingTable<float> params, TrainConfig config);

  /// Mean-over-pairs loss and gradient for `batch`, followed by one update
  /// of the rows the batch touched. Throws NumericError on a non-finite loss.
  LossBreakdown step(std::span<const SentencePair> batch, std::uint64_t epoch);

  const EmbeddingTable<float>& params() const { return params_; }
  EmbeddingTable<float>& params() { return params_; }
  const TrainConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }

  // Word ids whose rows the last step updated, ascending.
  const std::vector<WordId>& touched_src() const { return touched_src_; }
  const std::vector<WordId>& touched_tgt() const { return touched_tgt_; }

 private:
  struct SparseGrad;
  struct Buffers;

  void accumulate(std::span<const SentencePair> batch, std::uint64_t epoch, std::size_t begin, std::size_t end,
                  Buffers& buf) const;
  void apply(SparseGrad& grad, Matrix<float>& table, Matrix<float>& m1, Matrix<float>& m2);

  EmbeddingTable<float> params_;
  TrainConfig config_;
  Matrix<float> m1_src_, m2_src_, m1_tgt_, m2_tgt_;
  std::vector<int> slot_src_, slot_tgt_;
  std::vector<WordId> touched_src_, touched_tgt_;
  std::uint64_t steps_ = 0;
};

struct EpochMetrics {
  int epoch = 0;
  LossBreakdown loss;
  std::optional<double> dev_aer;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> log;
};

/// Runs `config.epochs` epochs of mini-batch training. With `dev_gold` the
/// corpus is aligned (grow-diag) after every epoch and its AER logged;
/// `config.keep_best` then returns the best-AER parameters. Deterministic
/// for a fixed seed and threads = 1.
TrainResult train(std::span<const SentencePair> corpus, const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                  const TrainConfig& config, std::span<const GoldAlignment> dev_gold = {},
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// `epoch loss_s2t loss_t2s loss_disagree total [dev_aer]`, tab separated.
void write_metrics_header(std::ostream& out, bool with_dev);
void write_metrics_row(std::ostream& out, const EpochMetrics& m);

enum class EmbeddingSide { kSrc, kTgt, kJoint };
EmbeddingSide parse_embedding_side(std::string_view name);

/// Vocabulary-ordered rows. Joint mode stacks source then target rows with
/// `src:` / `tgt:` prefixes on the tokens.
EmbeddingSpace export_embeddings(const Checkpoint& ckpt, EmbeddingSide side);

}  // namespace slua

#endif  // SLUA_TRAIN_HPP
