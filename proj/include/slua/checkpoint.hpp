#ifndef SLUA_CHECKPOINT_HPP
#define SLUA_CHECKPOINT_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "slua/corpus.hpp"
#include "slua/model.hpp"

namespace slua {

enum class Optimizer : std::uint8_t { kSgd = 0, kAdam = 1 };
enum class NegativeScope : std::uint8_t { kSentence = 0, kBatch = 1 };

Optimizer parse_optimizer(std::string_view name);
NegativeScope parse_negative_scope(std::string_view name);
std::string_view to_string(Optimizer o);
std::string_view to_string(NegativeScope s);

struct TrainConfig {
  Hyperparams hp;
  double lr = 1e-3;
  int epochs = 3;
  int batch_size = 256;
  std::uint64_t seed = 1;
  Optimizer optimizer = Optimizer::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  NegativeScope neg_scope = NegativeScope::kBatch;
  int threads = 1;
  int min_count = 1;
  // Keep the parameters of the epoch with the lowest dev AER.
  bool keep_best = false;

  void validate() const;
};

/// Everything needed to align new text with a trained model.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  EmbeddingTable<float> params;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
  TrainConfig config;
  int epoch = 0;
  std::uint32_t format_version = kFormatVersion;
};

/// Little-endian binary: magic `SLUA`, format version, vocabulary
/// fingerprints, config, epoch, both vocabularies, then both matrices
/// row-major as float32.
void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(std::istream& in, const std::string& source_name = "<checkpoint>");
Checkpoint load_checkpoint(const std::string& path);

bool operator==(const TrainConfig& a, const TrainConfig& b);
bool operator==(const Checkpoint& a, const Checkpoint& b);

}  // namespace slua

#endif  // SLUA_CHECKPOINT_HPP
