#ifndef SLUA_CORPUS_HPP
#define SLUA_CORPUS_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "slua/common.hpp"

namespace slua {

using Tokens = std::vector<std::string>;

/// Token <-> id bijection for one language.
///
/// Id 0 is reserved for the unknown word. Ids are assigned by descending
/// corpus frequency, ties broken by first occurrence. Tokens seen fewer than
/// `min_count` times are not given an id and encode as 0; their occurrences
/// are accumulated in `count(0)`.
class Vocabulary {
 public:
  static constexpr WordId kUnk = 0;
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  static Vocabulary build(std::span<const Tokens> lines, int min_count = 1);

  // Rebuilds a vocabulary from an explicit id-ordered table. Entry 0 must be
  // the unknown word.
  static Vocabulary from_entries(std::vector<std::string> tokens,
                                 std::vector<std::uint64_t> counts, int min_count);

  WordId id(std::string_view token) const;
  const std::string& token(WordId id) const;
  std::uint64_t count(WordId id) const { return counts_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  int min_count() const { return min_count_; }
  bool contains(std::string_view token) const;

  std::vector<WordId> encode(std::span<const std::string> tokens) const;
  Tokens decode(std::span<const WordId> ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  // FNV-1a over the id-ordered token list. Two vocabularies encode text the
  // same way iff their fingerprints match (modulo hash collisions).
  std::uint64_t fingerprint() const;

  // One `token<TAB>id<TAB>count` line per entry, in id order.
  void dump(std::ostream& out) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.counts_ == b.counts_ && a.min_count_ == b.min_count_;
  }

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };

  void index();

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, WordId, StringHash, std::equal_to<>> ids_;
  int min_count_ = 1;
};

struct SentencePair {
  std::vector<WordId> src;
  std::vector<WordId> tgt;
  std::size_t index = 0;
};

/// A source/target sentence before vocabulary lookup.
struct TokenPair {
  Tokens src;
  Tokens tgt;
};

struct Link {
  int src = 0;
  int tgt = 0;

  friend auto operator<=>(const Link&, const Link&) = default;
};

/// Gold links for one sentence pair; `possible` always contains `sure`.
struct GoldAlignment {
  std::vector<Link> sure;
  std::vector<Link> possible;
  std::size_t index = 0;
};

enum class ParallelFormat { kPipes, kTwoFiles };

struct LoadOptions {
  bool lowercase = false;
  // Receives one message per dropped line. Defaults to stderr when empty.
  std::function<void(const std::string&)> warn;
};

// `src ||| tgt` per line. Lines with an empty side are dropped.
std::vector<TokenPair> load_parallel(std::istream& in, const std::string& source_name,
                                     const LoadOptions& options = {});
std::vector<TokenPair> load_parallel(const std::string& path, const LoadOptions& options = {});

// Two line-aligned files.
std::vector<TokenPair> load_parallel(std::istream& src, std::istream& tgt,
                                     const std::string& source_name,
                                     const LoadOptions& options = {});
std::vector<TokenPair> load_parallel(const std::string& src_path, const std::string& tgt_path,
                                     const LoadOptions& options = {});

// Splits one `|||` line; throws FormatError when the delimiter is missing.
TokenPair parse_pipes_line(std::string_view line, const std::string& source_name,
                           std::size_t line_no);

Tokens split_tokens(std::string_view text);

// Simple per-codepoint lowercasing of UTF-8 text.
std::string lowercase_utf8(std::string_view text);

std::vector<SentencePair> encode_corpus(std::span<const TokenPair> text, const Vocabulary& src,
                                        const Vocabulary& tgt);

/// Encoded pairs tagged with the fingerprints of the vocabularies used.
struct EncodedCorpus {
  std::vector<SentencePair> pairs;
  std::uint64_t src_vocab = 0;
  std::uint64_t tgt_vocab = 0;
};

EncodedCorpus encode(std::span<const TokenPair> text, const Vocabulary& src, const Vocabulary& tgt);

/// NAACL 2003 shared-task gold format: `sentence src tgt [S|P]` per line.
std::vector<GoldAlignment> load_gold_naacl(std::istream& in, bool one_indexed,
                                           const std::string& source_name = "<gold>");
std::vector<GoldAlignment> load_gold_naacl(const std::string& path, bool one_indexed);

/// Shuffled mini-batches. The order of epoch `e` depends only on (seed, e).
class BatchIterator {
 public:
  BatchIterator(std::span<const SentencePair> corpus, std::size_t batch_size, std::uint64_t seed);

  // Permutation of corpus positions for one epoch.
  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;

  // Batches of one epoch as corpus positions; the last batch may be short.
  std::vector<std::vector<std::size_t>> epoch(std::uint64_t epoch) const;

  std::vector<SentencePair> gather(std::span<const std::size_t> batch) const;

  std::size_t batch_size() const { return batch_size_; }
  std::size_t batches_per_epoch() const;

 private:
  std::span<const SentencePair> corpus_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

}  // namespace slua

#endif  // SLUA_CORPUS_HPP
