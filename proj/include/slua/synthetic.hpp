#ifndef SLUA_SYNTHETIC_HPP
#define SLUA_SYNTHETIC_HPP

#include <cstdint>
#include <vector>

#include "slua/corpus.hpp"

namespace slua {

/// Parallel text generated from a one-to-one dictionary: source word `sK`
/// translates to target word `tK`. Each target sentence is the translation
/// of its source sentence under a random permutation, so the gold alignment
/// is known exactly. Words within one sentence are distinct and drawn with
/// Zipfian weights (exponent `zipf`, 0 = uniform).
struct SyntheticSpec {
  int vocab = 100;
  std::size_t pairs = 2000;
  int min_len = 5;
  int max_len = 15;
  double zipf = 0.5;
  // Unaligned filler words: `fillers` types per side (`fK` / `gK`); each
  // sentence side receives Binomial(max_fillers, filler_rate) of them.
  int fillers = 0;
  int max_fillers = 0;
  double filler_rate = 0.5;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::vector<TokenPair> text;
  std::vector<GoldAlignment> gold;  // sure = possible = the permutation
};

SyntheticCorpus make_dictionary_corpus(const SyntheticSpec& spec);

}  // namespace slua

#endif  // SLUA_SYNTHETIC_HPP
