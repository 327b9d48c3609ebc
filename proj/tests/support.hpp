#ifndef SLUA_TESTS_SUPPORT_HPP
#define SLUA_TESTS_SUPPORT_HPP

#include <vector>

#include "slua/corpus.hpp"
#include "slua/synthetic.hpp"

namespace slua::testing {

struct Prepared {
  std::vector<TokenPair> text;
  std::vector<GoldAlignment> gold;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
  std::vector<SentencePair> pairs;
};

inline Prepared prepare(const SyntheticSpec& spec) {
  auto synth = make_dictionary_corpus(spec);
  Prepared out;
  std::vector<Tokens> src, tgt;
  for (const auto& p : synth.text) {
    src.push_back(p.src);
    tgt.push_back(p.tgt);
  }
  out.src_vocab = Vocabulary::build(src);
  out.tgt_vocab = Vocabulary::build(tgt);
  out.pairs = encode_corpus(synth.text, out.src_vocab, out.tgt_vocab);
  out.text = std::move(synth.text);
  out.gold = std::move(synth.gold);
  return out;
}

}  // namespace slua::testing

#endif  // SLUA_TESTS_SUPPORT_HPP
