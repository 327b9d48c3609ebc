#include "slua/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace slua {

SyntheticCorpus make_dictionary_corpus(const SyntheticSpec& spec) {
  if (spec.vocab < 1 || spec.min_len < 1 || spec.max_len < spec.min_len || spec.max_len > spec.vocab)
    throw InputError("synthetic corpus: need 1 <= min_len <= max_len <= vocab");
  std::mt19937_64 rng(spec.seed);
  std::vector<double> weight(static_cast<std::size_t>(spec.vocab));
  for (int w = 0; w < spec.vocab; ++w) weight[static_cast<std::size_t>(w)] = 1.0 / std::pow(w + 1.0, spec.zipf);
  std::uniform_int_distribution<int> len_dist(spec.min_len, spec.max_len);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticCorpus out;
  out.text.reserve(spec.pairs);
  out.gold.reserve(spec.pairs);
  std::vector<int> words;
  std::vector<int> perm;
  std::vector<double> keys(weight.size());
  for (std::size_t p = 0; p < spec.pairs; ++p) {
    const int len = len_dist(rng);
    // Weighted sampling without replacement: smallest -log(u)/w keys.
    for (std::size_t w = 0; w < weight.size(); ++w) keys[w] = -std::log(1.0 - unit(rng)) / weight[w];
    words.resize(weight.size());
    std::iota(words.begin(), words.end(), 0);
    std::partial_sort(words.begin(), words.begin() + len, words.end(),
                      [&](int a, int b) { return keys[static_cast<std::size_t>(a)] < keys[static_cast<std::size_t>(b)]; });
    words.resize(static_cast<std::size_t>(len));

    perm.resize(static_cast<std::size_t>(len));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    TokenPair pair;
    pair.tgt.resize(static_cast<std::size_t>(len));
    GoldAlignment gold;
    gold.index = p;
    for (int i = 0; i < len; ++i) {
      const int w = words[static_cast<std::size_t>(i)];
      pair.src.push_back("s" + std::to_string(w));
      pair.tgt[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = "t" + std::to_string(w);
      gold.sure.push_back({i, perm[static_cast<std::size_t>(i)]});
    }
    if (spec.fillers > 0 && spec.max_fillers > 0) {
      std::binomial_distribution<int> count(spec.max_fillers, spec.filler_rate);
      std::uniform_int_distribution<int> type(0, spec.fillers - 1);
      auto insert = [&](Tokens& side, const char* prefix, bool source) {
        const int n = count(rng);
        for (int f = 0; f < n; ++f) {
          std::uniform_int_distribution<std::size_t> where(0, side.size());
          const auto at = static_cast<int>(where(rng));
          side.insert(side.begin() + at, prefix + std::to_string(type(rng)));
          for (Link& l : gold.sure) {
            int& pos = source ? l.src : l.tgt;
            if (pos >= at) ++pos;
          }
        }
      };
      insert(pair.src, "f", true);
      insert(pair.tgt, "g", false);
    }
    std::sort(gold.sure.begin(), gold.sure.end());
    gold.possible = gold.sure;
    out.text.push_back(std::move(pair));
    out.gold.push_back(std::move(gold));
  }
  return out;
}

}  // namespace slua
